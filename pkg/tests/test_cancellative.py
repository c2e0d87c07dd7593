"""
Tests for cancellativity certificates.
"""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.combinatorics.cancellative import (
    alpha_at,
    alpha_curve,
    alpha_prime_at_1,
    alpha_prime_exact,
    alpha_prime_numeric,
    build_M,
    cancellative_rates,
    certify,
    find_qc,
    invert_M,
    reconstruct_rates,
    rep_from_alpha,
)
from app.errors import AlgebraError, NegativeAlpha


class TestDualMatrix:
    """Tests for M(k, j) and its exact inverse."""

    def test_n2(self):
        """Test the 2 x 2 matrix by hand."""
        assert build_M(2).entries == ((1, 2), (1, 0))

    def test_first_row_is_identity_count(self):
        """Test M(1, j) = j."""
        M = build_M(6)
        assert M.entries[0] == tuple(range(1, 7))

    @pytest.mark.parametrize("n", [2, 3, 5, 8, 12])
    def test_inverse_is_exact(self, n):
        """Test that M M^-1 is the identity over the rationals."""
        M = build_M(n)
        inverse = invert_M(M)
        for i in range(n):
            for j in range(n):
                entry = sum(M[i, k] * inverse[k][j] for k in range(n))
                assert entry == (1 if i == j else 0)
        assert all(isinstance(c, Fraction) for row in inverse for c in row)

    def test_rejects_out_of_range_n(self):
        """Test that n outside [2, 16] is a usage error."""
        with pytest.raises(AlgebraError) as excinfo:
            build_M(1)
        assert excinfo.value.exit_code == 2


class TestAlpha:
    """Tests for alpha = a M^-1."""

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_voter_model_is_first_unit_vector(self, n):
        """Test that the linear voter model has alpha = (1/n, 0, ..., 0)."""
        alpha = alpha_at(n, q=1.0)
        expected = np.zeros(n)
        expected[0] = 1.0 / n
        np.testing.assert_allclose(alpha, expected, atol=1e-12)

    def test_explicit_rates_match_q(self):
        """Test that explicit q-voter rates give the same alpha as the exponent."""
        a = (np.arange(1, 5) / 4) ** 0.5
        np.testing.assert_allclose(alpha_at(4, a=a), alpha_at(4, q=0.5))

    def test_curve_matches_pointwise(self):
        """Test that alpha_curve agrees with alpha_at row by row."""
        qs = np.array([0.0, 0.3, 0.9])
        curve = alpha_curve(5, qs)
        for row, q in zip(curve, qs):
            np.testing.assert_allclose(row, alpha_at(5, q=q), atol=1e-14)

    def test_rejects_all_zero_rates(self):
        """Test that a = 0 is rejected."""
        with pytest.raises(AlgebraError):
            alpha_at(3, a=[0.0, 0.0, 0.0])

    def test_needs_rates_or_q(self):
        """Test that neither a nor q is a usage error."""
        with pytest.raises(AlgebraError):
            alpha_at(3)


class TestDerivatives:
    """Tests for alpha'(1)."""

    @pytest.mark.parametrize("n", [3, 4, 6, 8])
    def test_exact_forms_match_finite_difference(self, n):
        """Test the prime-log closed forms against a central difference."""
        exact = np.array([form.log_sum for form in alpha_prime_exact(n)])
        np.testing.assert_allclose(exact, alpha_prime_numeric(n), atol=1e-7)

    def test_single_log_matches_log_sum(self):
        """Test that both closed forms agree at n = 8."""
        for form in alpha_prime_exact(8)[1:]:
            assert form.single_log == pytest.approx(form.log_sum, abs=1e-12)

    def test_n8_uses_closed_forms(self):
        """Test that alpha_prime_at_1(8) has negative entries for l >= 2."""
        values = alpha_prime_at_1(8)
        assert np.all(values[1:] < 0)


class TestFindQc:
    """Tests for the critical exponent search."""

    def test_n2_is_zero(self):
        """Test that every q keeps alpha nonnegative for n = 2."""
        # alpha_1 = 1/2, alpha_2 = 2^-q - 1/2
        assert find_qc(2) == 0.0

    def test_n4_is_zero(self):
        """Test q_c(4) = 0 (alpha > 0 on [0, 1))."""
        assert find_qc(4) == 0.0

    def test_alpha_nonnegative_above_qc(self):
        """Test that alpha >= 0 on [q_c, 1] and fails just below when q_c > 0."""
        for n in range(2, 9):
            qc = find_qc(n)
            qs = np.linspace(qc, 1.0, 200)
            assert alpha_curve(n, qs).min() >= -1e-9
            if qc > 0:
                assert alpha_at(n, q=max(qc - 1e-4, 0.0)).min() < 0

    def test_rejects_large_n(self):
        """Test that the search is limited to n <= 8."""
        with pytest.raises(AlgebraError):
            find_qc(9)


class TestRepresentation:
    """Tests for (k0, beta0) and the round trip back to rates."""

    def test_voter_representation(self):
        """Test k0 = 1 and beta0 uniform on singletons for the voter model."""
        n = 4
        rep = rep_from_alpha(alpha_at(n, q=1.0), n)
        assert rep.k0 == pytest.approx(1.0)
        for position in range(1, n + 1):
            assert rep.beta([position]) == pytest.approx(1.0 / n)
        assert rep.beta([0]) == 0.0

    def test_beta0_is_probability(self):
        """Test that beta0 sums to one and is nonnegative."""
        rep = rep_from_alpha(alpha_at(4, q=0.5), 4)
        assert rep.beta0.sum() == pytest.approx(1.0)
        assert rep.beta0.min() >= 0.0

    def test_rejects_negative_alpha(self):
        """Test that a negative alpha has no representation."""
        with pytest.raises(NegativeAlpha):
            rep_from_alpha([0.5, -0.1, 0.0], 3)

    def test_rates_symmetric_in_types(self):
        """Test c(0, xi) = c(0, xi-hat) for the cancellative form."""
        n = 3
        rep = rep_from_alpha(alpha_at(n, q=0.7), n)
        rates = cancellative_rates(rep)
        full = (1 << (n + 1)) - 1
        for xi in range(full + 1):
            assert rates[xi] == pytest.approx(rates[full ^ xi], abs=1e-12)

    @given(
        st.integers(min_value=2, max_value=6).flatmap(
            lambda n: st.lists(
                st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=n, max_size=n
            ).filter(lambda xs: sum(xs) > 1e-3)
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, alpha):
        """Test that rates rebuilt from (k0, beta0) equal alpha M."""
        n = len(alpha)
        rep = rep_from_alpha(alpha, n)
        a = reconstruct_rates(rep, n)
        M = np.array(build_M(n).entries, dtype=float)
        np.testing.assert_allclose(a, np.asarray(alpha) @ M, atol=1e-9)


class TestCertify:
    """Tests for certify."""

    def test_cancellative_qvoter(self):
        """Test a certificate with zero residual for n = 4, q = 0.5."""
        certificate = certify(4, q=0.5)
        assert certificate.cancellative
        assert certificate.residual < 1e-10
        assert sum(certificate.beta0.values()) == pytest.approx(1.0)

    def test_non_cancellative_rates(self):
        """Test that rates with a negative alpha get no certificate."""
        certificate = certify(4, a=[0.0, 0.0, 0.0, 1.0])
        assert not certificate.cancellative
        assert certificate.k0 is None
        np.testing.assert_allclose(certificate.alpha, [0.125, -0.125, 0.125, -0.125], atol=1e-12)
