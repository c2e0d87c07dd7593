"""
Tests for the partition inequality and closed-form drifts.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from app.combinatorics.drift import (
    SubsetFunction,
    closed_form_drifts,
    detpi_check,
    dge3_drift,
    exhaustive_detpi,
    inclusion_exclusion,
    linear_weights,
    mobius_sum,
    signed_counts,
    standard_weight_functions,
)
from app.combinatorics.partitions import SetPartition, bell_number
from app.errors import EstimationError, InequalityViolated


@st.composite
def three_cell_samples(draw, n=4):
    """Histograms of outer-cell pairs (A1, A2), disjoint and nonempty."""
    counts = {}
    for _ in range(draw(st.integers(min_value=1, max_value=6))):
        labels = draw(st.lists(st.integers(min_value=0, max_value=2), min_size=n, max_size=n))
        a1 = sum(1 << i for i, label in enumerate(labels) if label == 1)
        a2 = sum(1 << i for i, label in enumerate(labels) if label == 2)
        if a1 and a2:
            counts[(a1, a2)] = counts.get((a1, a2), 0) + draw(st.integers(min_value=1, max_value=5))
    return counts


class TestSubsetFunction:
    """Tests for SubsetFunction."""

    def test_from_counts(self):
        """Test that values depend on |A| only."""
        r = SubsetFunction.from_counts(3, lambda k: k * k)
        assert r(0b101) == 4
        assert r(0b111) == 9

    def test_wrong_length(self):
        """Test that the value table must have 2^n entries."""
        with pytest.raises(ValueError):
            SubsetFunction(n=2, values=(0, 1, 1))

    def test_subadditivity(self):
        """Test strict subadditivity of the constant and its failure for linear weights."""
        functions = standard_weight_functions(4)
        assert functions["constant"].strictly_subadditive()
        assert functions["qvoter"].strictly_subadditive()
        assert not linear_weights(4).strictly_subadditive()

    def test_exactness(self):
        """Test that rational families stay exact and q-voter weights are floats."""
        functions = standard_weight_functions(4)
        assert functions["affine"].exact
        assert not functions["qvoter"].exact


class TestPartitionInequality:
    """Tests for the partition inequality."""

    @pytest.mark.parametrize("name", ["qvoter", "lotka_volterra", "affine", "geometric", "constant"])
    def test_standard_families_hold(self, name):
        """Test that the standard families pass on every partition for |N| = 4."""
        report = exhaustive_detpi(4, standard_weight_functions(4)[name])
        assert report.ok
        assert report.partitions == bell_number(5)

    def test_linear_weights_are_equalities(self):
        """Test that r(A) = |A| gives equality on every partition."""
        report = exhaustive_detpi(4, linear_weights(4))
        assert report.ok
        assert report.equalities == bell_number(5)
        assert report.strict == 0

    def test_constant_is_strict_beyond_two_cells(self):
        """Test that the constant function is strict on a three-cell partition."""
        partition = SetPartition.from_labels([0, 1, 2, 0, 0])
        result = detpi_check(standard_weight_functions(4)["constant"], partition)
        assert result.strict
        assert (result.lhs, result.rhs) == (2, 1)

    def test_violation_has_witness(self):
        """Test that a superadditive function violates the inequality."""
        r = SubsetFunction.from_counts(3, lambda k: Fraction(k * k))
        partition = SetPartition.from_labels([0, 1, 2, 3])
        with pytest.raises(InequalityViolated) as excinfo:
            detpi_check(r, partition)
        assert excinfo.value.witness["rhs"] == 9

    def test_size_limit(self):
        """Test that N-bar larger than 10 sites is refused."""
        with pytest.raises(EstimationError):
            exhaustive_detpi(10, SubsetFunction.from_counts(10, lambda k: 1))


class TestClosedFormDrifts:
    """Tests for the exact identities between the closed-form drifts."""

    @given(three_cell_samples())
    @settings(max_examples=40, deadline=None)
    def test_identities_are_exact(self, three_cell):
        """Test the linear, constant, affine and geometric identities on arbitrary counts."""
        drifts = closed_form_drifts(4, three_cell, {}, samples=100, log_t=3.0)
        assert drifts.linear_residual == 0
        assert drifts.constant_residual == 0
        assert drifts.affine_minus_kappa == 0
        assert drifts.geometric_minus_scaled_lv == 0

    def test_signed_counts(self):
        """Test c(A) for one three-cell sample."""
        counts = signed_counts({(0b01, 0b10): 2}, 2)
        assert counts == [0, 2, 2, -2]

    def test_theta_scale(self):
        """Test that Theta_3 of the constant function is kappa."""
        drifts = closed_form_drifts(4, {(0b0001, 0b0010): 5}, {}, samples=50, log_t=2.0)
        assert drifts.theta3["constant"] == pytest.approx(drifts.kappa)
        assert drifts.kappa == pytest.approx(5 * 8 / 50)

    def test_lotka_volterra_two_cell(self):
        """Test the two-cell Lotka-Volterra drift with asymmetric betas."""
        drifts = closed_form_drifts(4, {}, {0b0011: 10}, samples=100, log_t=1.5, beta0=2.0, beta1=1.0)
        assert drifts.theta2_lv == pytest.approx(1.0 * 0.25 * 10 * 1.5 / 100)

    def test_no_samples(self):
        """Test that zero samples is an error."""
        with pytest.raises(EstimationError):
            closed_form_drifts(4, {}, {}, samples=0, log_t=1.0)


class TestDge3:
    """Tests for the d >= 3 drift functional."""

    def test_inclusion_exclusion_inverts_mobius(self):
        """Test that summing beta over subsets of B recovers r_|B| for B != N."""
        n = 3
        r_counts = [0, Fraction(1, 2), Fraction(2, 3), Fraction(1, 4)]
        beta, delta = inclusion_exclusion(n, r_counts)
        for b in range(1, (1 << n) - 1):
            assert mobius_sum(beta, b) == r_counts[bin(b).count("1")]
            assert mobius_sum(delta, b) == r_counts[n - bin(b).count("1")]

    def test_all_singletons(self):
        """Test that the discrete partition contributes sum_z beta({z}) = n r_1."""
        n = 2
        partitions = {(0b001, 0b010, 0b100): 10}
        drift = dge3_drift(n, [0, 1, 1], partitions, samples=10)
        assert drift.theta == pytest.approx(2.0)
        assert drift.std_error == 0.0

    def test_bracket_orders_bounds(self):
        """Test that theta_lower <= theta_upper with a second horizon."""
        n = 2
        r_counts = [0, 1.0, 0.5]
        early = {(0b001, 0b110): 3, (0b001, 0b010, 0b100): 7}
        late = {(0b001, 0b110): 6, (0b001, 0b010, 0b100): 4}
        drift = dge3_drift(n, r_counts, early, 10, bracket=late, bracket_samples=10)
        assert drift.theta_lower <= drift.theta_upper
        assert drift.theta in (drift.theta_lower, drift.theta_upper)

    def test_needs_two_samples(self):
        """Test that a single sample is refused."""
        with pytest.raises(EstimationError):
            dge3_drift(2, [0, 1, 1], {(0b111,): 1}, samples=1)
