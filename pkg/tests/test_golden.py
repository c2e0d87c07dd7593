"""
Tests for the printed reference values.
"""

import numpy as np
import pytest

from app.combinatorics import golden
from app.combinatorics.cancellative import alpha_curve
from app.errors import GoldenMismatch


class TestGoldenSuite:
    """Tests for golden_suite."""

    def test_suite_passes(self):
        """Test that every printed value is recomputed."""
        report = golden.golden_suite()
        assert "M(4)" in report.checks
        assert "M(8)^-1" in report.checks
        assert sorted(report.alpha_prime) == list(range(2, 9))

    def test_alpha_prime_values_negative(self):
        """Test alpha'_l(1) < 0 for l = 2..8."""
        report = golden.golden_suite()
        assert all(value < 0 for value in report.alpha_prime.values())

    def test_printed_n4_curve(self):
        """Test the printed alpha_l(q) for n = 4 at a few points."""
        qs = np.array([0.0, 0.25, 0.5, 1.0])
        expected = np.array([golden.alpha4_printed(q) for q in qs])
        np.testing.assert_allclose(alpha_curve(4, qs), expected, atol=1e-14)

    def test_mismatch_names_the_check(self, monkeypatch):
        """Test that a corrupted reference raises GoldenMismatch with its name."""
        corrupted = (golden.M4[0],) + golden.M4[1:3] + ((1, 0, 1, 1),)
        monkeypatch.setattr(golden, "M4", corrupted)
        with pytest.raises(GoldenMismatch) as excinfo:
            golden.golden_suite()
        assert "M(4)" in excinfo.value.message
        assert excinfo.value.exit_code == 3
