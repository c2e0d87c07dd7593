"""
Tests for neighbourhoods and walk kernels.
"""

from fractions import Fraction

import pytest

from app.errors import (
    AnisotropicCovariance,
    ContainsOrigin,
    KernelAxiomError,
    NotAProbability,
    NotIrreducible,
    NotSymmetric,
)
from app.lattice.kernels import (
    kernel_uniform,
    moore,
    nearest_neighbour,
    neighbourhood_from_preset,
    validate_kernel,
    validate_neighbourhood,
)


class TestValidateNeighbourhood:
    """Tests for the neighbourhood axioms."""

    def test_nearest_neighbour_planar(self):
        """Test that the planar nearest-neighbour set has four sites and sigma2 = 1/2."""
        nbhd = nearest_neighbour(2)
        assert len(nbhd) == 4
        assert nbhd.sigma2 == Fraction(1, 2)

    def test_nearest_neighbour_three_dimensional(self):
        """Test sigma2 = 1/3 in three dimensions."""
        nbhd = nearest_neighbour(3)
        assert len(nbhd) == 6
        assert nbhd.sigma2 == Fraction(1, 3)

    def test_moore_planar(self):
        """Test that the Moore set has eight sites and sigma2 = 3/4."""
        nbhd = moore(2)
        assert len(nbhd) == 8
        assert nbhd.sigma2 == Fraction(6, 8)

    def test_rejects_origin(self):
        """Test that a step set containing the origin is rejected."""
        with pytest.raises(ContainsOrigin):
            validate_neighbourhood(2, [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])

    def test_rejects_asymmetric(self):
        """Test that a step set missing a negation is rejected with a witness."""
        with pytest.raises(NotSymmetric) as excinfo:
            validate_neighbourhood(2, [(1, 0), (-1, 0), (0, 1)])
        assert excinfo.value.witness == (0, 1)

    def test_rejects_sublattice(self):
        """Test that steps generating a proper sublattice are rejected."""
        with pytest.raises(NotIrreducible):
            validate_neighbourhood(2, [(2, 0), (-2, 0), (0, 1), (0, -1)])

    def test_rejects_anisotropic(self):
        """Test that unequal axis variances are rejected."""
        sites = [(1, 0), (-1, 0), (0, 1), (0, -1), (2, 0), (-2, 0)]
        with pytest.raises(AnisotropicCovariance):
            validate_neighbourhood(2, sites)

    def test_rejects_correlated_axes(self):
        """Test that a nonzero off-diagonal moment is rejected."""
        sites = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)]
        with pytest.raises(AnisotropicCovariance):
            validate_neighbourhood(2, sites)

    def test_rejects_dimension_one(self):
        """Test that d = 1 is rejected."""
        with pytest.raises(KernelAxiomError):
            validate_neighbourhood(1, [(1,), (-1,)])

    def test_duplicates_collapse(self):
        """Test that repeated sites count once."""
        nbhd = validate_neighbourhood(2, [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 0)])
        assert len(nbhd) == 4

    def test_axiom_errors_exit_with_check_failure(self):
        """Test that axiom violations carry exit code 3."""
        with pytest.raises(KernelAxiomError) as excinfo:
            validate_neighbourhood(2, [(1, 0), (-1, 0)])
        assert excinfo.value.exit_code == 3

    def test_unknown_preset(self):
        """Test that an unknown preset name raises."""
        with pytest.raises(KernelAxiomError):
            neighbourhood_from_preset("hexagonal")


class TestNeighbourhoodMasks:
    """Tests for subset bitmasks over the site order."""

    def test_mask_round_trip(self):
        """Test that subset() inverts mask_of()."""
        nbhd = moore(2)
        chosen = nbhd.sites[1:4]
        assert nbhd.subset(nbhd.mask_of(chosen)) == chosen

    def test_closed_starts_with_origin(self):
        """Test that N-bar lists the origin first."""
        nbhd = nearest_neighbour(2)
        assert nbhd.closed[0] == (0, 0)
        assert len(nbhd.closed) == 5

    def test_full_mask(self):
        """Test the all-sites mask."""
        assert nearest_neighbour(2).full_mask == 0b1111


class TestWalkKernel:
    """Tests for kernel validation."""

    def test_uniform_kernel(self):
        """Test that the uniform kernel has equal weights and the neighbourhood sigma2."""
        kernel = kernel_uniform(moore(2))
        assert all(kernel.weight(z) == Fraction(1, 8) for z in kernel.neighbourhood.sites)
        assert kernel.sigma2 == Fraction(3, 4)
        assert kernel.min_weight == pytest.approx(0.125)

    def test_weighted_kernel_on_moore(self):
        """Test an isotropic non-uniform kernel with its own sigma2."""
        weights = {z: Fraction(3, 16) if 0 in z else Fraction(1, 16) for z in moore(2).sites}
        kernel = validate_kernel(2, weights, moore(2))
        # 2 * 3/16 + 4 * 1/16 = 5/8
        assert kernel.sigma2 == Fraction(5, 8)

    def test_partial_support_keeps_neighbourhood(self):
        """Test a kernel supported on nearest neighbours inside the Moore set."""
        weights = {z: Fraction(1, 4) for z in nearest_neighbour(2).sites}
        kernel = validate_kernel(2, weights, moore(2))
        assert len(kernel.support) == 4
        assert len(kernel.neighbourhood) == 8
        assert kernel.support_mass([(1, 1), (-1, -1)]) == 0

    def test_rejects_unnormalised(self):
        """Test that weights not summing to one are rejected."""
        with pytest.raises(NotAProbability):
            validate_kernel(2, {z: Fraction(1, 5) for z in nearest_neighbour(2).sites})

    def test_rejects_negative_weight(self):
        """Test that a negative weight is rejected."""
        weights = {(1, 0): 0.75, (-1, 0): -0.25, (0, 1): 0.25, (0, -1): 0.25}
        with pytest.raises(NotAProbability):
            validate_kernel(2, weights)

    def test_rejects_asymmetric_weights(self):
        """Test that p(z) != p(-z) is rejected."""
        weights = {(1, 0): 0.3, (-1, 0): 0.2, (0, 1): 0.25, (0, -1): 0.25}
        with pytest.raises(NotSymmetric):
            validate_kernel(2, weights)

    def test_float_weights_become_exact(self):
        """Test that float weights are converted to exact rationals."""
        kernel = validate_kernel(2, {z: 0.25 for z in nearest_neighbour(2).sites})
        assert kernel.sigma2 == Fraction(1, 2)

    def test_support_outside_neighbourhood(self):
        """Test that kernel mass off the enclosing neighbourhood is rejected."""
        weights = {z: Fraction(1, 8) for z in moore(2).sites}
        with pytest.raises(KernelAxiomError):
            validate_kernel(2, weights, nearest_neighbour(2))
