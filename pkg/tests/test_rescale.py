"""
Tests for rescaled processes and the mass diagnostics.
"""

import math
from collections import Counter

import numpy as np
import pytest

from app.errors import EstimationError, OutOfRange
from app.lattice.kernels import kernel_uniform, nearest_neighbour
from app.lattice.perturbation import build_family
from app.lattice.rates import voter
from app.services.coalescing import PartitionHistogram
from app.services.rescale import (
    EmpiricalMeasure,
    collision_functional,
    constant_phi,
    decompose_rescaled_rates,
    finite_n_drifts,
    gaussian_phi,
    initial_block,
    k_n_constant,
    martingale_decomposition,
    mass_paths,
    sbm_drift_diagnostic,
    scaling_params,
    solve_n,
    unscaled_horizon,
)
from app.services.rng import stream
from app.services.simulator import SpinState, run

N_SMALL = 400.0


@pytest.fixture
def family():
    """q-voter perturbation family on the nearest-neighbour kernel."""
    return build_family(kernel_uniform(nearest_neighbour(2)), "qvoter")


@pytest.fixture
def rates(family):
    """Rate decomposition at a desk-scale N."""
    return decompose_rescaled_rates(family, N_SMALL)


class TestScaling:
    """Tests for scaling_params and solve_n."""

    def test_parameters(self):
        """Test eps_N, N' and the lattice spacing."""
        params = scaling_params(1e4)
        log_n = math.log(1e4)
        assert params.eps_n == pytest.approx(log_n**3 / 1e4)
        assert params.n_prime == pytest.approx(1e4 / log_n)
        assert params.spacing == pytest.approx(0.01)
        assert params.t_n == pytest.approx(log_n**-19)
        assert params.ell(2) == pytest.approx(log_n)
        assert params.ell(3) == pytest.approx(log_n**3)

    def test_t_n_override(self):
        """Test that t_N can be set explicitly."""
        assert scaling_params(1e4, t_n=0.5).t_n == 0.5

    def test_small_n(self):
        """Test that N <= e^3 is refused."""
        with pytest.raises(OutOfRange):
            scaling_params(20.0)

    def test_solve_n(self):
        """Test that solve_n inverts eps_N."""
        assert solve_n(0.01).eps_n == pytest.approx(0.01, rel=1e-9)
        with pytest.raises(OutOfRange):
            solve_n(0.5, eps0=0.1)


class TestRateDecomposition:
    """Tests for decompose_rescaled_rates."""

    def test_reconstructs_model(self, rates):
        """Test N c_eps = N c^vm + log N c^a + (log N)^3 c^s."""
        assert rates.residual < 1e-8 * N_SMALL

    def test_structure(self, rates):
        """Test c^a vanishes at center 1 and c^s is complement symmetric."""
        full = 15
        masks = np.arange(16)
        assert not rates.c_a[1].any()
        np.testing.assert_allclose(rates.c_s[1], rates.c_s[0][full ^ masks])
        assert rates.norm >= np.max(np.abs(rates.r_s))


class TestEmpiricalMeasure:
    """Tests for the empirical measure and test functions."""

    def test_from_state(self):
        """Test point positions and total mass."""
        params = scaling_params(1e4)
        measure = EmpiricalMeasure.from_state(SpinState.sparse([(0, 0), (10, 0)]), params)
        np.testing.assert_allclose(measure.points, [[0.0, 0.0], [0.1, 0.0]])
        assert measure.mass == pytest.approx(2 / params.n_prime)
        assert measure.integrate(constant_phi(3.0)) == pytest.approx(3 * measure.mass)

    def test_gaussian_phi(self):
        """Test the Gaussian test function at its center."""
        phi = gaussian_phi(width=0.5)
        assert phi(np.array([0.0, 0.0]))[0] == pytest.approx(1.0)
        assert phi.sup == 1.0

    def test_phi_norms(self):
        """Test the combined norms of a time-independent test function."""
        phi = gaussian_phi(width=1.0)
        assert phi.lip_norm == pytest.approx(1.0 + 1.0 / math.sqrt(math.e))
        assert phi.half_norm_n == pytest.approx(1.0)
        assert phi.norm_n == pytest.approx(phi.lip_norm)

    def test_collision_functional(self):
        """Test the pair count of two neighbouring atoms."""
        params = scaling_params(1e4)
        state = SpinState.sparse([(0, 0), (1, 0)])
        assert collision_functional(state, 0.015, 1e4) == pytest.approx(4 / params.n_prime**2)
        assert collision_functional(state, 0.005, 1e4) == pytest.approx(2 / params.n_prime**2)

    def test_collision_delta(self):
        """Test that delta must be positive."""
        with pytest.raises(EstimationError):
            collision_functional(SpinState.sparse([(0, 0)]), 0.0, 1e4)


class TestMartingaleDecomposition:
    """Tests for martingale_decomposition."""

    @pytest.fixture
    def trajectory(self, rates):
        """Short run of the rescaled q-voter model from a random block."""
        initial = initial_block(rates.params, stream(1), mass=0.5)
        return run(rates.model, initial, 0.01, seed=2)

    def test_identity_holds(self, trajectory, rates):
        """Test that X(Phi) - X_0(Phi) = D1 + D2 + D3 + M along the path."""
        diag = martingale_decomposition(trajectory, gaussian_phi(), rates)
        assert diag.residual_ok
        assert diag.events == len(trajectory.events)

    def test_constant_phi(self, trajectory, rates):
        """Test mass bookkeeping and the realized square function for Phi = 1."""
        diag = martingale_decomposition(trajectory, constant_phi(), rates)
        n_prime = rates.params.n_prime
        assert diag.mass[0] == pytest.approx(len(trajectory.initial.ones) / n_prime)
        assert diag.mass[-1] == pytest.approx(len(trajectory.final.ones) / n_prime)
        assert diag.realized_qv[-1] == pytest.approx(diag.events / n_prime**2)
        assert not diag.d1.any()
        assert (np.diff(diag.qv1) >= 0).all()

    def test_wrong_rates(self, family, rates):
        """Test that a trajectory of another model is refused."""
        trajectory = run(voter(family.kernel), SpinState.sparse([(0, 0)]), 0.1, seed=1)
        with pytest.raises(EstimationError):
            martingale_decomposition(trajectory, constant_phi(), rates)


class TestMassDiagnostics:
    """Tests for the replicate-level diagnostics."""

    def test_initial_block(self, rates):
        """Test that a key fixes the block and the block lies in the unit box."""
        first = initial_block(rates.params, stream(4))
        second = initial_block(rates.params, stream(4))
        assert first.ones == second.ones
        side = round(math.sqrt(N_SMALL))
        assert all(0 <= c < side for x in first.ones for c in x)

    def test_mass_paths(self, family):
        """Test path shapes and the decomposition residual."""
        paths = mass_paths(family, N_SMALL, replicates=3, horizon=0.005, points=5, mass=0.3, seed=1, workers=1)
        assert np.array(paths.masses).shape == (3, 5)
        assert paths.max_residual < 1e-8

    def test_needs_replicates(self, family):
        """Test that a single replicate is refused."""
        with pytest.raises(EstimationError):
            sbm_drift_diagnostic(family, [N_SMALL], replicates=1)

    def test_unscaled_horizon(self, family):
        """Test N w_N t in walk time."""
        assert 0 < unscaled_horizon(family, 1e6, t=1.0) < 1e6

    def test_finite_n_drifts(self, family):
        """Test that Theta^N_2 vanishes for a symmetric family."""
        histogram = PartitionHistogram(n=4, horizon=math.e)
        histogram.counts = Counter({(0b00001, 0b00010, 0b11100): 2, (0b11111,): 2})
        histogram.samples = 4
        theta2, theta3 = finite_n_drifts(family, 1e4, histogram)
        assert theta2.value == pytest.approx(0.0, abs=1e-6)
        assert theta3.name == "Theta^N_3"
        assert math.isfinite(theta3.value)

    def test_k_n_constant(self, family):
        """Test the two K_N evaluations on a short horizon."""
        comparison = k_n_constant(family.kernel, 1e4, 5.0, replicates=10, seed=3, workers=1)
        assert comparison.weighted.name == comparison.sampled.name == "K_N"
        assert comparison.z_score >= 0.0
