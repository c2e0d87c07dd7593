"""
Tests for coalescing random walks and the estimators built on them.
"""

import math
from collections import Counter

import numpy as np
import pytest

from app.errors import EstimationError, InsufficientSamples
from app.lattice.kernels import kernel_uniform, nearest_neighbour
from app.services.coalescing import (
    Dge3Tables,
    PartitionHistogram,
    WalkerSystem,
    block_flags,
    escape_probability,
    estimate_dge3_tables,
    estimate_Kn,
    estimate_theta23,
    estimate_theta_tables,
    f_prime_from_tables,
    kernel_averaged_survival,
    simulate_labels,
    simulate_partition,
    tables_from_histogram,
)
from app.services.rng import stream


@pytest.fixture
def kernel():
    """Uniform nearest-neighbour kernel on Z^2."""
    return kernel_uniform(nearest_neighbour(2))


@pytest.fixture
def histogram():
    """Hand-made partition histogram of N-bar with |N| = 3."""
    h = PartitionHistogram(n=3, horizon=math.e)
    h.counts = Counter({(0b0001, 0b0010, 0b1100): 3, (0b0011, 0b1100): 2, (0b1111,): 5})
    h.samples = 10
    return h


class TestWalkerSystem:
    """Tests for WalkerSystem."""

    def test_shared_start_is_one_cluster(self, kernel):
        """Test that walkers starting on one site are merged at time 0."""
        system = WalkerSystem([(0, 0), (0, 0), (1, 0)], kernel, stream(1))
        assert system.clusters == 2
        labels = system.labels()
        assert labels[0] == labels[1]

    def test_clusters_never_split(self, kernel):
        """Test that the number of clusters is nonincreasing in time."""
        sites = [(0, 0), (1, 0), (0, 1), (3, 3)]
        counts = [len(set(labels)) for labels in simulate_labels(sites, kernel, [1.0, 5.0, 20.0, 80.0], stream(2))]
        assert counts == sorted(counts, reverse=True)

    def test_torus_coalesces(self, kernel):
        """Test that two walkers on a 2 x 2 torus meet and stay inside it."""
        system = WalkerSystem([(0, 0), (1, 1)], kernel, stream(3), torus=2)
        system.advance(200.0)
        assert system.clusters == 1
        assert ((system.positions >= 0) & (system.positions < 2)).all()


class TestPartitions:
    """Tests for partition samples and block flags."""

    def test_block_flags(self):
        """Test sigma > t and tau < t on explicit labels."""
        blocks = [[0, 1], [2]]
        assert block_flags(np.array([0, 0, 2]), blocks) == (True, True)
        assert block_flags(np.array([0, 1, 2]), blocks) == (True, False)
        assert block_flags(np.array([0, 0, 0]), blocks) == (False, True)

    def test_simulate_partition_deterministic(self, kernel):
        """Test that a replicate fixes the partition."""
        blocks = [[(0, 0)], [(1, 0)], [(0, 2)]]
        first = simulate_partition(blocks, kernel, 10.0, seed=4, replicate=2)
        second = simulate_partition(blocks, kernel, 10.0, seed=4, replicate=2)
        assert first.partition == second.partition

    def test_blocks_must_be_disjoint(self, kernel):
        """Test that a site in two blocks is refused."""
        with pytest.raises(EstimationError):
            simulate_partition([[(0, 0)], [(0, 0)]], kernel, 1.0)

    def test_estimate_kn(self, kernel):
        """Test a two-horizon K_2 estimate."""
        result = estimate_Kn([[(0, 0)], [(1, 0)]], kernel, [10.0, 20.0], replicates=20, seed=1, workers=1)
        assert len(result.estimates) == 2
        assert result.limit == result.estimates[-1].value
        assert all(0.0 <= e.value <= math.log(e.horizon) for e in result.estimates)

    def test_estimate_kn_arguments(self, kernel):
        """Test the replicate and horizon checks."""
        with pytest.raises(InsufficientSamples):
            estimate_Kn([[(0, 0)], [(1, 0)]], kernel, [10.0], replicates=1)
        with pytest.raises(EstimationError):
            estimate_Kn([[(0, 0)], [(1, 0)]], kernel, [1.0], replicates=5)

    def test_kernel_averaged_survival(self, kernel):
        """Test that the weighted and sampled pair averages lie in [0, log t]."""
        for sampled in (False, True):
            estimate = kernel_averaged_survival(kernel, 5.0, 20, seed=2, sampled=sampled, workers=1)
            assert 0.0 <= estimate.value <= math.log(5.0)


class TestThetaTables:
    """Tests for the Theta tables and their pathwise identities."""

    def test_histogram_views(self, histogram):
        """Test the three- and two-cell views in N-masks."""
        assert histogram.three_cell() == {(0b001, 0b110): 3}
        assert histogram.two_cell() == {0b110: 2}

    def test_tables(self, histogram):
        """Test table entries and zero residuals."""
        tables = tables_from_histogram(histogram, log_norm=1.0)
        assert tables.theta_plus[0b001] == pytest.approx(0.3)
        assert tables.theta_plus[0b110] == pytest.approx(0.3)
        assert tables.theta_minus[0b111] == pytest.approx(0.3)
        assert tables.k2[0b110] == pytest.approx(0.2)
        assert tables.kappa.value == pytest.approx(0.3)
        assert tables.linear_residual == 0
        assert tables.constant_residual == 0

    def test_theta23(self, histogram):
        """Test that constant r^s gives kappa and r^a picks out K_2."""
        tables = tables_from_histogram(histogram, log_norm=1.0)
        r_s = np.ones(8)
        r_s[0] = 0.0
        r_a = np.zeros(8)
        r_a[0b110] = 1.0
        theta2, theta3 = estimate_theta23((r_a, r_s), tables)
        assert theta3.value == pytest.approx(tables.kappa.value)
        assert theta2.value == pytest.approx(tables.k2[0b110])

    def test_needs_samples(self):
        """Test that a one-sample histogram is refused."""
        h = PartitionHistogram(n=2, horizon=3.0)
        h.add(np.array([0, 0, 1]))
        with pytest.raises(InsufficientSamples):
            tables_from_histogram(h)

    def test_histogram_merge(self):
        """Test that merging adds counts and samples."""
        left, right = PartitionHistogram(n=2, horizon=3.0), PartitionHistogram(n=2, horizon=3.0)
        left.add(np.array([0, 0, 1]))
        right.add(np.array([0, 0, 1]))
        right.add(np.array([0, 1, 2]))
        left.merge(right)
        assert left.samples == 3
        assert sum(left.counts.values()) == 3

    def test_simulated_tables(self, kernel):
        """Test the identities on a small simulated sample."""
        tables = estimate_theta_tables(nearest_neighbour(2), kernel, 5.0, replicates=30, seed=3, workers=1)
        assert tables.histogram.samples == 30
        assert tables.linear_residual == 0
        assert tables.constant_residual == 0

    def test_horizon_must_exceed_one(self, kernel):
        """Test that t <= 1 is refused."""
        with pytest.raises(EstimationError):
            estimate_theta_tables(nearest_neighbour(2), kernel, 1.0, replicates=5)


class TestHigherDimensions:
    """Tests for the d >= 3 estimators."""

    def test_escape_bracket(self):
        """Test that escape by 2T is at most escape by T."""
        kernel = kernel_uniform(nearest_neighbour(3))
        estimate = escape_probability(kernel, 20.0, 50, seed=1, workers=1)
        lower, upper = estimate.bracket
        assert 0.0 <= lower <= upper <= 1.0
        assert estimate.branching_rate == pytest.approx(2 * lower)

    def test_escape_needs_transience(self, kernel):
        """Test that d = 2 is refused."""
        with pytest.raises(EstimationError):
            escape_probability(kernel, 10.0, 10)

    def test_dge3_tables_need_d3(self, kernel):
        """Test that d = 2 is refused."""
        with pytest.raises(EstimationError):
            estimate_dge3_tables(nearest_neighbour(2), kernel, 10.0, 10)

    def test_probabilities(self):
        """Test subset probabilities on a two-sample histogram."""
        h = PartitionHistogram(n=2, horizon=5.0)
        h.counts = Counter({(0b001, 0b110): 1, (0b011, 0b100): 1})
        h.samples = 2
        inside, with_origin = Dge3Tables(at_horizon=h, at_double=h).probabilities()
        np.testing.assert_allclose(inside, [0.0, 0.5, 1.0, 0.5])
        np.testing.assert_allclose(with_origin, [0.0, 0.5, 0.0, 0.0])

    def test_f_prime_linear_weights_vanish(self, histogram):
        """Test that r(A) = |A| contributes nothing on any partition."""
        sizes = np.array([bin(a).count("1") for a in range(8)], dtype=float)
        estimate = f_prime_from_tables(sizes, Dge3Tables(at_horizon=histogram, at_double=histogram))
        assert estimate.at_horizon.value == pytest.approx(0.0)
        assert estimate.truncation_gap == pytest.approx(0.0)
