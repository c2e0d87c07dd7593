"""
Coalescing random walks and the Monte Carlo estimators built on them.

Walkers start at labelled sites; every cluster jumps at rate `rate` by the
kernel, and a cluster landing on an occupied site merges with its occupant.
Time advances in chunks: each cluster's step count over a chunk is Poisson,
and when every pair is farther apart than R (n_i + n_j) (R the largest step,
n the step counts) no meeting is possible, so the displacements are drawn
in one go. Otherwise the chunk is replayed step by step at uniform step
times, which is exact given the counts.

Time-t partitions are collected in integer histograms, so every estimate
and identity below is a function of exact counts.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from app.combinatorics.drift import SubsetFunction
from app.combinatorics.partitions import SetPartition
from app.errors import EstimationError, InsufficientSamples
from app.lattice.kernels import LatticeVector, Neighbourhood, WalkKernel, origin
from app.lattice.perturbation import AsymptoticRates
from app.logging_config import get_logger
from app.services.estimators import DriftEstimate, RunningStat, histogram_moments
from app.services.replicates import run_batches
from app.services.rng import PURPOSE_COALESCE, purpose_tag, replicate_stream, stream

logger = get_logger(__name__)

# Minimum chunk length in units of 1/rate
MIN_CHUNK = 1.0
# Chunk length targets an expected travel of a quarter of the gap
CHUNK_FRACTION = 0.25

PartitionKey = tuple[int, ...]


class WalkerSystem:
    """
    Clusters of coalesced walkers.

    Attributes:
        positions: (m, d) int64 site of each cluster slot (dead slots are stale)
        alive: Slot still carries a cluster
        owner: Cluster slot of every walker
    """

    def __init__(
        self,
        sites: Sequence[LatticeVector],
        kernel: WalkKernel,
        rng: np.random.Generator,
        rate: float = 1.0,
        torus: Optional[int] = None,
    ):
        self.kernel = kernel
        self.rng = rng
        self.rate = float(rate)
        self.torus = torus
        self.steps = kernel.steps
        self.probabilities = kernel.probabilities
        self.max_step = kernel.max_step
        self.positions = np.array(sites, dtype=np.int64).reshape(len(sites), kernel.dim)
        if torus:
            self.positions %= torus
        self.alive = np.ones(len(sites), dtype=bool)
        self.owner = np.arange(len(sites))
        self.time = 0.0
        # walkers that start on a common site form one cluster from time 0
        seen: dict[tuple, int] = {}
        for i, site in enumerate(map(tuple, self.positions)):
            if site in seen:
                self._merge(i, seen[site])
            else:
                seen[site] = i

    @property
    def clusters(self) -> int:
        return int(self.alive.sum())

    def labels(self) -> np.ndarray:
        return self.owner.copy()

    def _merge(self, mover: int, host: int) -> None:
        self.alive[mover] = False
        self.owner[self.owner == mover] = host

    def _gaps(self, idx: np.ndarray) -> np.ndarray:
        """Pairwise sup-norm distances between live clusters."""
        diff = np.abs(self.positions[idx, None, :] - self.positions[None, idx, :])
        if self.torus:
            diff = np.minimum(diff, self.torus - diff)
        return diff.max(axis=-1)

    def _displace(self, counts: np.ndarray) -> np.ndarray:
        draws = np.array([self.rng.multinomial(int(c), self.probabilities) for c in counts])
        return draws @ self.steps

    def advance(self, until: float) -> None:
        """Run the dynamics up to time `until`."""
        while self.time < until:
            idx = np.flatnonzero(self.alive)
            remaining = until - self.time
            if len(idx) == 1:
                count = self.rng.poisson(self.rate * remaining)
                self.positions[idx] += self._displace(np.array([count]))
                if self.torus:
                    self.positions[idx] %= self.torus
                self.time = until
                return
            gaps = self._gaps(idx)
            np.fill_diagonal(gaps, np.iinfo(np.int64).max)
            gap = int(gaps.min())
            dt = min(remaining, max(CHUNK_FRACTION * gap / (self.max_step * self.rate), MIN_CHUNK / self.rate))
            counts = self.rng.poisson(self.rate * dt, size=len(idx))
            reach = self.max_step * (counts[:, None] + counts[None, :])
            np.fill_diagonal(reach, -1)
            if np.all(gaps > reach):
                self.positions[idx] += self._displace(counts)
                if self.torus:
                    self.positions[idx] %= self.torus
            else:
                self._exact_chunk(idx, counts, dt)
            self.time += dt

    def _exact_chunk(self, idx: np.ndarray, counts: np.ndarray, dt: float) -> None:
        times = []
        movers = []
        for slot, count in zip(idx, counts):
            if count:
                times.append(self.rng.uniform(0.0, dt, size=int(count)))
                movers.append(np.full(int(count), slot))
        if not times:
            return
        times = np.concatenate(times)
        movers = np.concatenate(movers)
        choices = self.rng.choice(len(self.steps), size=len(times), p=self.probabilities)
        order = np.argsort(times, kind="stable")
        occupied = {tuple(self.positions[slot]): int(slot) for slot in idx}
        for k in order:
            slot = int(movers[k])
            if not self.alive[slot]:
                continue
            here = tuple(self.positions[slot])
            target = self.positions[slot] + self.steps[choices[k]]
            if self.torus:
                target %= self.torus
            key = tuple(target)
            del occupied[here]
            host = occupied.get(key)
            if host is not None:
                self._merge(slot, host)
            else:
                self.positions[slot] = target
                occupied[key] = slot


def simulate_labels(
    sites: Sequence[LatticeVector],
    kernel: WalkKernel,
    horizons: Sequence[float],
    rng: np.random.Generator,
    rate: float = 1.0,
    torus: Optional[int] = None,
) -> list[np.ndarray]:
    """Cluster label of every walker at each (increasing) horizon."""
    system = WalkerSystem(sites, kernel, rng, rate=rate, torus=torus)
    out = []
    for horizon in horizons:
        system.advance(horizon)
        out.append(system.labels())
    return out


# Partition samples


@dataclass(frozen=True)
class PartitionSample:
    """Coalescence partition of labelled blocks at one horizon."""

    horizon: float
    partition: SetPartition
    sigma_exceeds: bool
    tau_before: bool


def block_flags(labels: np.ndarray, blocks: Sequence[Sequence[int]]) -> tuple[bool, bool]:
    """(sigma > t, tau < t) for blocks given as walker indices."""
    block_clusters = [set(labels[list(block)]) for block in blocks]
    tau_before = all(len(clusters) == 1 for clusters in block_clusters)
    sigma_exceeds = all(not (a & b) for a, b in combinations(block_clusters, 2))
    return sigma_exceeds, tau_before


def _flatten(blocks: Sequence[Sequence[LatticeVector]]) -> tuple[list[LatticeVector], list[list[int]]]:
    sites: list[LatticeVector] = []
    indices: list[list[int]] = []
    for block in blocks:
        if not block:
            raise EstimationError("Blocks must be nonempty", exit_code=2)
        indices.append([])
        for site in block:
            indices[-1].append(len(sites))
            sites.append(tuple(site))
    if len(set(sites)) != len(sites):
        raise EstimationError("Blocks must be disjoint", exit_code=2)
    return sites, indices


def simulate_partition(
    blocks: Sequence[Sequence[LatticeVector]],
    kernel: WalkKernel,
    horizon: float,
    seed: Optional[int] = None,
    replicate: int = 0,
) -> PartitionSample:
    """One exact coalescing run of the walkers in blocks A_1..A_n up to `horizon`."""
    sites, indices = _flatten(blocks)
    rng = replicate_stream(seed, PURPOSE_COALESCE, replicate)
    (labels,) = simulate_labels(sites, kernel, [horizon], rng)
    sigma_exceeds, tau_before = block_flags(labels, indices)
    return PartitionSample(
        horizon=horizon,
        partition=SetPartition.from_labels(labels.tolist()),
        sigma_exceeds=sigma_exceeds,
        tau_before=tau_before,
    )


def _kn_batch(sites, indices, kernel, horizons, seed, start, stop) -> np.ndarray:
    hits = np.zeros(len(horizons), dtype=np.int64)
    for replicate in range(start, stop):
        rng = replicate_stream(seed, PURPOSE_COALESCE, replicate)
        for k, labels in enumerate(simulate_labels(sites, kernel, horizons, rng)):
            sigma_exceeds, tau_before = block_flags(labels, indices)
            hits[k] += sigma_exceeds and tau_before
    return hits


def _fit_model(log_t, k_limit, slope):
    return k_limit + slope * log_t ** -0.5


@dataclass
class KnResult:
    estimates: list[DriftEstimate]
    limit: float
    limit_error: float
    residuals: list[float]


def estimate_Kn(
    blocks: Sequence[Sequence[LatticeVector]],
    kernel: WalkKernel,
    t_grid: Sequence[float],
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> KnResult:
    """
    (log t)^C(n,2) P(sigma > t, tau < t) on a t-grid, extrapolated with K + c (log t)^-1/2.

    Raises:
        InsufficientSamples: fewer than two replicates
    """
    if replicates < 2:
        raise InsufficientSamples(f"Need at least 2 replicates, got {replicates}")
    horizons = sorted(float(t) for t in t_grid)
    if horizons[0] <= 1.0:
        raise EstimationError("Horizons must exceed 1 so that log t > 0", exit_code=2)
    sites, indices = _flatten(blocks)
    power = math.comb(len(blocks), 2)
    task = partial(_kn_batch, sites, indices, kernel, horizons, seed)
    hits = np.sum(run_batches(task, replicates, workers), axis=0)
    estimates = [
        DriftEstimate.from_bernoulli(int(h), replicates, t, power, name="K_n") for h, t in zip(hits, horizons)
    ]
    values = np.array([e.value for e in estimates])
    if len(horizons) < 3:
        limit, limit_error = float(values[-1]), float(estimates[-1].std_error)
        residuals = [0.0] * len(values)
    else:
        log_t = np.log(horizons)
        errors = np.array([max(e.std_error, 1e-12) for e in estimates])
        popt, pcov = curve_fit(_fit_model, log_t, values, sigma=errors, absolute_sigma=True)
        limit, limit_error = float(popt[0]), float(math.sqrt(max(pcov[0, 0], 0.0)))
        residuals = (values - _fit_model(log_t, *popt)).tolist()
    logger.info(f"K_{len(blocks)} extrapolated to {limit:.6g} +/- {limit_error:.2g}")
    return KnResult(estimates=estimates, limit=limit, limit_error=limit_error, residuals=residuals)


# Pair survival and K_2 averages


def _pair_batch(kernel, horizon, seed, sampled, start, stop) -> np.ndarray:
    support = kernel.support
    if sampled:
        survived = 0
        for replicate in range(start, stop):
            rng = replicate_stream(seed, PURPOSE_COALESCE, replicate)
            y = support[rng.choice(len(support), p=kernel.probabilities)]
            (labels,) = simulate_labels([origin(kernel.dim), y], kernel, [horizon], rng)
            survived += labels[0] != labels[1]
        return np.array([survived, stop - start])
    survived = np.zeros(len(support), dtype=np.int64)
    for replicate in range(start, stop):
        for j, y in enumerate(support):
            rng = stream(seed, PURPOSE_COALESCE, replicate, j + 1)
            (labels,) = simulate_labels([origin(kernel.dim), y], kernel, [horizon], rng)
            survived[j] += labels[0] != labels[1]
    return survived


def kernel_averaged_survival(
    kernel: WalkKernel,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    log_norm: Optional[float] = None,
    sampled: bool = False,
    workers: Optional[int] = None,
) -> DriftEstimate:
    """
    sum_y p(y) log_norm P(sigma(0, y) > horizon).

    Args:
        log_norm: Normalising logarithm (default log horizon)
        sampled: Draw y ~ p per replicate instead of running every y
    """
    if replicates < 2:
        raise InsufficientSamples(f"Need at least 2 replicates, got {replicates}")
    log_norm = math.log(horizon) if log_norm is None else log_norm
    task = partial(_pair_batch, kernel, horizon, seed, sampled)
    parts = run_batches(task, replicates, workers)
    if sampled:
        survived, total = np.sum(parts, axis=0)
        p = survived / total
        return DriftEstimate(
            value=log_norm * p,
            std_error=log_norm * math.sqrt(p * (1 - p) / total),
            samples=int(total),
            horizon=horizon,
            log_power=1,
            name="K_2 average (sampled)",
        )
    survived = np.sum(parts, axis=0)
    p = survived / replicates
    weights = kernel.probabilities
    value = log_norm * float(np.dot(weights, p))
    variance = float(np.dot(weights**2, p * (1 - p) / replicates))
    return DriftEstimate(
        value=value,
        std_error=log_norm * math.sqrt(variance),
        samples=replicates,
        horizon=horizon,
        log_power=1,
        name="K_2 average",
    )


# Theta tables


@dataclass
class PartitionHistogram:
    """Counts of time-t partitions of N-bar (cells as N-bar masks, origin cell first)."""

    n: int
    horizon: float
    samples: int = 0
    counts: Counter = field(default_factory=Counter)

    def add(self, labels: np.ndarray) -> None:
        self.counts[SetPartition.from_labels(labels.tolist()).cells] += 1
        self.samples += 1

    def merge(self, other: "PartitionHistogram") -> "PartitionHistogram":
        self.counts.update(other.counts)
        self.samples += other.samples
        return self

    def functional(self, value_of) -> RunningStat:
        """Sample moments of value_of(cells) over the histogram."""
        keys = list(self.counts)
        values = np.array([value_of(cells) for cells in keys], dtype=float)
        multiplicity = np.array([self.counts[cells] for cells in keys], dtype=np.int64)
        stat = histogram_moments(values, multiplicity)
        # samples absent from the histogram do not exist; keep the count honest
        assert stat.count == self.samples
        return stat

    def three_cell(self) -> dict[tuple[int, int], int]:
        """(A1, A2) N-masks of the outer cells -> count, over |pi| = 3."""
        out: dict[tuple[int, int], int] = {}
        for cells, k in self.counts.items():
            if len(cells) == 3:
                a1, a2 = sorted(c >> 1 for c in cells[1:])
                out[(a1, a2)] = out.get((a1, a2), 0) + k
        return out

    def two_cell(self) -> dict[int, int]:
        """Outer cell A (N-mask) -> count, over pi = {N-bar minus A, A}."""
        out: dict[int, int] = {}
        for cells, k in self.counts.items():
            if len(cells) == 2:
                a = cells[1] >> 1
                out[a] = out.get(a, 0) + k
        return out


@dataclass
class ThetaTables:
    """Theta^+(A), Theta^-(A), kappa and K_2(A, N-bar minus A) from one histogram."""

    histogram: PartitionHistogram
    log_norm: float
    theta_plus: np.ndarray
    theta_minus: np.ndarray
    kappa: DriftEstimate
    k2: np.ndarray
    linear_residual: int
    constant_residual: int

    @property
    def n(self) -> int:
        return self.histogram.n


def tables_from_histogram(histogram: PartitionHistogram, log_norm: Optional[float] = None) -> ThetaTables:
    n = histogram.n
    samples = histogram.samples
    if samples < 2:
        raise InsufficientSamples(f"Need at least 2 partition samples, have {samples}")
    log_norm = math.log(histogram.horizon) if log_norm is None else log_norm
    plus = np.zeros(1 << n, dtype=np.int64)
    minus = np.zeros(1 << n, dtype=np.int64)
    for (a1, a2), k in histogram.three_cell().items():
        plus[a1] += k
        plus[a2] += k
        minus[a1 | a2] += k
    pairs = np.zeros(1 << n, dtype=np.int64)
    for a, k in histogram.two_cell().items():
        pairs[a] += k
    kappa_hits = int(sum(histogram.three_cell().values()))
    sizes = np.array([bin(a).count("1") for a in range(1 << n)], dtype=np.int64)
    signed = plus - minus
    scale3 = log_norm**3 / samples
    return ThetaTables(
        histogram=histogram,
        log_norm=log_norm,
        theta_plus=plus * scale3,
        theta_minus=minus * scale3,
        kappa=DriftEstimate(
            value=kappa_hits * scale3,
            std_error=log_norm**3 * math.sqrt(kappa_hits / samples * (1 - kappa_hits / samples) / samples),
            samples=samples,
            horizon=histogram.horizon,
            log_power=3,
            name="kappa",
        ),
        k2=pairs * (log_norm / samples),
        linear_residual=int(np.dot(sizes, signed)),
        constant_residual=int(signed[1:].sum()) - kappa_hits,
    )


def _theta_batch(sites, kernel, horizons, seed, rate, start, stop) -> list[PartitionHistogram]:
    n = len(sites) - 1
    histograms = [PartitionHistogram(n=n, horizon=h) for h in horizons]
    for replicate in range(start, stop):
        rng = replicate_stream(seed, PURPOSE_COALESCE, replicate)
        for histogram, labels in zip(histograms, simulate_labels(sites, kernel, horizons, rng, rate=rate)):
            histogram.add(labels)
    return histograms


def sample_histograms(
    neighbourhood: Neighbourhood,
    kernel: WalkKernel,
    horizons: Sequence[float],
    replicates: int,
    seed: Optional[int] = None,
    rate: float = 1.0,
    workers: Optional[int] = None,
) -> list[PartitionHistogram]:
    """Partition histograms of the |N-bar| walkers at each horizon, one shared run per replicate."""
    sites = list(neighbourhood.closed)
    horizons = sorted(float(h) for h in horizons)
    task = partial(_theta_batch, sites, kernel, horizons, seed, rate)
    batches = run_batches(task, replicates, workers)
    merged = [PartitionHistogram(n=len(neighbourhood), horizon=h) for h in horizons]
    for batch in batches:
        for total, part in zip(merged, batch):
            total.merge(part)
    return merged


def estimate_theta_tables(
    neighbourhood: Neighbourhood,
    kernel: WalkKernel,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> ThetaTables:
    """
    Theta-hat^+(A), Theta-hat^-(A), kappa-hat and K-hat_2(A, N-bar minus A) for all A.

    The pathwise identities sum_A |A| (Theta^+ - Theta^-) = 0 and
    sum_A (Theta^+ - Theta^-) = kappa hold on the integer counts; their
    residuals are reported on the result.
    """
    if horizon <= 1.0:
        raise EstimationError("Horizon must exceed 1 so that log t > 0", exit_code=2)
    (histogram,) = sample_histograms(neighbourhood, kernel, [horizon], replicates, seed, workers=workers)
    tables = tables_from_histogram(histogram)
    logger.info(
        f"Theta tables at t={horizon:g}: {histogram.samples} samples, kappa={tables.kappa.value:.6g}, "
        f"{len(histogram.counts)} distinct partitions"
    )
    return tables


def _theta3_value(r_s: np.ndarray, cells: PartitionKey) -> float:
    if len(cells) != 3:
        return 0.0
    a1, a2 = cells[1] >> 1, cells[2] >> 1
    return float(r_s[a1] + r_s[a2] - r_s[a1 | a2])


def _theta2_value(r_a: np.ndarray, cells: PartitionKey) -> float:
    if len(cells) != 2:
        return 0.0
    return float(r_a[cells[1] >> 1])


def estimate_theta23(
    rates: AsymptoticRates | tuple[np.ndarray, np.ndarray],
    tables: ThetaTables,
) -> tuple[DriftEstimate, DriftEstimate]:
    """
    Theta_2 = sum r^a(A) K_2(A, N-bar minus A) and Theta_3 = sum r^s(A) (Theta^+ - Theta^-).

    Both are means of per-sample linear functionals of the shared partition
    sample, so their standard errors come from the same histogram.
    """
    if isinstance(rates, AsymptoticRates):
        r_a, r_s = rates.r_a, rates.r_s
    else:
        r_a, r_s = rates
    histogram = tables.histogram
    log_norm = tables.log_norm
    theta3 = histogram.functional(partial(_theta3_value, np.asarray(r_s)))
    if np.any(np.asarray(r_a)[1:] != 0):
        theta2 = histogram.functional(partial(_theta2_value, np.asarray(r_a)))
    else:
        theta2 = RunningStat(count=histogram.samples)
    return (
        DriftEstimate.from_stat(theta2, histogram.horizon, 1, scale=log_norm, name="Theta_2"),
        DriftEstimate.from_stat(theta3, histogram.horizon, 3, scale=log_norm**3, name="Theta_3"),
    )


# d >= 3


@dataclass
class EscapeEstimate:
    at_horizon: DriftEstimate
    at_double: DriftEstimate

    @property
    def bracket(self) -> tuple[float, float]:
        return self.at_double.value, self.at_horizon.value

    @property
    def branching_rate(self) -> float:
        return 2.0 * self.at_double.value


def _escape_batch(kernel, horizon, seed, start, stop) -> np.ndarray:
    escaped = np.zeros(2, dtype=np.int64)
    for replicate in range(start, stop):
        rng = replicate_stream(seed, purpose_tag("escape"), replicate)
        steps_double = rng.poisson(2.0 * horizon)
        steps_single = rng.binomial(steps_double, 0.5)
        choices = rng.choice(len(kernel.support), size=steps_double, p=kernel.probabilities)
        path = np.cumsum(kernel.steps[choices], axis=0)
        at_origin = np.flatnonzero(~path.any(axis=1))
        first = int(at_origin[0]) if len(at_origin) else steps_double
        escaped[0] += first >= steps_single
        escaped[1] += first >= steps_double
    return escaped


def escape_probability(
    kernel: WalkKernel,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> EscapeEstimate:
    """
    P(no return to 0 by T) and by 2T for the walk from 0 (upper bounds on gamma_e).
    """
    if kernel.dim < 3:
        raise EstimationError("The walk is recurrent for d < 3", exit_code=2)
    escaped = np.sum(run_batches(partial(_escape_batch, kernel, horizon, seed), replicates, workers), axis=0)
    return EscapeEstimate(
        at_horizon=DriftEstimate.from_bernoulli(int(escaped[0]), replicates, horizon, 0, name="gamma_e(T)"),
        at_double=DriftEstimate.from_bernoulli(int(escaped[1]), replicates, 2 * horizon, 0, name="gamma_e(2T)"),
    )


@dataclass
class Dge3Tables:
    """Partition histograms of N-bar at T and 2T from the same runs."""

    at_horizon: PartitionHistogram
    at_double: PartitionHistogram

    def probabilities(self, which: str = "horizon") -> tuple[np.ndarray, np.ndarray]:
        """
        P(tau(A) <= T, tau(A u 0) > T) and P(tau(A u 0) <= T) for every A (N-mask).
        """
        histogram = self.at_horizon if which == "horizon" else self.at_double
        n = histogram.n
        inside = np.zeros(1 << n, dtype=np.int64)
        with_origin = np.zeros(1 << n, dtype=np.int64)
        for cells, k in histogram.counts.items():
            with_origin[cells[0] >> 1] += k
            for cell in cells[1:]:
                inside[cell >> 1] += k
        # A lies in a cell iff some cell mask is a superset of A
        masks = np.arange(1 << n)
        for bit in range(n):
            lower = (masks >> bit & 1) == 0
            inside[lower] += inside[masks[lower] | (1 << bit)]
            with_origin[lower] += with_origin[masks[lower] | (1 << bit)]
        inside[0] = with_origin[0] = 0
        return inside / histogram.samples, with_origin / histogram.samples


def estimate_dge3_tables(
    neighbourhood: Neighbourhood,
    kernel: WalkKernel,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> Dge3Tables:
    if neighbourhood.dim < 3:
        raise EstimationError("Truncated tau-tables are for d >= 3", exit_code=2)
    at_horizon, at_double = sample_histograms(
        neighbourhood, kernel, [horizon, 2.0 * horizon], replicates, seed, workers=workers
    )
    return Dge3Tables(at_horizon=at_horizon, at_double=at_double)


def _f_prime_value(r_s: np.ndarray, cells: PartitionKey) -> float:
    union = 0
    value = 0.0
    for cell in cells[1:]:
        value += float(r_s[cell >> 1])
        union |= cell
    if union:
        value -= float(r_s[union >> 1])
    return value


@dataclass
class FPrimeEstimate:
    at_horizon: DriftEstimate
    at_double: DriftEstimate

    @property
    def truncation_gap(self) -> float:
        return self.at_double.value - self.at_horizon.value


def f_prime_from_tables(r_s: np.ndarray | SubsetFunction, tables: Dge3Tables) -> FPrimeEstimate:
    """E[sum_A r(A) (1(A in pi_T) - 1(N-bar minus A = [0]))] at T and 2T."""
    values = np.array(r_s.values if isinstance(r_s, SubsetFunction) else r_s, dtype=float)
    out = []
    for histogram in (tables.at_horizon, tables.at_double):
        stat = histogram.functional(partial(_f_prime_value, values))
        out.append(DriftEstimate.from_stat(stat, histogram.horizon, 0, name="f'(0)"))
    return FPrimeEstimate(at_horizon=out[0], at_double=out[1])


def estimate_f_prime_0(
    r_s: np.ndarray | SubsetFunction,
    neighbourhood: Neighbourhood,
    kernel: WalkKernel,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> FPrimeEstimate:
    """f'(0) with pi_infinity truncated at T and at 2T."""
    tables = estimate_dge3_tables(neighbourhood, kernel, horizon, replicates, seed, workers)
    estimate = f_prime_from_tables(r_s, tables)
    logger.info(
        f"f'(0) ~ {estimate.at_double.value:.6g} +/- {estimate.at_double.std_error:.2g} "
        f"(T gap {estimate.truncation_gap:.2g})"
    )
    return estimate
