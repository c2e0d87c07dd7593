"""
Rescaled processes: eps_N and N' bookkeeping, the empirical measure X^N and
the semimartingale decomposition of X^N(Phi) along simulated trajectories.

The rescaled process lives on Z^d at rates N c_{eps_N}; a site x carries the
point x / sqrt(N) and mass 1 / N'. Drift and square-function integrands are
kept as per-site contributions updated around each flip, and integrated
exactly along the piecewise-constant path.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import partial
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from app.errors import EstimationError, OutOfRange
from app.lattice.kernels import LatticeVector, WalkKernel
from app.lattice.perturbation import PerturbationFamily, eps_of_n, n_for_eps, norm_r, rescaled_weights
from app.lattice.rates import RateModel, voter_table
from app.logging_config import get_logger
from app.services.coalescing import (
    PartitionHistogram,
    estimate_theta23,
    kernel_averaged_survival,
    tables_from_histogram,
)
from app.services.estimators import DriftEstimate, RunningStat
from app.services.replicates import run_batches
from app.services.rng import PURPOSE_INITIAL, stream
from app.services.simulator import SpinState, Trajectory, rescaled_model, run, w_n

logger = get_logger(__name__)

# Exponent of the default diagnostic horizon t_N = (log N)^-19
T_N_EXPONENT = 19

# Per-event floating tolerance of the decomposition identity
RESIDUAL_TOL = 1e-10


# Scaling parameters


@dataclass(frozen=True)
class ScalingParams:
    n_scale: float
    eps_n: float
    n_prime: float
    spacing: float
    t_n: float

    @property
    def log_n(self) -> float:
        return math.log(self.n_scale)

    def ell(self, j: int) -> float:
        """log N for j = 2, (log N)^3 for j = 3."""
        return self.log_n if j == 2 else self.log_n**3


def scaling_params(n_scale: float, t_n: Optional[float] = None) -> ScalingParams:
    """
    eps_N = (log N)^3 / N, N' = N / log N, spacing 1 / sqrt(N), t_N (default (log N)^-19).

    Raises:
        OutOfRange: N <= e^3
    """
    if not n_scale > math.e**3:
        raise OutOfRange(f"N must exceed e^3 ~ {math.e**3:.4f}, got {n_scale}")
    log_n = math.log(n_scale)
    return ScalingParams(
        n_scale=float(n_scale),
        eps_n=eps_of_n(n_scale),
        n_prime=n_scale / log_n,
        spacing=1.0 / math.sqrt(n_scale),
        t_n=log_n**-T_N_EXPONENT if t_n is None else float(t_n),
    )


def solve_n(eps: float, eps0: Optional[float] = None) -> ScalingParams:
    """Inverse of eps_N on N > e^3."""
    if eps0 is not None and not 0.0 < eps <= eps0:
        raise OutOfRange(f"eps must lie in (0, {eps0}], got {eps}")
    return scaling_params(n_for_eps(eps))


# Rate decomposition


@dataclass
class RescaledRates:
    """
    N c_{eps_N} = N c^{N,vm} + (log N) c^{N,a} + (log N)^3 c^{N,s}, tables [center, ring mask].
    """

    params: ScalingParams
    c_vm: np.ndarray
    c_a: np.ndarray
    c_s: np.ndarray
    r_a: np.ndarray
    r_s: np.ndarray
    norm: float
    model: RateModel

    def reconstruct(self) -> np.ndarray:
        p = self.params
        return p.n_scale * self.c_vm + p.log_n * self.c_a + p.log_n**3 * self.c_s

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.reconstruct() - self.model.table)))


def decompose_rescaled_rates(family: PerturbationFamily, n_scale: float, norm: Optional[float] = None) -> RescaledRates:
    """
    The unique split with c^{N,s} symmetric under complementing and c^{N,a} zero at center 1.

    ||r|| is the larger of the family norm and the sup of this N's tables.
    """
    params = scaling_params(n_scale)
    r_a, r_s = rescaled_weights(family, n_scale)
    full = family.neighbourhood.full_mask
    masks = np.arange(full + 1)
    c_s = np.vstack([r_s, r_s[full ^ masks]])
    c_a = np.vstack([r_a, np.zeros_like(r_a)])
    norm = norm_r(family) if norm is None else norm
    norm = max(norm, float(np.max(np.abs(r_a))), float(np.max(np.abs(r_s))))
    return RescaledRates(
        params=params,
        c_vm=voter_table(family.kernel),
        c_a=c_a,
        c_s=c_s,
        r_a=r_a,
        r_s=r_s,
        norm=norm,
        model=rescaled_model(family, n_scale),
    )


# Test functions and the empirical measure


@dataclass(frozen=True)
class PhiFunction:
    """Time-independent Phi with known sup and Lipschitz norms."""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    sup: float
    lipschitz: float
    # |Phi|_{1/2,N}; zero for time-independent Phi
    half_norm: float = 0.0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(np.atleast_2d(points))

    @property
    def lip_norm(self) -> float:
        return self.sup + self.lipschitz

    @property
    def half_norm_n(self) -> float:
        """||Phi||_{1/2,N} = ||Phi||_inf + |Phi|_{1/2,N}."""
        return self.sup + self.half_norm

    @property
    def norm_n(self) -> float:
        return self.sup + self.lipschitz + self.half_norm


def _constant(value: float, points: np.ndarray) -> np.ndarray:
    return np.full(len(points), value)


def _gaussian(width: float, center: tuple, points: np.ndarray) -> np.ndarray:
    return np.exp(-np.sum((points - np.asarray(center)) ** 2, axis=1) / (2 * width**2))


def _coordinate_bump(axis: int, width: float, points: np.ndarray) -> np.ndarray:
    return np.exp(-points[:, axis] ** 2 / (2 * width**2))


def constant_phi(value: float = 1.0) -> PhiFunction:
    return PhiFunction("constant", partial(_constant, value), abs(value), 0.0)


def gaussian_phi(width: float = 1.0, center: tuple = (0.0, 0.0)) -> PhiFunction:
    return PhiFunction("gaussian", partial(_gaussian, width, center), 1.0, 1.0 / (width * math.sqrt(math.e)))


def coordinate_bump_phi(axis: int = 0, width: float = 1.0) -> PhiFunction:
    return PhiFunction(f"bump{axis}", partial(_coordinate_bump, axis, width), 1.0, 1.0 / (width * math.sqrt(math.e)))


@dataclass
class EmpiricalMeasure:
    """X^N = (1/N') sum over occupied x of delta_{x / sqrt N}."""

    points: np.ndarray
    n_prime: float

    @classmethod
    def from_state(cls, state: SpinState, params: ScalingParams) -> "EmpiricalMeasure":
        sites = np.array(sorted(state.ones), dtype=float).reshape(len(state.ones), state.dim)
        return cls(points=sites * params.spacing, n_prime=params.n_prime)

    @property
    def mass(self) -> float:
        return len(self.points) / self.n_prime

    def integrate(self, phi: PhiFunction) -> float:
        if not len(self.points):
            return 0.0
        return float(np.sum(phi(self.points))) / self.n_prime


def collision_functional(state: SpinState, delta: float, n_scale: float) -> float:
    """
    Double integral of 1(|w - z| < delta) against X^N x X^N, diagonal included.

    Atoms are hashed into cells of side delta so only neighbouring cells are compared.
    """
    params = scaling_params(n_scale)
    measure = EmpiricalMeasure.from_state(state, params)
    if delta <= 0:
        raise EstimationError("delta must be positive", exit_code=2)
    cells: dict[tuple, list[int]] = defaultdict(list)
    keys = np.floor(measure.points / delta).astype(np.int64)
    for i, key in enumerate(map(tuple, keys)):
        cells[key].append(i)
    offsets = list(product((-1, 0, 1), repeat=state.dim))
    pairs = 0
    for key, members in cells.items():
        here = measure.points[members]
        for offset in offsets:
            other = cells.get(tuple(k + o for k, o in zip(key, offset)))
            if not other:
                continue
            there = measure.points[other]
            dist = np.linalg.norm(here[:, None, :] - there[None, :, :], axis=-1)
            pairs += int(np.count_nonzero(dist < delta))
    return pairs / params.n_prime**2


# Semimartingale decomposition


@dataclass
class MartingaleDiagnostics:
    """
    Time series at the initial time and after every event.

    X(Phi)_t - X(Phi)_0 = D1 + D2 + D3 + M, with M the compensated jump sum;
    qv1, qv2 are the two parts of the predictable square function and
    realized_qv the sum of squared jumps.
    """

    times: np.ndarray
    mass: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    martingale: np.ndarray
    qv1: np.ndarray
    qv2: np.ndarray
    realized_qv: np.ndarray
    occupation: np.ndarray
    window_violations: int
    functional_violations: int
    params: ScalingParams

    @property
    def residual(self) -> np.ndarray:
        return self.mass - self.mass[0] - self.d1 - self.d2 - self.d3 - self.martingale

    @property
    def events(self) -> int:
        return len(self.times) - 1

    @property
    def residual_ok(self) -> bool:
        return float(np.max(np.abs(self.residual))) <= RESIDUAL_TOL * max(self.events, 1)

    def at(self, t: float) -> int:
        """Index of the last sample at or before t."""
        return int(np.searchsorted(self.times, t, side="right")) - 1


class _Integrands:
    """Per-site contributions to every integrand, refreshed around each flip."""

    def __init__(self, rates: RescaledRates, phi: PhiFunction, kernel: WalkKernel, state: SpinState):
        self.rates = rates
        self.phi = phi
        self.kernel = kernel
        self.state = state
        p = rates.params
        self.sqrt_n = math.sqrt(p.n_scale)
        self.scale2 = p.log_n / p.n_prime
        self.scale3 = p.log_n**3 / p.n_prime
        self.qscale1 = p.log_n / p.n_prime
        self.qscale2 = 1.0 / p.n_prime**2
        self.sites = kernel.neighbourhood.sites
        self.closed = (tuple([0] * kernel.dim),) + self.sites
        self.phi_cache: dict[LatticeVector, float] = {}
        self.generator_cache: dict[LatticeVector, float] = {}
        self.contrib: dict[LatticeVector, np.ndarray] = {}
        # d1, d2, d3, q1, q2, compensator
        self.totals = np.zeros(6)
        self.window_violations = 0
        for y in {state.shift(x, z) for x in state.ones for z in self.closed}:
            self.refresh(y)

    def value(self, x: LatticeVector) -> float:
        v = self.phi_cache.get(x)
        if v is None:
            v = float(self.phi(np.array(x, dtype=float) / self.sqrt_n)[0])
            self.phi_cache[x] = v
        return v

    def generator(self, x: LatticeVector) -> float:
        """A_N Phi(x) = N sum_z p(z) (Phi(x + z) - Phi(x))."""
        v = self.generator_cache.get(x)
        if v is None:
            here = self.value(x)
            v = self.rates.params.n_scale * sum(
                float(w) * (self.value(self.state.shift(x, z)) - here) for z, w in self.kernel.weights.items()
            )
            self.generator_cache[x] = v
        return v

    def _site(self, y: LatticeVector) -> np.ndarray:
        state = self.state
        center = 1 if y in state.ones else 0
        mask = 0
        for i, z in enumerate(self.sites):
            if state.shift(y, z) in state.ones:
                mask |= 1 << i
        if not center and not mask:
            return np.zeros(6)
        r = self.rates
        c_a = r.c_a[center, mask]
        c_s = r.c_s[center, mask]
        if abs(c_a) > r.norm or abs(c_s) > r.norm:
            self.window_violations += 1
        phi = self.value(y)
        sign = 1 - 2 * center
        n_prime = r.params.n_prime
        return np.array(
            [
                center * self.generator(y) / n_prime,
                self.scale2 * phi * (1 - center) * c_a,
                self.scale3 * phi * sign * c_s,
                self.qscale1 * phi**2 * r.c_vm[center, mask],
                self.qscale2 * phi**2 * (r.params.log_n * c_a + r.params.log_n**3 * c_s),
                phi * sign * r.model.table[center, mask] / n_prime,
            ]
        )

    def refresh(self, y: LatticeVector) -> None:
        old = self.contrib.pop(y, None)
        if old is not None:
            self.totals -= old
        new = self._site(y)
        if np.any(new):
            self.contrib[y] = new
            self.totals += new

    def flipped(self, x: LatticeVector) -> None:
        for z in self.closed:
            self.refresh(self.state.shift(x, z))


def martingale_decomposition(
    trajectory: Trajectory,
    phi: PhiFunction,
    rates: RescaledRates,
) -> MartingaleDiagnostics:
    """
    D^{N,1}, D^{N,2}, D^{N,3}, M^N(Phi) and the square-function integrals along a trajectory.

    Args:
        trajectory: Run of the rescaled model rates.model
        phi: Test function
        rates: Decomposition of the simulated rates
    """
    if trajectory.model.table.shape != rates.model.table.shape or not np.allclose(
        trajectory.model.table, rates.model.table
    ):
        raise EstimationError("Trajectory was not simulated with the decomposed rates", exit_code=2)
    p = rates.params
    kernel = trajectory.model.kernel
    state = trajectory.initial.copy()
    terms = _Integrands(rates, phi, kernel, state)
    bound_factor = rates.norm * phi.sup * (len(kernel.neighbourhood) + 1) / p.n_prime

    x_phi = sum(terms.value(x) for x in state.ones) / p.n_prime
    integrals = np.zeros(6)
    jumps = 0.0
    realized = 0.0
    occupation = 0.0
    last = 0.0
    functional_violations = 0
    rows = [(0.0, x_phi, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)]

    def check_functional() -> int:
        ones = len(state.ones)
        bad = 0
        for k, j in ((1, 2), (2, 3)):
            if abs(terms.totals[k]) > bound_factor * p.ell(j) * ones * (1 + 1e-9):
                bad += 1
        return bad

    functional_violations += check_functional()
    end = trajectory.stopped_at if trajectory.stopped_at is not None else trajectory.horizon
    events = list(zip(trajectory.events.times, trajectory.events.sites, trajectory.events.bits))
    for t, x, bit in events + [(end, None, None)]:
        dt = t - last
        integrals += terms.totals * dt
        occupation += len(state.ones) / p.n_prime * dt
        last = t
        if x is None:
            break
        jump = terms.value(x) / p.n_prime * (1 if bit else -1)
        if bit:
            state.ones.add(x)
        else:
            state.ones.discard(x)
        terms.flipped(x)
        x_phi += jump
        jumps += jump
        realized += jump * jump
        functional_violations += check_functional()
        d1, d2, d3, q1, q2, comp = integrals
        rows.append((t, x_phi, d1, d2, d3, jumps - comp, q1, q2, realized, occupation))
    d1, d2, d3, q1, q2, comp = integrals
    if rows[-1][0] != end:
        rows.append((end, x_phi, d1, d2, d3, jumps - comp, q1, q2, realized, occupation))
    table = np.array(rows)
    return MartingaleDiagnostics(
        times=table[:, 0],
        mass=table[:, 1],
        d1=table[:, 2],
        d2=table[:, 3],
        d3=table[:, 4],
        martingale=table[:, 5],
        qv1=table[:, 6],
        qv2=table[:, 7],
        realized_qv=table[:, 8],
        occupation=table[:, 9],
        window_violations=terms.window_violations,
        functional_violations=functional_violations,
        params=p,
    )


# Mass diagnostics over replicates


def initial_block(params: ScalingParams, rng: np.random.Generator, mass: float = 1.0, dim: int = 2) -> SpinState:
    """Product Bernoulli occupation of the unit box in rescaled units with expected X_0(1) = mass."""
    side = max(1, int(round(math.sqrt(params.n_scale))))
    density = min(1.0, mass * params.n_prime / side**dim)
    grid = np.indices((side,) * dim).reshape(dim, -1).T
    chosen = grid[rng.random(len(grid)) < density]
    return SpinState.sparse((tuple(int(c) for c in row) for row in chosen), dim)


@dataclass
class MassPaths:
    """Per-replicate X_t(1) on a time grid with square-function totals."""

    times: np.ndarray
    masses: list
    realized_qv: list
    occupation: list
    max_residual: float = 0.0
    events: int = 0
    violations: int = 0


def _mass_batch(family, n_scale, times, horizon, mass, seed, start, stop) -> MassPaths:
    rates = decompose_rescaled_rates(family, n_scale)
    phi = constant_phi()
    out = MassPaths(times=np.asarray(times), masses=[], realized_qv=[], occupation=[])
    for replicate in range(start, stop):
        initial = initial_block(rates.params, stream(seed, PURPOSE_INITIAL, replicate), mass, family.kernel.dim)
        trajectory = run(rates.model, initial, horizon, seed=seed, replicate=replicate)
        diag = martingale_decomposition(trajectory, phi, rates)
        out.masses.append([diag.mass[diag.at(t)] for t in times])
        out.realized_qv.append(float(diag.realized_qv[-1]))
        out.occupation.append(float(diag.occupation[-1]))
        out.max_residual = max(out.max_residual, float(np.max(np.abs(diag.residual))))
        out.events += diag.events
        out.violations += diag.window_violations + diag.functional_violations
    return out


def mass_paths(
    family: PerturbationFamily,
    n_scale: float,
    replicates: int,
    horizon: float,
    points: int = 11,
    mass: float = 1.0,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> MassPaths:
    times = np.linspace(0.0, horizon, points)
    task = partial(_mass_batch, family, n_scale, times, horizon, mass, seed)
    merged = MassPaths(times=times, masses=[], realized_qv=[], occupation=[])
    for part in run_batches(task, replicates, workers):
        merged.masses += part.masses
        merged.realized_qv += part.realized_qv
        merged.occupation += part.occupation
        merged.max_residual = max(merged.max_residual, part.max_residual)
        merged.events += part.events
        merged.violations += part.violations
    return merged


def _exponential(t, x0, theta):
    return x0 * np.exp(theta * t)


@dataclass
class DriftPoint:
    n_scale: float
    theta: float
    theta_error: float
    mass_increment: DriftEstimate
    qv_ratio: float
    residual: float
    violations: int


@dataclass
class SbmDriftReport:
    points: list[DriftPoint]
    theta_reference: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    @property
    def trend(self) -> float:
        """theta-hat at the largest N."""
        return self.points[-1].theta


def sbm_drift_diagnostic(
    family: PerturbationFamily,
    n_grid: Sequence[float],
    replicates: int,
    horizon: float = 0.5,
    mass: float = 1.0,
    seed: Optional[int] = None,
    theta_reference: Optional[float] = None,
    workers: Optional[int] = None,
) -> SbmDriftReport:
    """
    Effective drift of the mass process: fit E[X_t(1)] = X_0 e^{theta t} per N.

    Also reports the realized quadratic variation of M(1) against
    4 pi sigma^2 int X_s(1) ds.
    """
    if replicates < 2:
        raise EstimationError("Need at least 2 replicates", exit_code=2)
    sigma2 = float(family.kernel.sigma2)
    points = []
    for n_scale in sorted(n_grid):
        paths = mass_paths(family, n_scale, replicates, horizon, mass=mass, seed=seed, workers=workers)
        masses = np.array(paths.masses)
        means = masses.mean(axis=0)
        errors = masses.std(axis=0, ddof=1) / math.sqrt(len(masses))
        errors = np.where(errors > 0, errors, max(float(errors.max()), 1e-12))
        popt, pcov = curve_fit(_exponential, paths.times, means, p0=(max(means[0], 1e-12), 0.0), sigma=errors)
        increment = RunningStat()
        increment.add_many(masses[:, -1] - masses[:, 0])
        occupation = float(np.sum(paths.occupation))
        qv_ratio = float(np.sum(paths.realized_qv)) / (4 * math.pi * sigma2 * occupation) if occupation else math.nan
        point = DriftPoint(
            n_scale=float(n_scale),
            theta=float(popt[1]),
            theta_error=float(math.sqrt(max(pcov[1, 1], 0.0))),
            mass_increment=DriftEstimate.from_stat(increment, horizon, name="X_t(1) - X_0(1)"),
            qv_ratio=qv_ratio,
            residual=paths.max_residual,
            violations=paths.violations,
        )
        logger.info(
            f"N={n_scale:g}: theta-hat={point.theta:.4g} +/- {point.theta_error:.2g}, QV ratio={qv_ratio:.3g}"
        )
        points.append(point)
    notes = [f"horizon {horizon} in rescaled time; t_N is degenerate at desk-scale N"]
    return SbmDriftReport(points=points, theta_reference=theta_reference, notes=notes)


@dataclass
class MomentPoint:
    n_scale: float
    first: DriftEstimate
    second: DriftEstimate


def mass_moment_trend(
    family: PerturbationFamily,
    n_grid: Sequence[float],
    replicates: int,
    horizon: float = 0.5,
    mass: float = 1.0,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[MomentPoint]:
    """E[X_t(1)] and E[X_t(1)^2] at the horizon for each N."""
    out = []
    for n_scale in sorted(n_grid):
        paths = mass_paths(family, n_scale, replicates, horizon, points=2, mass=mass, seed=seed, workers=workers)
        final = np.array(paths.masses)[:, -1]
        first, second = RunningStat(), RunningStat()
        first.add_many(final)
        second.add_many(final**2)
        out.append(
            MomentPoint(
                n_scale=float(n_scale),
                first=DriftEstimate.from_stat(first, horizon, name="E X_t(1)"),
                second=DriftEstimate.from_stat(second, horizon, name="E X_t(1)^2"),
            )
        )
    return out


# Finite-N constants


def finite_n_drifts(
    family: PerturbationFamily,
    n_scale: float,
    histogram: PartitionHistogram,
) -> tuple[DriftEstimate, DriftEstimate]:
    """
    (Theta^N_2, Theta^N_3): the finite-N weights on partition samples taken at N w_N t_N, normalised by log N.
    """
    r_a, r_s = rescaled_weights(family, n_scale)
    tables = tables_from_histogram(histogram, log_norm=math.log(n_scale))
    theta2, theta3 = estimate_theta23((r_a, r_s), tables)
    theta2.name, theta3.name = "Theta^N_2", "Theta^N_3"
    return theta2, theta3


def unscaled_horizon(family: PerturbationFamily, n_scale: float, t: Optional[float] = None) -> float:
    """N w_N t in walk time, t defaulting to t_N."""
    params = scaling_params(n_scale, t)
    return n_scale * w_n(norm_r(family), family.kernel.min_weight, n_scale) * params.t_n


@dataclass
class KnComparison:
    weighted: DriftEstimate
    sampled: DriftEstimate

    @property
    def z_score(self) -> float:
        se = math.hypot(self.weighted.std_error, self.sampled.std_error)
        return abs(self.weighted.value - self.sampled.value) / se if se else 0.0


def k_n_constant(
    kernel: WalkKernel,
    n_scale: float,
    horizon: float,
    replicates: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> KnComparison:
    """
    K_N = sum_y p(y) log N P(sigma(0, y) > horizon), horizon in walk time.

    Evaluated per y with weights and, independently, with y drawn from p.
    """
    log_n = math.log(n_scale)
    weighted = kernel_averaged_survival(kernel, horizon, replicates, seed, log_norm=log_n, workers=workers)
    sampled = kernel_averaged_survival(
        kernel, horizon, replicates, None if seed is None else seed + 1, log_norm=log_n, sampled=True, workers=workers
    )
    weighted.name = sampled.name = "K_N"
    return KnComparison(weighted=weighted, sampled=sampled)
