"""
Event-driven simulation of spin-flip systems from marked Poisson clocks.

Every site carries one clock of rate 2 * c_max. An event picks one of the
two mark streams (0 -> 1 proposals and 1 -> 0 proposals) by a fair coin and
a mark u uniform on [0, c_max]; a component whose value at the site matches
the stream flips when u <= c(x, xi). Coupled components read the same
clocks, so any pair of rate functions satisfying the comparison condition
stays ordered event by event.

Only sites with a 1 in their closed neighbourhood carry a clock (rates
vanish elsewhere for models that trap at 0); sites leave the schedule
lazily the next time their clock fires.
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from app.config import settings
from app.errors import (
    ActiveSetOverflow,
    ComparisonConditionFails,
    HorizonNonpositive,
    OrderingViolated,
    RateError,
    SimulationError,
)
from app.lattice.kernels import LatticeVector
from app.lattice.perturbation import PerturbationFamily, eps_of_n, norm_r
from app.lattice.rates import RateModel, voter_table, window_features
from app.logging_config import get_logger
from app.services.rng import PURPOSE_INITIAL, PURPOSE_SPIN, SiteStreams, stream

logger = get_logger(__name__)

# 3^|N| window pairs are enumerated by the comparison check
MAX_COMPARISON_SITES = 12

COMPARISON_TOL = 1e-9


# States


@dataclass
class SpinState:
    """
    A {0,1}-configuration given by its set of ones.

    Attributes:
        dim: Lattice dimension
        ones: Sites with value 1 (reduced mod L on a torus)
        torus: Side length L of the torus, or None for Z^d
        time: Time the state refers to
    """

    dim: int
    ones: set = field(default_factory=set)
    torus: Optional[int] = None
    time: float = 0.0

    def __post_init__(self):
        self.ones = {self.wrap(tuple(int(c) for c in x)) for x in self.ones}

    @classmethod
    def sparse(cls, ones: Iterable[LatticeVector], dim: int = 2) -> "SpinState":
        return cls(dim=dim, ones=set(ones))

    @classmethod
    def on_torus(cls, side: int, ones: Iterable[LatticeVector] = (), dim: int = 2) -> "SpinState":
        return cls(dim=dim, ones=set(ones), torus=side)

    @classmethod
    def from_mask(cls, side: int, mask: int, dim: int = 2) -> "SpinState":
        """Torus state from the bitmask used by the exact oracle."""
        return cls(dim=dim, ones={site for i, site in enumerate(torus_sites(side, dim)) if mask >> i & 1}, torus=side)

    def wrap(self, x: LatticeVector) -> LatticeVector:
        if self.torus:
            return tuple(c % self.torus for c in x)
        return x

    def shift(self, x: LatticeVector, z: LatticeVector) -> LatticeVector:
        return self.wrap(tuple(a + b for a, b in zip(x, z)))

    @property
    def size(self) -> Optional[int]:
        return self.torus**self.dim if self.torus else None

    @property
    def density(self) -> float:
        if not self.torus:
            raise SimulationError("Density is defined on a torus only", exit_code=2)
        return len(self.ones) / self.size

    @property
    def mask(self) -> int:
        if not self.torus:
            raise SimulationError("Bitmask encoding needs a torus", exit_code=2)
        index = {site: i for i, site in enumerate(torus_sites(self.torus, self.dim))}
        return sum(1 << index[x] for x in self.ones)

    def is_constant(self) -> bool:
        return not self.ones or (self.torus is not None and len(self.ones) == self.size)

    def copy(self) -> "SpinState":
        return SpinState(dim=self.dim, ones=set(self.ones), torus=self.torus, time=self.time)


def torus_sites(side: int, dim: int = 2) -> list[LatticeVector]:
    """Sites of the torus in oracle bit order (row-major)."""
    axes = np.indices((side,) * dim).reshape(dim, -1).T
    return [tuple(int(c) for c in row) for row in axes]


def random_torus_state(side: int, density: float, rng: np.random.Generator, dim: int = 2) -> SpinState:
    """Product Bernoulli(density) configuration."""
    draws = rng.random(side**dim) < density
    return SpinState.on_torus(side, (site for site, on in zip(torus_sites(side, dim), draws) if on), dim)


def ring_mask(model: RateModel, state: SpinState, x: LatticeVector) -> int:
    mask = 0
    for i, z in enumerate(model.neighbourhood.sites):
        if state.shift(x, z) in state.ones:
            mask |= 1 << i
    return mask


# Components and clocks


@dataclass(frozen=True)
class KillSpec:
    """Rates multiplied by 1(x in (-M0, M0)^d)."""

    half_width: int

    def inside(self, x: LatticeVector) -> bool:
        return all(abs(c) < self.half_width for c in x)

    def restrict(self, state: SpinState) -> SpinState:
        out = state.copy()
        out.ones = {x for x in state.ones if self.inside(x)}
        return out


@dataclass(frozen=True)
class Component:
    """One coupled process: a rate model, optionally killed outside a box."""

    name: str
    model: RateModel
    kill: Optional[KillSpec] = None

    def rate(self, state: SpinState, x: LatticeVector) -> float:
        if self.kill is not None and not self.kill.inside(x):
            return 0.0
        return float(self.model.table[1 if x in state.ones else 0, ring_mask(self.model, state, x)])


class SiteClock:
    """
    Marked Poisson clock of one site.

    Events arrive at rate 2 * bound; each carries the stream bit (0: 0->1
    proposal, 1: 1->0 proposal) and a mark uniform on [0, bound]. Draws come
    from the site's own keyed stream in a fixed order.
    """

    def __init__(self, generator: np.random.Generator, bound: float):
        self.generator = generator
        self.bound = bound

    def next_after(self, time: float) -> tuple[float, int, float]:
        dt = self.generator.exponential(1.0 / (2.0 * self.bound))
        bit = int(self.generator.integers(2))
        mark = self.generator.uniform(0.0, self.bound)
        return time + dt, bit, mark


def thinned_times(rate: float, bound: float, horizon: float, seed: Optional[int] = None) -> np.ndarray:
    """
    Accepted event times of one site with constant rate, thinned from its clock.

    A site holding a 0 only reacts to the 0 -> 1 stream, so accepted events
    of that stream form a rate-`rate` Poisson process.
    """
    if not 0.0 < rate <= bound:
        raise SimulationError(f"Need 0 < rate <= bound, got rate={rate}, bound={bound}", exit_code=2)
    clock = SiteClock(stream(seed, PURPOSE_SPIN, 0), bound)
    times = []
    t = 0.0
    while True:
        t, bit, mark = clock.next_after(t)
        if t > horizon:
            return np.array(times)
        if bit == 0 and mark <= rate:
            times.append(t)


class EventSchedule:
    """Heap of next clock times over the active sites."""

    def __init__(self, seed: Optional[int], replicate: int, bound: float, cap: int):
        self.streams = SiteStreams(seed, PURPOSE_SPIN, replicate)
        self.bound = bound
        self.cap = cap
        self.clocks: dict[LatticeVector, SiteClock] = {}
        self.scheduled: set = set()
        self.heap: list = []

    def activate(self, x: LatticeVector, now: float) -> None:
        if x in self.scheduled:
            return
        clock = self.clocks.get(x)
        if clock is None:
            clock = SiteClock(self.streams(x), self.bound)
            self.clocks[x] = clock
        self.scheduled.add(x)
        if len(self.scheduled) > self.cap:
            raise ActiveSetOverflow(len(self.scheduled), self.cap)
        heapq.heappush(self.heap, (*clock.next_after(now), x))

    def pop(self) -> tuple[float, int, float, LatticeVector]:
        return heapq.heappop(self.heap)

    def reschedule(self, x: LatticeVector, now: float) -> None:
        heapq.heappush(self.heap, (*self.clocks[x].next_after(now), x))

    def retire(self, x: LatticeVector) -> None:
        self.scheduled.discard(x)

    def __len__(self) -> int:
        return len(self.heap)


# Trajectories


@dataclass
class EventLog:
    """Accepted flips of one component: (time, site, new bit)."""

    times: list = field(default_factory=list)
    sites: list = field(default_factory=list)
    bits: list = field(default_factory=list)

    def record(self, time: float, site: LatticeVector, bit: int) -> None:
        self.times.append(time)
        self.sites.append(site)
        self.bits.append(bit)

    def __len__(self) -> int:
        return len(self.times)

    def as_arrays(self, dim: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sites = np.array(self.sites, dtype=np.int64).reshape(len(self.sites), dim)
        return np.array(self.times, dtype=float), sites, np.array(self.bits, dtype=np.int8)


@dataclass
class Trajectory:
    name: str
    model: RateModel
    initial: SpinState
    final: SpinState
    events: EventLog
    horizon: float
    proposals: int = 0
    stopped_at: Optional[float] = None

    def replay(self) -> Iterable[tuple[float, SpinState]]:
        """States after each event (the same SpinState object, mutated in place)."""
        state = self.initial.copy()
        for t, x, bit in zip(self.events.times, self.events.sites, self.events.bits):
            if bit:
                state.ones.add(x)
            else:
                state.ones.discard(x)
            state.time = t
            yield t, state


@dataclass
class CoupledRun:
    trajectories: dict[str, Trajectory]
    orderings: list[tuple[str, str]]
    events_checked: int
    proposals: int

    def __getitem__(self, name: str) -> Trajectory:
        return self.trajectories[name]


@dataclass
class CouplingSpec:
    """
    Components driven by common noise.

    Attributes:
        components: The coupled processes
        initial: Shared initial state, or one per component name
        orderings: (lower, upper) component names that must stay ordered
        check: Verify the orderings after every event
    """

    components: list[Component]
    initial: SpinState | dict[str, SpinState]
    orderings: list[tuple[str, str]] = field(default_factory=list)
    check: bool = True

    def initial_for(self, component: Component) -> SpinState:
        state = self.initial[component.name] if isinstance(self.initial, dict) else self.initial
        state = state.copy()
        if component.kill is not None:
            state = component.kill.restrict(state)
        return state


def _simulate(
    spec: CouplingSpec,
    horizon: float,
    seed: Optional[int],
    replicate: int,
    cap: Optional[int],
    stop: Optional[Callable[[list[SpinState], float], bool]] = None,
) -> CoupledRun:
    if horizon <= 0:
        raise HorizonNonpositive(horizon)
    components = spec.components
    states = [spec.initial_for(c) for c in components]
    first = states[0]
    if any(s.torus != first.torus or s.dim != first.dim for s in states):
        raise SimulationError("Coupled components must share one geometry", exit_code=2)
    for c in components:
        if c.model.table[0, 0] != 0 and first.torus is None:
            raise SimulationError(f"{c.name}: rates must vanish on the all-zero window on Z^d", exit_code=2)
    bound = max(c.model.max_rate for c in components)
    logs = [EventLog() for _ in components]
    initial = [s.copy() for s in states]
    if bound <= 0:
        return _finish(spec, initial, states, logs, horizon, 0, 0, None)

    closed = (tuple([0] * first.dim),) + components[0].model.neighbourhood.sites
    index = {c.name: i for i, c in enumerate(components)}
    pairs = [(index[lo], index[hi]) for lo, hi in spec.orderings]
    schedule = EventSchedule(seed, replicate, bound, settings.ACTIVE_SET_CAP if cap is None else cap)

    def active(x: LatticeVector) -> bool:
        return any(first.shift(x, z) in s.ones for s in states for z in closed)

    everywhere = first.torus is not None and any(not c.model.traps for c in components)
    if everywhere:
        for x in torus_sites(first.torus, first.dim):
            schedule.activate(x, 0.0)
    else:
        for s in states:
            for y in s.ones:
                for z in closed:
                    schedule.activate(first.shift(y, z), 0.0)

    proposals = 0
    checked = 0
    stopped_at = None
    while schedule:
        t, bit, mark, x = schedule.pop()
        if t > horizon:
            break
        if not everywhere and not active(x):
            schedule.retire(x)
            continue
        proposals += 1
        flipped = False
        for k, (c, s) in enumerate(zip(components, states)):
            value = 1 if x in s.ones else 0
            if value == bit and mark <= c.rate(s, x):
                if c.model.traps and s.is_constant():
                    raise SimulationError(f"{c.name} left a trap configuration at t={t:.6g} (site {x})")
                if bit:
                    s.ones.discard(x)
                else:
                    s.ones.add(x)
                logs[k].record(t, x, 1 - bit)
                flipped = True
                if not bit and not everywhere:
                    for z in closed:
                        schedule.activate(s.shift(x, z), t)
        schedule.reschedule(x, t)
        if flipped and spec.check and pairs:
            checked += 1
            for lo, hi in pairs:
                if x in states[lo].ones and x not in states[hi].ones:
                    raise OrderingViolated(
                        witness={
                            "time": t,
                            "site": x,
                            "lower": components[lo].name,
                            "upper": components[hi].name,
                        }
                    )
        if flipped and stop is not None and stop(states, t):
            stopped_at = t
            break
    return _finish(spec, initial, states, logs, horizon, proposals, checked, stopped_at)


def _finish(spec, initial, states, logs, horizon, proposals, checked, stopped_at) -> CoupledRun:
    end = stopped_at if stopped_at is not None else horizon
    trajectories = {}
    for c, init, s, log in zip(spec.components, initial, states, logs):
        s.time = end
        trajectories[c.name] = Trajectory(
            name=c.name,
            model=c.model,
            initial=init,
            final=s,
            events=log,
            horizon=horizon,
            proposals=proposals,
            stopped_at=stopped_at,
        )
    return CoupledRun(trajectories=trajectories, orderings=list(spec.orderings), events_checked=checked, proposals=proposals)


def run(
    model: RateModel,
    initial: SpinState,
    horizon: float,
    seed: Optional[int] = None,
    replicate: int = 0,
    cap: Optional[int] = None,
) -> Trajectory:
    """
    Simulate one spin system up to `horizon`.

    Raises:
        HorizonNonpositive: horizon <= 0
        ActiveSetOverflow: more than `cap` sites carry clocks
    """
    spec = CouplingSpec(components=[Component("xi", model)], initial=initial)
    trajectory = _simulate(spec, horizon, seed, replicate, cap)["xi"]
    logger.debug(f"{model.family}: {len(trajectory.events)} flips from {trajectory.proposals} proposals")
    return trajectory


def killed_run(
    model: RateModel,
    kill: KillSpec,
    initial: SpinState,
    horizon: float,
    seed: Optional[int] = None,
    replicate: int = 0,
    cap: Optional[int] = None,
) -> Trajectory:
    """Dynamics with all flips suppressed outside the kill box; the initial state is restricted to it."""
    spec = CouplingSpec(components=[Component("xi", model, kill)], initial=initial)
    return _simulate(spec, horizon, seed, replicate, cap)["xi"]


# Comparison condition


def comparison_condition(lower: RateModel, upper: RateModel, atol: float = COMPARISON_TOL) -> tuple[bool, Optional[dict]]:
    """
    For every pair of windows with ring(lower) contained in ring(upper):
    c_upper >= c_lower when both centers are 0, c_upper <= c_lower when both are 1.

    Returns:
        (holds, witness of the first failure)
    """
    if lower.neighbourhood != upper.neighbourhood:
        raise RateError("Compared models live on different neighbourhoods", exit_code=2)
    n = len(lower.neighbourhood)
    if n > MAX_COMPARISON_SITES:
        raise RateError(f"|N| = {n} exceeds the {MAX_COMPARISON_SITES}-site limit of the comparison check")
    digits = (np.arange(3**n)[:, None] // 3 ** np.arange(n)) % 3
    weights = 1 << np.arange(n)
    lo = (digits == 2).astype(np.int64) @ weights
    hi = (digits >= 1).astype(np.int64) @ weights
    zero_fail = upper.table[0, hi] < lower.table[0, lo] - atol
    one_fail = upper.table[1, hi] > lower.table[1, lo] + atol
    for center, failures in ((0, zero_fail), (1, one_fail)):
        if failures.any():
            k = int(np.argmax(failures))
            return False, {
                "center": center,
                "lower_ring": int(lo[k]),
                "upper_ring": int(hi[k]),
                "lower_rate": float(lower.table[center, lo[k]]),
                "upper_rate": float(upper.table[center, hi[k]]),
            }
    return True, None


def check_comparison(lower: Component, upper: Component) -> None:
    if upper.kill is not None and (lower.kill is None or lower.kill.half_width > upper.kill.half_width):
        raise ComparisonConditionFails(
            f"{upper.name} is killed outside a box that does not contain {lower.name}'s",
            witness={"lower": lower.name, "upper": upper.name},
        )
    holds, witness = comparison_condition(lower.model, upper.model)
    if not holds:
        raise ComparisonConditionFails(
            f"Comparison condition fails for ({lower.name}, {upper.name})",
            witness=witness,
        )


def run_coupled(
    spec: CouplingSpec,
    horizon: float,
    seed: Optional[int] = None,
    replicate: int = 0,
    cap: Optional[int] = None,
) -> CoupledRun:
    """
    Drive every component with the same marked clocks.

    The comparison condition is verified exhaustively for each declared
    ordering before any event is drawn; the orderings are then checked at
    the flipped site after every event.

    Raises:
        ComparisonConditionFails: at setup
        OrderingViolated: at runtime
    """
    by_name = {c.name: c for c in spec.components}
    if len(by_name) != len(spec.components):
        raise SimulationError("Component names must be unique", exit_code=2)
    for lo, hi in spec.orderings:
        check_comparison(by_name[lo], by_name[hi])
        if not spec.initial_for(by_name[lo]).ones <= spec.initial_for(by_name[hi]).ones:
            raise ComparisonConditionFails(f"Initial states of ({lo}, {hi}) are not ordered")
    result = _simulate(spec, horizon, seed, replicate, cap)
    logger.debug(f"Coupled run: {result.proposals} proposals, {result.events_checked} ordering checks")
    return result


# Rescaled and biased voter models


def w_n(norm: float, min_weight: float, n_scale: float) -> float:
    """w_N = 1 - (||r|| / p-underbar) eps_N."""
    return 1.0 - norm / min_weight * eps_of_n(n_scale)


def rescaled_model(family: PerturbationFamily, n_scale: float, eps: Optional[float] = None) -> RateModel:
    """N c_eps with eps = eps_N unless given."""
    eps = eps_of_n(n_scale) if eps is None else eps
    return family.model(eps).scaled(n_scale, family=f"{family.name}[N={n_scale:g}]")


def rescaled_voter(family: PerturbationFamily, n_scale: float, norm: Optional[float] = None) -> RateModel:
    """N w_N c^vm."""
    kernel = family.kernel
    norm = norm_r(family) if norm is None else norm
    factor = n_scale * w_n(norm, kernel.min_weight, n_scale)
    return RateModel(family="voter", params={"scale": factor}, kernel=kernel, table=voter_table(kernel) * factor)


def biased_voter_model(family: PerturbationFamily, n_scale: float, norm: Optional[float] = None) -> RateModel:
    """
    N w_N c^vm + xi-hat(x) (2 + 1/p-underbar) ||r|| (log N)^3 n_1(x, xi).

    Args:
        family: Perturbation family fixing the kernel and ||r||
        n_scale: N
        norm: ||r|| (computed from the family when omitted)
    """
    kernel = family.kernel
    norm = norm_r(family) if norm is None else norm
    p_min = kernel.min_weight
    factor = n_scale * w_n(norm, p_min, n_scale)
    bias = (2.0 + 1.0 / p_min) * norm * math.log(n_scale) ** 3
    features = window_features(kernel)
    table = voter_table(kernel) * factor
    table[0] += bias * features.ones
    return RateModel(
        family="biased_voter",
        params={"N": n_scale, "w_N": factor / n_scale, "bias": bias},
        kernel=kernel,
        table=table,
    )


def comparison_spec(
    family: PerturbationFamily,
    n_scale: float,
    initial: SpinState,
    eps: Optional[float] = None,
    norm: Optional[float] = None,
) -> CouplingSpec:
    """xi^N, the rescaled voter model and the biased voter bound from a common start."""
    norm = norm_r(family) if norm is None else norm
    return CouplingSpec(
        components=[
            Component("xi", rescaled_model(family, n_scale, eps)),
            Component("voter", rescaled_voter(family, n_scale, norm)),
            Component("biased", biased_voter_model(family, n_scale, norm)),
        ],
        initial=initial,
        orderings=[("xi", "biased"), ("voter", "biased")],
    )


def killing_spec(model: RateModel, kill: KillSpec, initial: SpinState) -> CouplingSpec:
    return CouplingSpec(
        components=[Component("killed", model, kill), Component("unkilled", model)],
        initial=initial,
        orderings=[("killed", "unkilled")],
    )


# Coexistence


def density_exit_time(
    model: RateModel,
    side: int,
    band: tuple[float, float] = (0.2, 0.8),
    seed: Optional[int] = None,
    replicate: int = 0,
    horizon: float = 1e4,
    density: float = 0.5,
) -> float:
    """
    First time the torus density leaves the open band, or `horizon` if it never does.

    The initial state is product Bernoulli(density) from the replicate's
    initial-condition stream, so runs with the same (seed, replicate) but
    different models start from the same configuration.
    """
    lo, hi = band
    initial = random_torus_state(side, density, stream(seed, PURPOSE_INITIAL, replicate), model.neighbourhood.dim)
    if not lo < initial.density < hi:
        return 0.0

    def left_band(states: Sequence[SpinState], t: float) -> bool:
        return not lo < states[0].density < hi

    spec = CouplingSpec(components=[Component("xi", model)], initial=initial)
    result = _simulate(spec, horizon, seed, replicate, cap=initial.size, stop=left_band)["xi"]
    return result.stopped_at if result.stopped_at is not None else horizon
