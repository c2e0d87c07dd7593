"""
Voter-model duality with coalescing random walks.

E[prod_A xi_t(a) prod_B (1 - xi_t(b))] computed forward from the spin
system and backward from coalescing walkers started at A u B. On tiny
torii both sides are exact: the forward side through the generator oracle
and the dual side by uniformizing the CTMC of labelled walker positions.
"""

from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from app.errors import DualityViolated, SimulationError
from app.lattice.kernels import LatticeVector, WalkKernel
from app.lattice.rates import voter
from app.logging_config import get_logger
from app.services.coalescing import WalkerSystem
from app.services.estimators import RunningStat, merge_ordered
from app.services.oracle import oracle_distribution, product_indicator, site_index, uniformize
from app.services.replicates import run_batches
from app.services.rng import PURPOSE_INITIAL, purpose_tag, replicate_stream, stream
from app.services.simulator import SpinState, run, torus_sites

logger = get_logger(__name__)

EXACT_TOLERANCE = 1e-9
SIGMA_TOLERANCE = 3.0


@dataclass
class DualityReport:
    forward: float
    dual: float
    forward_error: float = 0.0
    dual_error: float = 0.0
    mode: str = "exact"

    @property
    def discrepancy(self) -> float:
        return abs(self.forward - self.dual)

    @property
    def tolerance(self) -> float:
        if self.mode == "exact":
            return EXACT_TOLERANCE
        return SIGMA_TOLERANCE * float(np.hypot(self.forward_error, self.dual_error))

    @property
    def passed(self) -> bool:
        return self.discrepancy < self.tolerance or (self.mode != "exact" and self.discrepancy == 0)


def _validate_sets(ones_at: Sequence[LatticeVector], zeros_at: Sequence[LatticeVector], side: Optional[int]):
    wrap = (lambda x: tuple(c % side for c in x)) if side else tuple
    a = [wrap(x) for x in ones_at]
    b = [wrap(x) for x in zeros_at]
    if set(a) & set(b) or len(set(a)) != len(a) or len(set(b)) != len(b):
        raise SimulationError("A and B must be disjoint sets of distinct sites", exit_code=2)
    return a, b


def _payoff(xi0: SpinState, positions: Sequence[LatticeVector], n_ones: int) -> float:
    value = 1.0
    for k, x in enumerate(positions):
        occupied = x in xi0.ones
        value *= occupied if k < n_ones else not occupied
    return value


# Exact dual


def dual_generator(kernel: WalkKernel, side: int, start: tuple[int, ...], rate: float = 1.0):
    """
    Reachable labelled-walker configurations and their sparse generator.

    Walkers sharing a site form one cluster and jump together at `rate`
    with the kernel's law.
    """
    dim = kernel.dim
    sites = torus_sites(side, dim)
    index = site_index(side, dim)
    moves = [
        [index[tuple((a + b) % side for a, b in zip(x, z))] for z in kernel.support] for x in sites
    ]
    probabilities = kernel.probabilities * rate
    states = {start: 0}
    frontier = [start]
    rows, cols, values = [], [], []
    while frontier:
        state = frontier.pop()
        i = states[state]
        for u in set(state):
            for target, weight in zip(moves[u], probabilities):
                if target == u:
                    continue
                nxt = tuple(target if v == u else v for v in state)
                j = states.get(nxt)
                if j is None:
                    j = states[nxt] = len(states)
                    frontier.append(nxt)
                rows += [i, i]
                cols += [j, i]
                values += [weight, -weight]
    n = len(states)
    generator = sparse.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
    ordered = sorted(states, key=states.get)
    return ordered, generator


def dual_expectation_exact(
    kernel: WalkKernel,
    side: int,
    xi0: SpinState,
    ones_at: Sequence[LatticeVector],
    zeros_at: Sequence[LatticeVector],
    t: float,
    rate: float = 1.0,
) -> float:
    a, b = _validate_sets(ones_at, zeros_at, side)
    if not a and not b:
        return 1.0
    index = site_index(side, kernel.dim)
    sites = torus_sites(side, kernel.dim)
    start = tuple(index[x] for x in a + b)
    states, generator = dual_generator(kernel, side, start, rate)
    p0 = np.zeros(len(states))
    p0[0] = 1.0
    law = uniformize(generator, p0, t)
    payoff = np.array([_payoff(xi0, [sites[k] for k in s], len(a)) for s in states])
    return float(law @ payoff)


def forward_expectation_exact(
    kernel: WalkKernel,
    side: int,
    xi0: SpinState,
    ones_at: Sequence[LatticeVector],
    zeros_at: Sequence[LatticeVector],
    t: float,
    rate: float = 1.0,
) -> float:
    a, b = _validate_sets(ones_at, zeros_at, side)
    model = voter(kernel) if rate == 1.0 else voter(kernel).scaled(rate)
    law = oracle_distribution(model, side, xi0, t)
    return float(law @ product_indicator(side, a, b, kernel.dim))


# Monte Carlo


def _forward_batch(kernel, xi0, a, b, t, rate, seed, start, stop) -> RunningStat:
    model = voter(kernel) if rate == 1.0 else voter(kernel).scaled(rate)
    stat = RunningStat()
    for replicate in range(start, stop):
        final = run(model, xi0, t, seed=seed, replicate=replicate).final
        stat.add(float(all(x in final.ones for x in a) and not any(x in final.ones for x in b)))
    return stat


def _dual_batch(kernel, xi0, a, b, t, rate, seed, start, stop) -> RunningStat:
    stat = RunningStat()
    system_sites = a + b
    for replicate in range(start, stop):
        rng = replicate_stream(seed, purpose_tag("dual"), replicate)
        system = _positions_at(system_sites, kernel, t, rng, rate, xi0.torus)
        stat.add(_payoff(xi0, system, len(a)))
    return stat


def _positions_at(sites, kernel, t, rng, rate, torus) -> list[LatticeVector]:
    system = WalkerSystem(sites, kernel, rng, rate=rate, torus=torus)
    system.advance(t)
    return [tuple(int(c) for c in system.positions[system.owner[k]]) for k in range(len(sites))]


def duality_check(
    kernel: WalkKernel,
    xi0: SpinState,
    ones_at: Sequence[LatticeVector],
    zeros_at: Sequence[LatticeVector],
    t: float,
    rate: float = 1.0,
    mode: str = "exact",
    replicates: int = 10_000,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> DualityReport:
    """
    Compare both sides of the voter duality relation.

    Args:
        kernel: Voter kernel (dual walkers jump with the same law)
        xi0: Initial configuration; exact mode needs a torus with <= 9 sites
        ones_at, zeros_at: The disjoint sets A and B
        t: Time
        rate: Voter rate multiplier (N w_N for the rescaled comparison voter model)
        mode: "exact" (oracle against dual enumeration) or "mc"

    Raises:
        DualityViolated: |forward - dual| at or above the tolerance
    """
    if mode == "exact":
        if xi0.torus is None:
            raise SimulationError("Exact duality needs a torus geometry", exit_code=2)
        report = DualityReport(
            forward=forward_expectation_exact(kernel, xi0.torus, xi0, ones_at, zeros_at, t, rate),
            dual=dual_expectation_exact(kernel, xi0.torus, xi0, ones_at, zeros_at, t, rate),
        )
    elif mode == "mc":
        a, b = _validate_sets(ones_at, zeros_at, xi0.torus)
        if t == 0:
            value = _payoff(xi0, a + b, len(a))
            report = DualityReport(forward=value, dual=value, mode="mc")
        else:
            forward = merge_ordered(
                run_batches(partial(_forward_batch, kernel, xi0, a, b, t, rate, seed), replicates, workers)
            )
            dual = merge_ordered(
                run_batches(partial(_dual_batch, kernel, xi0, a, b, t, rate, seed), replicates, workers)
            )
            report = DualityReport(
                forward=forward.mean,
                dual=dual.mean,
                forward_error=forward.std_error,
                dual_error=dual.std_error,
                mode="mc",
            )
    else:
        raise SimulationError(f"Unknown duality mode {mode!r}", exit_code=2)
    logger.info(f"Duality ({report.mode}): forward={report.forward:.10g} dual={report.dual:.10g}")
    if not report.passed:
        raise DualityViolated(
            f"|forward - dual| = {report.discrepancy:.3g} exceeds {report.tolerance:.3g}",
            witness={"forward": report.forward, "dual": report.dual, "t": t},
        )
    return report


@dataclass(frozen=True)
class DualityCase:
    xi0: SpinState
    ones_at: tuple[LatticeVector, ...]
    zeros_at: tuple[LatticeVector, ...]
    t: float


def random_cases(count: int, side: int = 3, max_time: float = 2.0, seed: Optional[int] = None) -> list[DualityCase]:
    """Random (xi0, A, B, t) with A u B one to four distinct sites."""
    cases = []
    sites = torus_sites(side)
    for k in range(count):
        rng = stream(seed, PURPOSE_INITIAL, purpose_tag("duality"), k)
        xi0 = SpinState.on_torus(side, (x for x, on in zip(sites, rng.random(len(sites)) < 0.5) if on))
        chosen = rng.permutation(len(sites))[: int(rng.integers(1, 5))]
        split = int(rng.integers(0, len(chosen) + 1))
        cases.append(
            DualityCase(
                xi0=xi0,
                ones_at=tuple(sites[i] for i in chosen[:split]),
                zeros_at=tuple(sites[i] for i in chosen[split:]),
                t=float(rng.uniform(0.0, max_time)),
            )
        )
    return cases
