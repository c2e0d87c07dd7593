"""
Exact transition probabilities of spin systems on tiny torii.

The generator over all 2^(L^d) configurations is assembled as a sparse
matrix and the time-t law is obtained by uniformization, with the Poisson
series cut once its tail mass drops below the tolerance.
"""

from typing import Iterable, Optional

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from app.errors import StateSpaceTooLarge
from app.lattice.kernels import LatticeVector
from app.lattice.rates import RateModel
from app.logging_config import get_logger
from app.services.simulator import SpinState, torus_sites

logger = get_logger(__name__)

MAX_ORACLE_SITES = 9
TAIL_TOLERANCE = 1e-12


def site_index(side: int, dim: int = 2) -> dict[LatticeVector, int]:
    return {site: i for i, site in enumerate(torus_sites(side, dim))}


def _flip_rates(model: RateModel, side: int) -> np.ndarray:
    """rates[s, i] = c(site i, configuration s)."""
    dim = model.neighbourhood.dim
    sites = torus_sites(side, dim)
    index = site_index(side, dim)
    states = np.arange(1 << len(sites), dtype=np.int64)
    bits = (states[:, None] >> np.arange(len(sites))) & 1
    rates = np.zeros((len(states), len(sites)))
    for i, x in enumerate(sites):
        mask = np.zeros(len(states), dtype=np.int64)
        for k, z in enumerate(model.neighbourhood.sites):
            y = tuple((a + b) % side for a, b in zip(x, z))
            mask |= bits[:, index[y]] << k
        rates[:, i] = model.table[bits[:, i], mask]
    return rates


def generator_matrix(model: RateModel, side: int) -> sparse.csr_matrix:
    """
    Q[s, s'] for the spin system on the side^d torus.

    Raises:
        StateSpaceTooLarge: more than MAX_ORACLE_SITES sites
    """
    n_sites = side ** model.neighbourhood.dim
    if n_sites > MAX_ORACLE_SITES:
        raise StateSpaceTooLarge(n_sites, MAX_ORACLE_SITES)
    rates = _flip_rates(model, side)
    n_states = rates.shape[0]
    states = np.arange(n_states)
    rows = np.repeat(states, n_sites)
    cols = (states[:, None] ^ (1 << np.arange(n_sites))).ravel()
    values = rates.ravel()
    keep = values > 0
    off_diagonal = sparse.csr_matrix((values[keep], (rows[keep], cols[keep])), shape=(n_states, n_states))
    return (off_diagonal - sparse.diags(rates.sum(axis=1))).tocsr()


def uniformize(generator: sparse.spmatrix, initial: np.ndarray, t: float, tolerance: float = TAIL_TOLERANCE) -> np.ndarray:
    """
    Row vector initial @ exp(t Q) by uniformization.

    Args:
        generator: Sparse CTMC generator Q
        initial: Initial probability vector
        t: Time (>= 0)
        tolerance: Bound on the neglected Poisson tail mass
    """
    p = np.asarray(initial, dtype=float)
    if t == 0:
        return p.copy()
    uniform_rate = float(np.max(-generator.diagonal()))
    if uniform_rate == 0:
        return p.copy()
    step = (sparse.identity(generator.shape[0], format="csr") + generator / uniform_rate).T.tocsr()
    mean = uniform_rate * t
    terms = int(poisson.isf(tolerance, mean)) + 1
    weights = poisson.pmf(np.arange(terms + 1), mean)
    result = weights[0] * p
    for k in range(1, terms + 1):
        p = step @ p
        result += weights[k] * p
    logger.debug(f"Uniformization: rate {uniform_rate:.4g}, {terms} terms, tail {poisson.sf(terms, mean):.2g}")
    return result


def oracle_distribution(model: RateModel, side: int, initial: SpinState, t: float) -> np.ndarray:
    """
    Law of the configuration at time t, indexed by the torus bitmask.

    Raises:
        StateSpaceTooLarge: side^d > 9
    """
    generator = generator_matrix(model, side)
    p0 = np.zeros(generator.shape[0])
    p0[initial.mask] = 1.0
    return uniformize(generator, p0, t)


def product_indicator(side: int, ones_at: Iterable[LatticeVector], zeros_at: Iterable[LatticeVector], dim: int = 2) -> np.ndarray:
    """prod_{a} xi(a) prod_{b} (1 - xi(b)) as a vector over configurations."""
    index = site_index(side, dim)
    states = np.arange(1 << side**dim, dtype=np.int64)
    out = np.ones(len(states))
    for a in ones_at:
        out *= (states >> index[tuple(c % side for c in a)]) & 1
    for b in zeros_at:
        out *= 1 - ((states >> index[tuple(c % side for c in b)]) & 1)
    return out


def constant_mass(distribution: np.ndarray, value: Optional[int] = 0) -> float:
    """P(all sites equal `value`)."""
    return float(distribution[0] if value == 0 else distribution[-1])
