"""
Voter-model perturbation families.

A family is a map eps -> c_eps with c_eps = c^vm + eps * c*_eps, where
c*_eps(x, xi) = xi-hat(x) g1_eps(ring) + xi(x) g0_eps(ring). This module
recovers the g-tables from any family, evaluates their eps -> 0 limits
(closed form where known, Richardson extrapolation otherwise), the finite-N
weights r^{N,a}, r^{N,s} of the rescaled process, and the sign/size checks
that the scaling theory relies on.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from app.errors import (
    BoundViolated,
    NegativeTotalRate,
    NoLimit,
    OutOfRange,
    RateError,
    SignViolated,
)
from app.lattice.kernels import WalkKernel
from app.lattice.rates import (
    RATE_FLOOR,
    RateModel,
    _geometric_side,
    _positive_power,
    voter_table,
    window_features,
)
from app.logging_config import get_logger

logger = get_logger(__name__)

# Richardson ladder for families without closed-form limits
EXTRAPOLATION_EPS = (1e-2, 1e-3, 1e-4)
EXTRAPOLATION_TOL = 1e-6

# N-grid (powers of ten) scanned for the sup defining ||r||
NORM_GRID_DECADES = 12

# Default scan for eps_0
EPS0_GRID = tuple(np.round(np.linspace(0.01, 1.0, 100), 10))


@dataclass(frozen=True)
class GTables:
    """g0_eps[mask] (center 1) and g1_eps[mask] (center 0) over ring masks."""

    eps: float
    g0: np.ndarray
    g1: np.ndarray


@dataclass(frozen=True)
class AsymptoticRates:
    """Limit weights r^s(A), r^a(A) indexed by the bitmask of A (index 0 unused)."""

    r_s: np.ndarray
    r_a: np.ndarray
    norm_r: float
    closed_form: bool = True


@dataclass
class PerturbationFamily:
    """
    A one-parameter family of rate models approaching the voter model.

    Attributes:
        name: Family tag
        kernel: Walk kernel of the voter part
        table_at: eps -> raw rate table (2, 2^n), unchecked
        symmetric: c_eps(0, xi) = c_eps(0, xi-hat) for every eps
        limit_g0, limit_g1: closed-form eps -> 0 limits (None -> extrapolate)
        limit_r_a: closed-form asymmetric weight r^a (None -> zero if symmetric)
        params: Family constants
    """

    name: str
    kernel: WalkKernel
    table_at: Callable[[float], np.ndarray]
    symmetric: bool
    limit_g0: Optional[np.ndarray] = None
    limit_g1: Optional[np.ndarray] = None
    limit_r_a: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)
    eps_max: float = 1.0

    @property
    def neighbourhood(self):
        return self.kernel.neighbourhood

    def model(self, eps: float) -> RateModel:
        """The validated rate model c_eps."""
        if not 0.0 < eps <= self.eps_max:
            raise RateError(f"eps must lie in (0, {self.eps_max}], got {eps}")
        return RateModel(
            family=self.name,
            params={**self.params, "eps": eps},
            kernel=self.kernel,
            table=np.asarray(self.table_at(eps), dtype=float),
        )


# Family constructors


def voter_family(kernel: WalkKernel) -> PerturbationFamily:
    base = voter_table(kernel)
    zeros = np.zeros(base.shape[1])
    return PerturbationFamily(
        name="voter",
        kernel=kernel,
        table_at=lambda eps: base.copy(),
        symmetric=True,
        limit_g0=zeros,
        limit_g1=zeros,
    )


def _entropy(f: np.ndarray) -> np.ndarray:
    """-f log f with 0 log 0 = 0."""
    out = np.zeros_like(f)
    positive = f > 0
    out[positive] = -f[positive] * np.log(f[positive])
    return out


def qvoter_family(kernel: WalkKernel) -> PerturbationFamily:
    """q = 1 - eps."""
    w = window_features(kernel)
    return PerturbationFamily(
        name="qvoter",
        kernel=kernel,
        table_at=lambda eps: np.vstack([_positive_power(w.f1, 1.0 - eps), _positive_power(w.f0, 1.0 - eps)]),
        symmetric=True,
        limit_g0=_entropy(w.f0),
        limit_g1=_entropy(w.f1),
    )


def reflected_qvoter_family(kernel: WalkKernel) -> PerturbationFamily:
    """q = 1 + eps; the limit weights are the negatives of the q < 1 case."""
    w = window_features(kernel)
    return PerturbationFamily(
        name="reflected_qvoter",
        kernel=kernel,
        table_at=lambda eps: np.vstack([_positive_power(w.f1, 1.0 + eps), _positive_power(w.f0, 1.0 + eps)]),
        symmetric=True,
        limit_g0=-_entropy(w.f0),
        limit_g1=-_entropy(w.f1),
    )


def lv_alpha(eps: float, beta: float) -> float:
    """alpha_i = 1 - eps + beta_i (log 1/eps)^-2 eps."""
    if eps >= 1.0:
        return 1.0 - eps
    return 1.0 - eps + beta * eps / math.log(1.0 / eps) ** 2


def lotka_volterra_family(kernel: WalkKernel, beta0: float = 0.0, beta1: float = 0.0) -> PerturbationFamily:
    """alpha_i = 1 - eps + beta_i (log 1/eps)^-2 eps with constant beta_i."""
    w = window_features(kernel)

    def table_at(eps: float) -> np.ndarray:
        a0 = lv_alpha(eps, beta0)
        a1 = lv_alpha(eps, beta1)
        return np.vstack([w.f1 + (a0 - 1.0) * w.f1**2, w.f0 + (a1 - 1.0) * w.f0**2])

    return PerturbationFamily(
        name="lotka_volterra",
        kernel=kernel,
        table_at=table_at,
        symmetric=beta0 == beta1,
        limit_g0=-(w.f0**2),
        limit_g1=-(w.f1**2),
        limit_r_a=(beta0 - beta1) * w.f1**2,
        params={"beta0": beta0, "beta1": beta1},
        # eps < 1 keeps log(1/eps) finite
        eps_max=0.999,
    )


def affine_family(kernel: WalkKernel) -> PerturbationFamily:
    """alpha = 1 - eps."""
    w = window_features(kernel)
    vm = np.vstack([w.f1, w.f0])
    tv = np.vstack([(w.ones >= 1).astype(float), (w.zeros >= 1).astype(float)])
    return PerturbationFamily(
        name="affine",
        kernel=kernel,
        table_at=lambda eps: (1.0 - eps) * vm + eps * tv,
        symmetric=True,
        limit_g0=tv[1] - w.f0,
        limit_g1=tv[0] - w.f1,
    )


def geometric_family(kernel: WalkKernel) -> PerturbationFamily:
    """theta = 1 - eps."""
    w = window_features(kernel)
    n = w.n
    return PerturbationFamily(
        name="geometric",
        kernel=kernel,
        table_at=lambda eps: np.vstack(
            [_geometric_side(w.ones, n, 1.0 - eps), _geometric_side(w.zeros, n, 1.0 - eps)]
        ),
        symmetric=True,
        limit_g0=w.zeros * (n - w.zeros) / (2.0 * n),
        limit_g1=w.ones * (n - w.ones) / (2.0 * n),
    )


def tabulated_family(
    kernel: WalkKernel,
    g_tables: Callable[[float], tuple[np.ndarray, np.ndarray]],
    name: str = "tabulated",
    symmetric: bool = False,
) -> PerturbationFamily:
    """
    Family given directly by its perturbation tables.

    Args:
        kernel: Walk kernel of the voter part
        g_tables: eps -> (g0_eps, g1_eps) over ring masks
        name: Tag used in reports
        symmetric: Whether the caller guarantees complement symmetry
    """
    base = voter_table(kernel)

    def table_at(eps: float) -> np.ndarray:
        g0, g1 = g_tables(eps)
        return base + eps * np.vstack([np.asarray(g1, dtype=float), np.asarray(g0, dtype=float)])

    return PerturbationFamily(name=name, kernel=kernel, table_at=table_at, symmetric=symmetric)


FAMILY_BUILDERS = {
    "voter": voter_family,
    "qvoter": qvoter_family,
    "reflected_qvoter": reflected_qvoter_family,
    "lotka_volterra": lotka_volterra_family,
    "affine": affine_family,
    "geometric": geometric_family,
}


def build_family(kernel: WalkKernel, name: str, params: Optional[dict] = None) -> PerturbationFamily:
    """Construct a named family; LV accepts beta0/beta1."""
    key = name.lower()
    if key not in FAMILY_BUILDERS:
        raise RateError(f"Unknown perturbation family {name!r}; choose from {sorted(FAMILY_BUILDERS)}", exit_code=2)
    if key == "lotka_volterra":
        params = params or {}
        return lotka_volterra_family(kernel, float(params.get("beta0", 0.0)), float(params.get("beta1", 0.0)))
    return FAMILY_BUILDERS[key](kernel)


# Decomposition


def perturbation_decompose(family: PerturbationFamily, eps: float) -> GTables:
    """
    Recover (g0_eps, g1_eps) from c_eps = c^vm + eps (xi-hat g1 + xi g0).

    Raises:
        NegativeTotalRate: c_eps < 0 on some window
    """
    table = np.asarray(family.table_at(eps), dtype=float)
    if table.min() < RATE_FLOOR:
        raise NegativeTotalRate(f"{family.name} at eps={eps} has minimum rate {table.min():.3g}")
    base = voter_table(family.kernel)
    g1 = (table[0] - base[0]) / eps
    g0 = (table[1] - base[1]) / eps
    return GTables(eps=eps, g0=g0, g1=g1)


def reconstruct(family: PerturbationFamily, g: GTables) -> np.ndarray:
    """c^vm + eps * c* rebuilt from the g-tables."""
    base = voter_table(family.kernel)
    return base + g.eps * np.vstack([g.g1, g.g0])


def _richardson(values: Sequence[float], ratio: float) -> tuple[float, float]:
    """
    Neville tableau for step sizes shrinking by `ratio`.

    Returns the last two diagonal estimates.
    """
    row = list(values)
    diagonal = [row[-1]]
    power = ratio
    while len(row) > 1:
        row = [(power * row[i + 1] - row[i]) / (power - 1.0) for i in range(len(row) - 1)]
        diagonal.append(row[-1])
        power *= ratio
    return diagonal[-2], diagonal[-1]


def extrapolate_limits(family: PerturbationFamily) -> tuple[np.ndarray, np.ndarray]:
    """Numerical eps -> 0 limits of (g0, g1)."""
    ladder = [perturbation_decompose(family, eps) for eps in EXTRAPOLATION_EPS]
    ratio = EXTRAPOLATION_EPS[0] / EXTRAPOLATION_EPS[1]
    limits = []
    for side in ("g0", "g1"):
        stack = np.array([getattr(g, side) for g in ladder])
        previous, final = _richardson(list(stack), ratio)
        gap = float(np.max(np.abs(final - previous)))
        if gap > EXTRAPOLATION_TOL:
            raise NoLimit(f"{family.name}: {side} extrapolants differ by {gap:.3g}")
        limits.append(final)
    logger.debug(f"Extrapolated limits for {family.name}")
    return limits[0], limits[1]


def limit_tables(family: PerturbationFamily) -> tuple[np.ndarray, np.ndarray, bool]:
    """(g0, g1, closed_form?)."""
    if family.limit_g0 is not None and family.limit_g1 is not None:
        return family.limit_g0, family.limit_g1, True
    g0, g1 = extrapolate_limits(family)
    return g0, g1, False


# Rescaled weights


def eps_of_n(n_scale: float) -> float:
    """eps_N = (log N)^3 / N."""
    return math.log(n_scale) ** 3 / n_scale


def rescaled_weights(family: PerturbationFamily, n_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Finite-N weights over subsets A of N (index = mask of A).

    r^{N,a}(A) = (log N)^2 [g1(1_A) - g0(1_{N minus A})]
    r^{N,s}(A) = g0(1_{N minus A})
    """
    eps = eps_of_n(n_scale)
    g = perturbation_decompose(family, eps)
    full = family.neighbourhood.full_mask
    masks = np.arange(full + 1)
    g0_complement = g.g0[full ^ masks]
    r_a = math.log(n_scale) ** 2 * (g.g1 - g0_complement)
    r_s = g0_complement.copy()
    r_a[0] = 0.0
    r_s[0] = 0.0
    return r_a, r_s


def n_for_eps(eps: float, rel_tol: float = 1e-12) -> float:
    """
    Unique N > e^3 with (log N)^3 / N = eps, by bisection on log N.

    eps_N increases on (1, e^3) and decreases on (e^3, inf) with maximum
    27 / e^3 at N = e^3, so the inverse on N > e^3 exists for eps < 27 / e^3.

    Raises:
        OutOfRange: eps outside (0, 27 / e^3)
    """
    peak = 27.0 / math.e**3
    if not 0.0 < eps < peak:
        raise OutOfRange(f"eps must lie in (0, {peak:.6f}), got {eps}")
    lo, hi = 3.0, 3.0
    while hi**3 / math.exp(hi) > eps:
        hi *= 2.0
    # bisection on u = log N; u^3 e^-u is decreasing for u > 3
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid**3 / math.exp(mid) > eps:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def norm_r(family: PerturbationFamily, eps0: Optional[float] = None) -> float:
    """
    sup over N >= N(eps0) of |r^{N,a}|, |r^{N,s}| together with the limits.

    The supremum is taken over a decade grid and the limit tables.
    """
    g0, g1, _ = limit_tables(family)
    full = family.neighbourhood.full_mask
    masks = np.arange(1, full + 1)
    candidates = [float(np.max(np.abs(g0[full ^ masks])))]
    if family.limit_r_a is not None:
        candidates.append(float(np.max(np.abs(family.limit_r_a[1:]))))
    eps0 = eps0 if eps0 is not None else find_eps0(family)
    try:
        start = n_for_eps(eps0)
    except OutOfRange:
        start = math.e**3 * 1.0001
    for n_scale in np.geomspace(start, max(start * 10, 10.0**NORM_GRID_DECADES), 4 * NORM_GRID_DECADES):
        if eps_of_n(n_scale) > family.eps_max:
            continue
        r_a, r_s = rescaled_weights(family, float(n_scale))
        candidates.append(float(np.max(np.abs(r_a[1:]))))
        candidates.append(float(np.max(np.abs(r_s[1:]))))
    return max(candidates)


def extrapolate_r_a(family: PerturbationFamily, decades: Sequence[int] = (8, 10, 12)) -> np.ndarray:
    """
    r^a as the large-N value of r^{N,a} along a decade grid.

    Raises:
        NoLimit: the last two grid values differ by more than the tolerance
    """
    values = [rescaled_weights(family, 10.0**k)[0] for k in decades]
    gap = float(np.max(np.abs(values[-1] - values[-2])))
    if gap > EXTRAPOLATION_TOL:
        raise NoLimit(f"{family.name}: r^(N,a) still moves by {gap:.3g} at N=1e{decades[-1]}")
    return values[-1]


def asymptotic_rates(family: PerturbationFamily, eps0: Optional[float] = None) -> AsymptoticRates:
    """
    Limit weights r^s(A) = g1(1_A) and r^a(A).

    Raises:
        NoLimit: numeric extrapolation failed to stabilize
    """
    g0, g1, closed = limit_tables(family)
    r_s = g1.copy()
    r_s[0] = 0.0
    if family.limit_r_a is not None:
        r_a = family.limit_r_a.copy()
    elif family.symmetric:
        r_a = np.zeros_like(r_s)
    else:
        r_a = extrapolate_r_a(family)
    r_a[0] = 0.0
    return AsymptoticRates(r_s=r_s, r_a=r_a, norm_r=norm_r(family, eps0), closed_form=closed)


# Checks


def find_eps0(family: PerturbationFamily, grid: Iterable[float] = EPS0_GRID) -> float:
    """
    Largest grid eps such that c_eps' >= 0 on every window for all grid eps' <= eps.

    Raises:
        NegativeTotalRate: already the smallest grid value gives a negative rate
    """
    best = None
    for eps in sorted(float(e) for e in grid):
        if eps > family.eps_max:
            break
        if float(np.min(family.table_at(eps))) < RATE_FLOOR:
            break
        best = eps
    if best is None:
        raise NegativeTotalRate(f"{family.name}: no admissible eps on the grid")
    logger.debug(f"eps0 for {family.name}: {best}")
    return best


def r_eps(ell: int, n: int, eps: float) -> float:
    """r^eps_ell = ((ell/n)^(1-eps) - ell/n) / eps, zero at ell = 0."""
    if ell == 0:
        return 0.0
    f = ell / n
    return (f ** (1.0 - eps) - f) / eps


def r_ell(ell: int, n: int) -> float:
    """r_ell = (ell/n) log(n/ell), r_0 = 0."""
    if ell == 0:
        return 0.0
    return ell / n * math.log(n / ell)


@dataclass
class REpsReport:
    n: int
    checked: int
    max_deviation: float
    worst: tuple[int, float]


def check_r_eps_bound(n: int, eps_grid: Iterable[float]) -> REpsReport:
    """
    Verify |r^eps_ell - r_ell| <= eps and, for eps < 1 - 1/e, 0 < r^eps_ell <= 1.

    Raises:
        BoundViolated: with the offending (ell, eps)
    """
    if n < 2:
        raise RateError(f"n must be at least 2, got {n}")
    checked = 0
    worst = (0, 0.0)
    max_dev = 0.0
    for eps in eps_grid:
        if not 0.0 < eps < 1.0:
            raise RateError(f"eps must lie in (0, 1), got {eps}")
        for ell in range(n + 1):
            value = r_eps(ell, n, eps)
            deviation = abs(value - r_ell(ell, n))
            if deviation > max_dev:
                max_dev, worst = deviation, (ell, eps)
            if deviation > eps:
                raise BoundViolated("|r^eps_l - r_l| > eps", witness={"ell": ell, "eps": eps})
            if 1 <= ell <= n - 1 and eps < 1.0 - math.exp(-1.0) and not 0.0 < value <= 1.0:
                raise BoundViolated("r^eps_l outside (0, 1]", witness={"ell": ell, "eps": eps, "value": value})
            checked += 1
    return REpsReport(n=n, checked=checked, max_deviation=max_dev, worst=worst)


def subadditivity_check(r_s: np.ndarray, n_sites: int) -> tuple[bool, Optional[tuple[int, int]]]:
    """
    Strict subadditivity r(A u B) < r(A) + r(B) over disjoint nonempty A, B.

    Args:
        r_s: Values indexed by subset bitmask (length 2^n_sites)
        n_sites: |N|

    Returns:
        (holds, witness masks (A, B) or None)
    """
    r = np.asarray(r_s, dtype=float)
    size = 1 << n_sites
    if len(r) != size:
        raise RateError(f"Expected {size} subset values, got {len(r)}")
    masks = np.arange(size)
    for a in range(1, size):
        b = masks[(masks & a) == 0]
        b = b[b > a]
        if len(b) == 0:
            continue
        bad = r[a | b] >= r[a] + r[b]
        if bad.any():
            return False, (a, int(b[np.argmax(bad)]))
    return True, None


def count_subadditivity_check(r_counts: Sequence[float]) -> tuple[bool, Optional[tuple[int, int]]]:
    """Strict subadditivity r_{l1+l2} < r_{l1} + r_{l2} for count-indexed weights r_0..r_n."""
    n = len(r_counts) - 1
    for l1 in range(1, n):
        for l2 in range(l1, n - l1 + 1):
            if not r_counts[l1 + l2] < r_counts[l1] + r_counts[l2]:
                return False, (l1, l2)
    return True, None


def monotonicity_check(model: RateModel) -> tuple[bool, Optional[dict]]:
    """
    Attractiveness: adding ones never lowers a 0-site's rate nor raises a 1-site's.

    Checking covering pairs (masks differing in one site) is enough by transitivity.
    """
    n = len(model.neighbourhood)
    table = model.table
    masks = np.arange(1 << n)
    for i in range(n):
        bit = 1 << i
        low = masks[(masks & bit) == 0]
        high = low | bit
        up = table[0, high] < table[0, low] - 1e-12
        if up.any():
            k = int(np.argmax(up))
            return False, {"center": 0, "smaller": int(low[k]), "larger": int(high[k])}
        down = table[1, high] > table[1, low] + 1e-12
        if down.any():
            k = int(np.argmax(down))
            return False, {"center": 1, "smaller": int(low[k]), "larger": int(high[k])}
    return True, None


def lotka_volterra_monotone(alpha0: float, alpha1: float) -> bool:
    """Sufficient condition for LV attractiveness."""
    return max(alpha0, alpha1) >= 0.5


@dataclass
class SignReport:
    checked: int
    skipped: int
    min_value: float


def kernel_support_sign_check(family: PerturbationFamily, eps_grid: Iterable[float]) -> SignReport:
    """
    For every A with p(A) = 0 verify g0_eps(1_{N minus A}) >= 0.

    Raises:
        SignViolated: with (A mask, eps, value)
    """
    nbhd = family.neighbourhood
    kernel = family.kernel
    full = nbhd.full_mask
    zero_mass = [a for a in range(1, full + 1) if kernel.support_mass(nbhd.subset(a)) == 0]
    checked = 0
    min_value = math.inf
    for eps in eps_grid:
        g = perturbation_decompose(family, eps)
        for a in zero_mass:
            value = float(g.g0[full ^ a])
            min_value = min(min_value, value)
            if value < -1e-12:
                raise SignViolated(
                    "g0_eps(1_{N minus A}) < 0 although p(A) = 0",
                    witness={"A": nbhd.subset(a), "eps": eps, "value": value},
                )
            checked += 1
    skipped = full - len(zero_mass)
    return SignReport(checked=checked, skipped=skipped, min_value=min_value if checked else 0.0)

