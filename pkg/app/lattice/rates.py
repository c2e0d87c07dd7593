"""
Flip-rate models on local windows.

A window is the center bit together with the ring bits on x + N. Rates of
every model are tabulated once over all 2 * 2^|N| windows; ring bits are
packed into a bitmask following the neighbourhood's site order.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping

import numpy as np

from app.errors import KeyMismatch, NegativeTotalRate, RateError
from app.lattice.kernels import LatticeVector, Neighbourhood, WalkKernel, add

# Subset-indexed tables hold 2^|N| entries
MAX_TABLE_SITES = 16

# Numerical slack when checking nonnegativity of computed rates
RATE_FLOOR = -1e-12

FAMILIES = ("voter", "qvoter", "lotka_volterra", "affine", "geometric", "threshold", "tabulated")


@dataclass(frozen=True)
class LocalWindow:
    """Restriction of a configuration to x + N-bar, keyed relative to x."""

    center: int
    ring: Mapping[LatticeVector, int] = field(hash=False)

    def mask(self, nbhd: Neighbourhood) -> int:
        if set(self.ring) != set(nbhd.sites):
            raise KeyMismatch()
        return nbhd.mask_of(z for z, bit in self.ring.items() if bit)

    @classmethod
    def from_mask(cls, nbhd: Neighbourhood, center: int, mask: int) -> "LocalWindow":
        return cls(center=center, ring={z: mask >> i & 1 for i, z in enumerate(nbhd.sites)})


@dataclass(frozen=True)
class WindowFeatures:
    """Per-mask statistics of the ring shared by all rate formulas."""

    bits: np.ndarray  # (2^n, n) ring bits
    ones: np.ndarray  # number of ring ones
    f1: np.ndarray  # kernel-weighted density of ones
    n: int

    @property
    def zeros(self) -> np.ndarray:
        return self.n - self.ones

    @property
    def f0(self) -> np.ndarray:
        return 1.0 - self.f1


@lru_cache(maxsize=32)
def window_features(kernel: WalkKernel) -> WindowFeatures:
    nbhd = kernel.neighbourhood
    n = len(nbhd)
    if n > MAX_TABLE_SITES:
        raise RateError(f"|N| = {n} exceeds the {MAX_TABLE_SITES}-site limit for window tables")
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(np.int8)
    f1 = bits @ kernel.weight_vector
    # exact 0 and 1 at the constant rings
    f1[0] = 0.0
    f1[-1] = 1.0
    return WindowFeatures(bits=bits, ones=bits.sum(axis=1).astype(np.int64), f1=f1, n=n)


@dataclass(frozen=True)
class RateModel:
    """Translation-invariant flip rates tabulated as table[center, ring_mask]."""

    family: str
    params: Mapping[str, Any] = field(hash=False)
    kernel: WalkKernel
    table: np.ndarray = field(hash=False, compare=False)

    def __post_init__(self):
        self.table.setflags(write=False)
        low = float(self.table.min())
        if low < RATE_FLOOR:
            center, mask = np.unravel_index(int(self.table.argmin()), self.table.shape)
            raise NegativeTotalRate(
                f"{self.family} rate {low:.3g} < 0 at center={center}, ring mask={mask:#x}"
            )

    @property
    def neighbourhood(self) -> Neighbourhood:
        return self.kernel.neighbourhood

    @property
    def traps(self) -> bool:
        """Both constant configurations are absorbing."""
        return self.table[0, 0] == 0 and self.table[1, self.neighbourhood.full_mask] == 0

    @property
    def max_rate(self) -> float:
        return float(self.table.max())

    def rate(self, window: LocalWindow) -> float:
        return float(self.table[window.center, window.mask(self.neighbourhood)])

    def rate_at(self, center: int, mask: int) -> float:
        return float(self.table[center, mask])

    def ring_mask(self, ones: set, x: LatticeVector) -> int:
        """Bitmask of occupied ring sites around x."""
        mask = 0
        for i, z in enumerate(self.neighbourhood.sites):
            if add(x, z) in ones:
                mask |= 1 << i
        return mask

    def rate_in(self, ones: set, x: LatticeVector) -> float:
        """c(x, xi) for the configuration whose ones are given."""
        return float(self.table[1 if x in ones else 0, self.ring_mask(ones, x)])

    def scaled(self, factor: float, family: str | None = None) -> "RateModel":
        """The same dynamics with every rate multiplied by factor."""
        return RateModel(
            family=family or self.family,
            params={**self.params, "scale": self.params.get("scale", 1.0) * factor},
            kernel=self.kernel,
            table=self.table * factor,
        )

    def windows(self) -> Iterable[tuple[int, int, float]]:
        """All (center, ring mask, rate) triples."""
        for center in (0, 1):
            for mask, value in enumerate(self.table[center]):
                yield center, mask, float(value)


def _positive_power(f: np.ndarray, q: float) -> np.ndarray:
    """f**q with the convention 0**q = 0 (including q = 0)."""
    out = np.zeros_like(f)
    positive = f > 0
    out[positive] = f[positive] ** q
    return out


def _from_sides(family: str, params: dict, kernel: WalkKernel, zero_side: np.ndarray, one_side: np.ndarray) -> RateModel:
    return RateModel(family=family, params=params, kernel=kernel, table=np.vstack([zero_side, one_side]))


def voter(kernel: WalkKernel) -> RateModel:
    """c^vm: rate equals the kernel-weighted density of disagreeing neighbours."""
    w = window_features(kernel)
    return _from_sides("voter", {}, kernel, w.f1, w.f0)


def voter_table(kernel: WalkKernel) -> np.ndarray:
    w = window_features(kernel)
    return np.vstack([w.f1, w.f0])


def qvoter(kernel: WalkKernel, q: float) -> RateModel:
    """xi-hat * f1^q + xi * f0^q."""
    if q < 0:
        raise RateError(f"q must be nonnegative, got {q}")
    w = window_features(kernel)
    return _from_sides("qvoter", {"q": q}, kernel, _positive_power(w.f1, q), _positive_power(w.f0, q))


def lotka_volterra(kernel: WalkKernel, alpha0: float, alpha1: float) -> RateModel:
    """c^vm + xi-hat (alpha0 - 1) f1^2 + xi (alpha1 - 1) f0^2."""
    w = window_features(kernel)
    return _from_sides(
        "lotka_volterra",
        {"alpha0": alpha0, "alpha1": alpha1},
        kernel,
        w.f1 + (alpha0 - 1.0) * w.f1**2,
        w.f0 + (alpha1 - 1.0) * w.f0**2,
    )


def threshold(kernel: WalkKernel) -> RateModel:
    """Flip at rate 1 whenever some neighbour disagrees."""
    w = window_features(kernel)
    return _from_sides("threshold", {}, kernel, (w.ones >= 1).astype(float), (w.zeros >= 1).astype(float))


def affine(kernel: WalkKernel, alpha: float) -> RateModel:
    """alpha * c^vm + (1 - alpha) * c^tv."""
    if not 0.0 <= alpha <= 1.0:
        raise RateError(f"alpha must lie in [0, 1], got {alpha}")
    w = window_features(kernel)
    return _from_sides(
        "affine",
        {"alpha": alpha},
        kernel,
        alpha * w.f1 + (1.0 - alpha) * (w.ones >= 1),
        alpha * w.f0 + (1.0 - alpha) * (w.zeros >= 1),
    )


def _geometric_side(disagree: np.ndarray, n: int, theta: float) -> np.ndarray:
    if theta == 0.0:
        return (disagree >= 1).astype(float)
    if theta == 1.0:
        return disagree / n
    return (1.0 - theta ** disagree.astype(float)) / (1.0 - theta**n)


def geometric(kernel: WalkKernel, theta: float) -> RateModel:
    """(1 - theta^j) / (1 - theta^|N|) with j the number of disagreeing neighbours."""
    if not 0.0 <= theta <= 1.0:
        raise RateError(f"theta must lie in [0, 1], got {theta}")
    w = window_features(kernel)
    return _from_sides(
        "geometric",
        {"theta": theta},
        kernel,
        _geometric_side(w.ones, w.n, theta),
        _geometric_side(w.zeros, w.n, theta),
    )


def tabulated(kernel: WalkKernel, table: np.ndarray, label: str = "tabulated") -> RateModel:
    """Explicit rates, table[center, ring_mask]."""
    table = np.asarray(table, dtype=float)
    expected = (2, 1 << len(kernel.neighbourhood))
    if table.shape != expected:
        raise RateError(f"Rate table must have shape {expected}, got {table.shape}")
    return RateModel(family=label, params={}, kernel=kernel, table=table.copy())


def nonlinear_voter(kernel: WalkKernel, rates: Iterable[float]) -> RateModel:
    """Rate a_j when j neighbours disagree (a_0 = 0); symmetric in the two types."""
    a = np.concatenate([[0.0], np.asarray(list(rates), dtype=float)])
    w = window_features(kernel)
    if len(a) != w.n + 1:
        raise RateError(f"Need {w.n} rates a_1..a_n, got {len(a) - 1}")
    return _from_sides("nonlinear_voter", {"a": a[1:].tolist()}, kernel, a[w.ones], a[w.zeros])


def build_model(kernel: WalkKernel, name: str, params: Mapping[str, float]) -> RateModel:
    """
    Construct a rate model from a family name and parameter map.

    Args:
        kernel: Walk kernel (its neighbourhood fixes the window)
        name: One of FAMILIES (or "reflected_qvoter", an alias of qvoter)
        params: Family parameters (q, alpha0/alpha1, alpha, theta)

    Returns:
        RateModel
    """
    key = name.lower()
    try:
        if key == "voter":
            return voter(kernel)
        if key in ("qvoter", "reflected_qvoter"):
            return qvoter(kernel, float(params["q"]))
        if key == "lotka_volterra":
            return lotka_volterra(kernel, float(params["alpha0"]), float(params["alpha1"]))
        if key == "affine":
            return affine(kernel, float(params["alpha"]))
        if key == "geometric":
            return geometric(kernel, float(params["theta"]))
        if key == "threshold":
            return threshold(kernel)
    except KeyError as e:
        raise RateError(f"Family {name!r} needs parameter {e.args[0]!r}", exit_code=2)
    raise RateError(f"Unknown rate family {name!r}; choose from {', '.join(FAMILIES[:-1])}", exit_code=2)


def complement_symmetric(model: RateModel, atol: float = 1e-12) -> bool:
    """c(0, xi) = c(0, xi-hat) on every window."""
    full = model.neighbourhood.full_mask
    flipped = model.table[1, full ^ np.arange(full + 1)]
    return bool(np.allclose(model.table[0], flipped, rtol=0.0, atol=atol))
