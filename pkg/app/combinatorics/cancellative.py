"""
Cancellativity certificates for nonlinear voter models.

A nonlinear voter model with rates a_1..a_n (a_j when j of the n neighbours
disagree) is cancellative when a = alpha M for some alpha >= 0, where
M(k, j) = sum over odd i <= min(j, k) of C(j, i) C(n - j, k - i).
All matrix work is exact: M is an integer matrix and its inverse is
computed by fraction-free Gauss-Jordan elimination.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from app.errors import (
    AlgebraError,
    FormsDisagree,
    NegativeAlpha,
    NoValidQ,
    RoundTripMismatch,
    Singular,
)
from app.logging_config import get_logger

logger = get_logger(__name__)

MAX_N = 16

# q_c search
QC_GRID_POINTS = 10_000
QC_TOLERANCE = 1e-9
# alpha components within this of zero count as zero
ALPHA_SLACK = 1e-12

DERIVATIVE_STEP = 1e-6


@dataclass(frozen=True)
class DualMatrix:
    """Exact integer matrix M(k, j), 1-based in the formulas, 0-based here."""

    n: int
    entries: tuple[tuple[int, ...], ...]

    def __getitem__(self, kj: tuple[int, int]) -> int:
        k, j = kj
        return self.entries[k][j]

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=object)


@dataclass(frozen=True)
class AlphaVector:
    """
    alpha_k = sum_l c[l][k] a_l with exact rational c = M^-1.

    Evaluation happens in floating point from the exact coefficients.
    """

    n: int
    inverse: tuple[tuple[Fraction, ...], ...]

    @property
    def float_inverse(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.inverse])

    def __call__(self, a: Sequence[float] | np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=float) @ self.float_inverse


@dataclass(frozen=True)
class CancellativeRep:
    """
    (k0, beta0) with beta0 indexed by subsets A of N-bar.

    Subsets of N-bar are bitmasks: bit 0 is the origin, bits 1..n the
    neighbourhood positions.
    """

    n: int
    k0: float
    beta0: np.ndarray
    alpha: np.ndarray

    def beta(self, subset: Sequence[int]) -> float:
        """beta0 of a subset given as positions in 0..n (0 = origin)."""
        mask = 0
        for position in subset:
            mask |= 1 << position
        return float(self.beta0[mask])


def build_M(n: int) -> DualMatrix:
    """M(k, j) for 1 <= k, j <= n."""
    if not 2 <= n <= MAX_N:
        raise AlgebraError(f"n must lie in [2, {MAX_N}], got {n}", exit_code=2)
    rows = []
    for k in range(1, n + 1):
        row = []
        for j in range(1, n + 1):
            row.append(sum(math.comb(j, i) * math.comb(n - j, k - i) for i in range(1, min(j, k) + 1, 2)))
        rows.append(tuple(row))
    return DualMatrix(n=n, entries=tuple(rows))


def _fraction_free_inverse(matrix: Sequence[Sequence[int]]) -> list[list[Fraction]]:
    """
    Fraction-free Gauss-Jordan on [A | I].

    Every intermediate entry stays an integer (each division by the previous
    pivot is exact); at the end the left block is det * I and the right block
    is the adjugate up to the row exchanges already applied.
    """
    n = len(matrix)
    work = [list(map(int, row)) + [int(i == r) for i in range(n)] for r, row in enumerate(matrix)]
    previous = 1
    for k in range(n):
        pivot_row = next((r for r in range(k, n) if work[r][k] != 0), None)
        if pivot_row is None:
            raise Singular(f"Matrix of order {n} is singular (column {k + 1})")
        if pivot_row != k:
            work[k], work[pivot_row] = work[pivot_row], work[k]
        pivot = work[k][k]
        for i in range(n):
            if i == k:
                continue
            factor = work[i][k]
            row = work[i]
            for j in range(2 * n):
                if j == k:
                    continue
                value, remainder = divmod(pivot * row[j] - factor * work[k][j], previous)
                if remainder:
                    raise AlgebraError("Inexact division in fraction-free elimination")
                row[j] = value
            row[k] = 0
        previous = pivot
    return [[Fraction(work[i][n + j], work[i][i]) for j in range(n)] for i in range(n)]


def invert_M(M: DualMatrix) -> tuple[tuple[Fraction, ...], ...]:
    """
    Exact rational inverse of M.

    Raises:
        Singular: if M is not invertible
    """
    inverse = _fraction_free_inverse(M.entries)
    n = M.n
    for i in range(n):
        for j in range(n):
            entry = sum(M.entries[i][k] * inverse[k][j] for k in range(n))
            if entry != (1 if i == j else 0):
                raise AlgebraError(f"M M^-1 differs from identity at ({i + 1}, {j + 1})")
    return tuple(tuple(row) for row in inverse)


@lru_cache(maxsize=None)
def alpha_vector(n: int) -> AlphaVector:
    return AlphaVector(n=n, inverse=invert_M(build_M(n)))


def qvoter_rates(n: int, q: float) -> np.ndarray:
    """a_l = (l/n)^q, l = 1..n."""
    return (np.arange(1, n + 1) / n) ** q


def alpha_at(n: int, a: Optional[Sequence[float]] = None, q: Optional[float] = None) -> np.ndarray:
    """
    alpha = a M^-1 for explicit rates a or q-voter rates at q.

    Args:
        n: |N|
        a: Rates a_1..a_n (nonnegative, not all zero)
        q: q-voter exponent, used when a is None
    """
    if a is None:
        if q is None:
            raise AlgebraError("Need rates a or exponent q", exit_code=2)
        a = qvoter_rates(n, q)
    a = np.asarray(a, dtype=float)
    if len(a) != n or np.any(a < 0) or not np.any(a > 0):
        raise AlgebraError("Rates must be n nonnegative numbers, not all zero", exit_code=2)
    return alpha_vector(n)(a)


def alpha_curve(n: int, qs: np.ndarray) -> np.ndarray:
    """alpha(q) for many q at once, shape (len(qs), n)."""
    ells = np.arange(1, n + 1) / n
    a = ells[None, :] ** np.asarray(qs, dtype=float)[:, None]
    return a @ alpha_vector(n).float_inverse


# Derivatives at q = 1


def _factor(m: int) -> dict[int, int]:
    factors: dict[int, int] = {}
    p = 2
    while p * p <= m:
        while m % p == 0:
            factors[p] = factors.get(p, 0) + 1
            m //= p
        p += 1
    if m > 1:
        factors[m] = factors.get(m, 0) + 1
    return factors


@dataclass(frozen=True)
class LogForm:
    """
    alpha'_k(1) = sum_p coefficients[p] log p = -(1/D) log(P/Q).
    """

    coefficients: dict[int, Fraction]
    denominator: int
    numerator_int: int
    denominator_int: int

    @property
    def log_sum(self) -> float:
        return math.fsum(float(c) * math.log(p) for p, c in sorted(self.coefficients.items()))

    @property
    def single_log(self) -> float:
        return -(math.log(self.numerator_int) - math.log(self.denominator_int)) / self.denominator


def alpha_prime_exact(n: int) -> list[LogForm]:
    """
    Exact closed forms of alpha'_k(1), k = 1..n.

    alpha_k(q) = sum_l M^-1(l, k) (l/n)^q, so
    alpha'_k(1) = sum_l M^-1(l, k) (l/n) (log l - log n), expanded over primes.
    """
    inverse = alpha_vector(n).inverse
    n_factors = _factor(n)
    forms = []
    for k in range(n):
        coefficients: dict[int, Fraction] = {}
        for ell in range(1, n + 1):
            weight = inverse[ell - 1][k] * Fraction(ell, n)
            if weight == 0:
                continue
            exponents = _factor(ell)
            for p in set(exponents) | set(n_factors):
                power = exponents.get(p, 0) - n_factors.get(p, 0)
                if power:
                    coefficients[p] = coefficients.get(p, Fraction(0)) + weight * power
        coefficients = {p: c for p, c in coefficients.items() if c != 0}
        denominator = math.lcm(*(c.denominator for c in coefficients.values())) if coefficients else 1
        numerator_int, denominator_int = 1, 1
        for p, c in coefficients.items():
            exponent = int(c * denominator)
            if exponent < 0:
                numerator_int *= p ** (-exponent)
            else:
                denominator_int *= p**exponent
        forms.append(
            LogForm(
                coefficients=coefficients,
                denominator=denominator,
                numerator_int=numerator_int,
                denominator_int=denominator_int,
            )
        )
    return forms


def alpha_prime_numeric(n: int, step: float = DERIVATIVE_STEP) -> np.ndarray:
    """Central difference of alpha(q) at q = 1."""
    return (alpha_at(n, q=1.0 + step) - alpha_at(n, q=1.0 - step)) / (2.0 * step)


def alpha_prime_at_1(n: int, tolerance: float = 1e-12) -> np.ndarray:
    """
    alpha'_l(1) for l = 1..n.

    For n = 8 both closed forms (log-sum and single-log) are evaluated and
    must agree; for other n the central difference is returned.

    Raises:
        FormsDisagree: the two closed forms differ by more than tolerance
    """
    if n != 8:
        return alpha_prime_numeric(n)
    values = []
    for k, form in enumerate(alpha_prime_exact(n), start=1):
        if not form.coefficients:
            values.append(0.0)
            continue
        log_sum, single = form.log_sum, form.single_log
        if abs(log_sum - single) > tolerance:
            raise FormsDisagree(witness={"ell": k, "log_sum": log_sum, "single_log": single})
        values.append(log_sum)
    return np.array(values)


# q_c


def find_qc(n: int, grid_points: int = QC_GRID_POINTS, tolerance: float = QC_TOLERANCE) -> float:
    """
    Smallest q* with alpha_l(q) >= 0 for all l and every q in [q*, 1].

    Scans a uniform grid, takes the suffix minimum of min_l alpha_l, and
    refines the last sign change by bisection.

    Raises:
        NoValidQ: the grid fails already just below q = 1
    """
    if not 2 <= n <= 8:
        raise AlgebraError(f"find_qc supports 2 <= n <= 8, got {n}", exit_code=2)
    qs = np.linspace(0.0, 1.0, grid_points + 1)
    lowest = alpha_curve(n, qs).min(axis=1)
    failing = np.nonzero(lowest < -ALPHA_SLACK)[0]
    if len(failing) == 0:
        logger.info(f"q_c(n={n}) = 0: every alpha is nonnegative on [0, 1]")
        return 0.0
    last = int(failing[-1])
    if last >= grid_points - 1:
        raise NoValidQ(f"alpha has a negative component at q = {qs[last]:.6f}")

    def min_alpha(q: float) -> float:
        return float(alpha_at(n, q=q).min())

    lo, hi = float(qs[last]), float(qs[last + 1])
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if min_alpha(mid) < -ALPHA_SLACK:
            lo = mid
        else:
            hi = mid
    logger.info(f"q_c(n={n}) = {hi:.10f}")
    return hi


# Representation and round trip


@lru_cache(maxsize=None)
def _parity_matrix(n: int) -> np.ndarray:
    """H(xi, A) = prod_{y in A} (2 xi(y) - 1) = (-1)^{#zeros of xi in A} over N-bar."""
    size = 1 << (n + 1)
    masks = np.arange(size)
    # zeros_in[A, xi] = A & ~xi
    zeros_in = masks[:, None] & ~masks[None, :] & (size - 1)
    counts = np.zeros((size, size), dtype=np.int64)
    for b in range(n + 1):
        counts += (zeros_in >> b) & 1
    return np.where(counts % 2 == 0, 1.0, -1.0)


def _set_weights(n: int, alpha: np.ndarray) -> np.ndarray:
    """Unnormalised per-set weights w(A) of the three-case rule."""
    size = 1 << (n + 1)
    weights = np.zeros(size)
    for mask in range(1, size):
        m = bin(mask).count("1")
        if m % 2 == 0 or mask == 1:
            continue
        weights[mask] = alpha[m - 1 - 1] if mask & 1 else alpha[m - 1]
    return weights


def rep_from_alpha(alpha: Sequence[float], n: int) -> CancellativeRep:
    """
    (k0, beta0) from alpha >= 0.

    beta0(A) is proportional to alpha_m for |A| = m odd with 0 not in A, to
    alpha_{m-1} for |A| = m odd with 0 in A, and zero otherwise; k0 is the
    total weight so that sum_A beta0(A) = 1.

    Raises:
        NegativeAlpha: some component is negative
    """
    alpha = np.asarray(alpha, dtype=float)
    if len(alpha) != n:
        raise AlgebraError(f"Need {n} alpha components, got {len(alpha)}", exit_code=2)
    if np.any(alpha < -ALPHA_SLACK):
        k = int(np.argmin(alpha))
        raise NegativeAlpha(f"alpha_{k + 1} = {alpha[k]:.3g} < 0")
    alpha = np.clip(alpha, 0.0, None)
    weights = _set_weights(n, alpha)
    k0 = float(weights.sum())
    if k0 <= 0:
        raise AlgebraError("alpha is identically zero")
    return CancellativeRep(n=n, k0=k0, beta0=weights / k0, alpha=alpha)


def cancellative_rates(rep: CancellativeRep) -> np.ndarray:
    """c(0, xi) = (k0/2)[1 - (2 xi(0) - 1) sum_A beta0(A) H(xi, A)] for every xi on N-bar."""
    parity = _parity_matrix(rep.n)
    total = rep.beta0 @ parity
    xi = np.arange(1 << (rep.n + 1))
    sign = np.where(xi & 1, 1.0, -1.0)
    return 0.5 * rep.k0 * (1.0 - sign * total)


def reconstruct_rates(rep: CancellativeRep, n: int, atol: float = 1e-10) -> np.ndarray:
    """
    Rates a_j read off the cancellative form at windows with xi(0) = 0.

    Raises:
        RoundTripMismatch: windows with the same count disagree, the center-1
            side breaks the 0/1 symmetry, or a differs from alpha M
    """
    if rep.n != n:
        raise AlgebraError(f"Representation is for n={rep.n}, not {n}", exit_code=2)
    rates = cancellative_rates(rep)
    xi = np.arange(1 << (n + 1))
    ring_ones = np.array([bin(int(m >> 1)).count("1") for m in xi])
    center = xi & 1
    a = np.zeros(n)
    for j in range(n + 1):
        zero_side = rates[(center == 0) & (ring_ones == j)]
        one_side = rates[(center == 1) & (ring_ones == n - j)]
        if np.ptp(zero_side) > atol or np.ptp(one_side) > atol:
            raise RoundTripMismatch(f"rate depends on more than the count at j={j}", witness={"j": j})
        if abs(zero_side[0] - one_side[0]) > atol:
            raise RoundTripMismatch("0/1 symmetry fails", witness={"j": j})
        if j == 0:
            if abs(zero_side[0]) > atol:
                raise RoundTripMismatch("all-zero window has a positive rate", witness={"rate": zero_side[0]})
            continue
        a[j - 1] = zero_side[0]
    M = np.array(build_M(n).entries, dtype=float)
    expected = rep.alpha @ M
    if not np.allclose(a, expected, rtol=0.0, atol=atol * max(1.0, float(np.abs(expected).max()))):
        raise RoundTripMismatch("a differs from alpha M", witness={"a": a.tolist(), "alpha_M": expected.tolist()})
    return a


@dataclass
class Certificate:
    n: int
    q: Optional[float]
    alpha: np.ndarray
    cancellative: bool
    k0: Optional[float]
    beta0: Optional[dict[str, float]]
    residual: Optional[float]


def certify(n: int, q: Optional[float] = None, a: Optional[Sequence[float]] = None) -> Certificate:
    """alpha, (k0, beta0) and round-trip residual for a nonlinear voter model."""
    rates = qvoter_rates(n, q) if a is None else np.asarray(a, dtype=float)
    alpha = alpha_at(n, a=rates)
    if np.any(alpha < -ALPHA_SLACK):
        logger.info(f"n={n}: alpha has negative components, no certificate")
        return Certificate(n=n, q=q, alpha=alpha, cancellative=False, k0=None, beta0=None, residual=None)
    rep = rep_from_alpha(alpha, n)
    reconstructed = reconstruct_rates(rep, n)
    residual = float(np.max(np.abs(reconstructed - rates)))
    table = {
        format(mask, f"0{n + 1}b")[::-1]: float(value)
        for mask, value in enumerate(rep.beta0)
        if value > 0
    }
    return Certificate(n=n, q=q, alpha=alpha, cancellative=True, k0=rep.k0, beta0=table, residual=residual)
