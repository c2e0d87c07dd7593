"""
Exact partition inequalities and closed-form drift expressions.

Subset functions are indexed by bitmasks over the n sites of N. Partitions
live on N-bar (bit 0 = origin, bit i = site i - 1 of N), so a cell without
the origin maps to the N-mask cell >> 1.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

from app.combinatorics.partitions import SetPartition, bell_number, set_partitions
from app.errors import EstimationError, InequalityViolated
from app.logging_config import get_logger

logger = get_logger(__name__)

Number = Union[int, float, Fraction]

MAX_DETPI_SITES = 10
FLOAT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SubsetFunction:
    """r(A) for nonempty A subset of N; values[0] is ignored."""

    n: int
    values: tuple[Number, ...]
    name: str = "r"

    def __post_init__(self):
        if len(self.values) != 1 << self.n:
            raise ValueError(f"Need {1 << self.n} values for |N| = {self.n}, got {len(self.values)}")

    def __call__(self, mask: int) -> Number:
        return self.values[mask]

    @property
    def exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in self.values)

    @classmethod
    def from_counts(cls, n: int, by_size: Callable[[int], Number], name: str = "r") -> "SubsetFunction":
        """r(A) = by_size(|A|)."""
        values = [0] + [by_size(bin(mask).count("1")) for mask in range(1, 1 << n)]
        return cls(n=n, values=tuple(values), name=name)

    @classmethod
    def from_array(cls, values: Sequence[float], name: str = "r") -> "SubsetFunction":
        n = len(values).bit_length() - 1
        return cls(n=n, values=tuple(float(v) for v in values), name=name)

    def strictly_subadditive(self) -> bool:
        """r(A u B) < r(A) + r(B) for every disjoint nonempty pair."""
        size = 1 << self.n
        for a in range(1, size):
            rest = (size - 1) & ~a
            b = rest
            while b:
                if b > a and not self.values[a | b] < self.values[a] + self.values[b]:
                    return False
                b = (b - 1) & rest
        return True


def standard_weight_functions(n: int) -> dict[str, SubsetFunction]:
    """
    The five standard weight families on |N| = n.

    Rational families are exact; the q-voter weights involve logarithms.
    """
    return {
        "qvoter": SubsetFunction.from_counts(n, lambda k: k / n * math.log(n / k), "qvoter"),
        "lotka_volterra": SubsetFunction.from_counts(n, lambda k: -Fraction(k, n) ** 2, "lotka_volterra"),
        "affine": SubsetFunction.from_counts(n, lambda k: 1 - Fraction(k, n), "affine"),
        "geometric": SubsetFunction.from_counts(n, lambda k: Fraction(k * (n - k), 2 * n), "geometric"),
        "constant": SubsetFunction.from_counts(n, lambda k: 1, "constant"),
    }


def linear_weights(n: int) -> SubsetFunction:
    return SubsetFunction.from_counts(n, lambda k: k, "linear")


# Partition inequality


@dataclass(frozen=True)
class DetpiResult:
    lhs: Number
    rhs: Number
    strict: bool


def partition_sides(r: SubsetFunction, partition: SetPartition) -> tuple[Number, Number]:
    """
    lhs = sum_A r(A) 1(A in pi), rhs = sum_A r(A) 1(N-bar minus A = [0]).

    Both sums run over nonempty A subset of N.
    """
    outer = partition.outer_cells
    lhs = sum((r(cell >> 1) for cell in outer), 0)
    union = 0
    for cell in outer:
        union |= cell
    rhs = r(union >> 1) if union else 0
    return lhs, rhs


def detpi_check(
    r: SubsetFunction,
    partition: SetPartition,
    strictly_subadditive: Optional[bool] = None,
) -> DetpiResult:
    """
    Evaluate both sides of the partition inequality.

    Raises:
        InequalityViolated: lhs < rhs, or equality where strictness is required
            (|pi| > 2 with r strictly subadditive)
    """
    lhs, rhs = partition_sides(r, partition)
    tolerance = 0 if r.exact else FLOAT_TOLERANCE
    gap = lhs - rhs
    if gap < -tolerance:
        raise InequalityViolated(witness={"cells": partition.cells, "lhs": lhs, "rhs": rhs})
    strict = gap > tolerance
    if strictly_subadditive is None:
        strictly_subadditive = r.strictly_subadditive()
    if strictly_subadditive and len(partition) > 2 and not strict:
        raise InequalityViolated(
            "Equality on a partition with more than two cells", witness={"cells": partition.cells}
        )
    return DetpiResult(lhs=lhs, rhs=rhs, strict=strict)


@dataclass
class DetpiReport:
    function: str
    partitions: int = 0
    equalities: int = 0
    strict: int = 0
    violations: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def exhaustive_detpi(n_sites: int, r: SubsetFunction) -> DetpiReport:
    """
    Check the partition inequality on every set partition of N-bar.

    Args:
        n_sites: |N| (N-bar has n_sites + 1 elements)
        r: Weight function on subsets of N

    Returns:
        Counts of equality and strict cases plus the violating partitions
    """
    if n_sites + 1 > MAX_DETPI_SITES:
        raise EstimationError(f"|N-bar| = {n_sites + 1} exceeds {MAX_DETPI_SITES}", exit_code=2)
    subadditive = r.strictly_subadditive()
    report = DetpiReport(function=r.name)
    for partition in set_partitions(n_sites + 1):
        report.partitions += 1
        try:
            result = detpi_check(r, partition, subadditive)
        except InequalityViolated:
            report.violations.append(partition.cells)
            continue
        if result.strict:
            report.strict += 1
        else:
            report.equalities += 1
    assert report.partitions == bell_number(n_sites + 1)
    logger.info(
        f"detpi[{r.name}]: {report.partitions} partitions, {report.strict} strict, "
        f"{report.equalities} equal, {len(report.violations)} violations"
    )
    return report


# Closed-form drifts on shared samples


@dataclass
class ClosedFormDrifts:
    """Drift constants computed from one set of partition counts."""

    theta3: dict[str, float]
    theta2_lv: float
    kappa: float
    # exact residuals of the pathwise identities
    linear_residual: Fraction
    constant_residual: Fraction
    affine_minus_kappa: Fraction
    geometric_minus_scaled_lv: Fraction


def signed_counts(three_cell: dict[tuple[int, int], int], n: int) -> list[int]:
    """
    c(A) = #(A in pi) - #(N-bar minus A = [0]) over samples with |pi| = 3.

    three_cell maps the two N-masks of the outer cells (A1, A2) to counts.
    """
    counts = [0] * (1 << n)
    for (a1, a2), k in three_cell.items():
        counts[a1] += k
        counts[a2] += k
        counts[a1 | a2] -= k
    return counts


def weighted_sum(r: SubsetFunction, counts: Sequence[int]) -> Number:
    return sum((r(mask) * c for mask, c in enumerate(counts) if mask and c), 0)


def closed_form_drifts(
    n: int,
    three_cell: dict[tuple[int, int], int],
    two_cell: dict[int, int],
    samples: int,
    log_t: float,
    beta0: float = 0.0,
    beta1: float = 0.0,
) -> ClosedFormDrifts:
    """
    Theta_3 for the standard families, Theta_2 for Lotka-Volterra, and the
    exact identities linking them, from partition counts.

    Args:
        n: |N|
        three_cell: (A1, A2) -> number of samples with pi = {[0], A1, A2}
        two_cell: A -> number of samples with pi = {N-bar minus A, A}
        samples: Total number of partition samples
        log_t: Normalising logarithm (log t, or log N for finite-N drifts)
        beta0, beta1: Lotka-Volterra asymmetry constants
    """
    if samples <= 0:
        raise EstimationError("No partition samples")
    counts = signed_counts(three_cell, n)
    kappa_count = sum(three_cell.values())
    scale3 = log_t**3 / samples

    functions = standard_weight_functions(n)
    exact_sums = {name: weighted_sum(f, counts) for name, f in functions.items()}
    linear_residual = Fraction(weighted_sum(linear_weights(n), counts))
    constant_residual = Fraction(exact_sums["constant"]) - kappa_count
    affine_minus_kappa = Fraction(exact_sums["affine"]) - kappa_count
    # r^s = -(|A|/n)^2 turns the sum into (|A|/n)^2 (Theta^- - Theta^+)
    lv = Fraction(exact_sums["lotka_volterra"])
    geometric_minus_scaled_lv = Fraction(exact_sums["geometric"]) - Fraction(n, 2) * lv

    theta3 = {name: float(value) * scale3 for name, value in exact_sums.items()}
    pair_sum = sum(Fraction(bin(a).count("1"), n) ** 2 * k for a, k in two_cell.items())
    theta2_lv = (beta0 - beta1) * float(pair_sum) * log_t / samples
    return ClosedFormDrifts(
        theta3=theta3,
        theta2_lv=theta2_lv,
        kappa=kappa_count * scale3,
        linear_residual=linear_residual,
        constant_residual=constant_residual,
        affine_minus_kappa=affine_minus_kappa,
        geometric_minus_scaled_lv=geometric_minus_scaled_lv,
    )


# d >= 3


def inclusion_exclusion(n: int, r_counts: Sequence[Number]) -> tuple[list[Number], list[Number]]:
    """
    beta(A) = sum_{C subset A, C != N} (-1)^{|A|-|C|} r_{|C|}
    delta(A) = same with r_{|N minus C|}
    """
    full = (1 << n) - 1
    beta = [0] * (full + 1)
    delta = [0] * (full + 1)
    for a in range(1, full + 1):
        size_a = bin(a).count("1")
        c = a
        while c:
            if c != full:
                size_c = bin(c).count("1")
                sign = -1 if (size_a - size_c) % 2 else 1
                beta[a] += sign * r_counts[size_c]
                delta[a] += sign * r_counts[n - size_c]
            c = (c - 1) & a
    return beta, delta


def mobius_sum(values: Sequence[Number], b: int) -> Number:
    """sum over nonempty A subset of B of values[A]."""
    total = 0
    a = b
    while a:
        total += values[a]
        a = (a - 1) & b
    return total


@dataclass
class Dge3Drift:
    theta: float
    std_error: float
    theta_lower: float
    theta_upper: float
    samples: int
    beta: list[Number]
    delta: list[Number]


def dge3_drift(
    n: int,
    r_counts: Sequence[Number],
    partitions: dict[tuple[int, ...], int],
    samples: int,
    bracket: Optional[dict[tuple[int, ...], int]] = None,
    bracket_samples: int = 0,
) -> Dge3Drift:
    """
    Theta = sum_A beta(A) P(tau(A) finite, tau(A u 0) infinite) - delta(A) P(tau(A u 0) finite),
    with both probabilities truncated at the simulated horizon.

    Args:
        n: |N|
        r_counts: r_0..r_n
        partitions: Histogram of time-T partitions of N-bar (cell masks, origin first)
        samples: Number of samples in the histogram
        bracket: Optional second histogram at a longer horizon
        bracket_samples: Its sample count
    """
    beta, delta = inclusion_exclusion(n, r_counts)
    theta, se = _dge3_functional(n, beta, delta, partitions, samples)
    if bracket:
        other, _ = _dge3_functional(n, beta, delta, bracket, bracket_samples)
        lower, upper = min(theta, other), max(theta, other)
    else:
        lower = upper = theta
    return Dge3Drift(
        theta=theta,
        std_error=se,
        theta_lower=lower,
        theta_upper=upper,
        samples=samples,
        beta=beta,
        delta=delta,
    )


def _dge3_value(n: int, beta: Sequence[Number], delta: Sequence[Number], cells: Iterable[int]) -> float:
    value = 0.0
    for cell in cells:
        members = cell >> 1
        if not members:
            continue
        # A lies inside this cell: tau(A) <= T
        if cell & 1:
            # with the origin: tau(A u 0) <= T
            value -= float(mobius_sum(delta, members))
        else:
            value += float(mobius_sum(beta, members))
    return value


def _dge3_functional(n, beta, delta, partitions, samples) -> tuple[float, float]:
    if samples <= 1:
        raise EstimationError("Need at least two partition samples")
    total = 0.0
    total_sq = 0.0
    for cells, k in partitions.items():
        v = _dge3_value(n, beta, delta, cells)
        total += k * v
        total_sq += k * v * v
    mean = total / samples
    variance = max(total_sq / samples - mean**2, 0.0)
    return mean, math.sqrt(variance / (samples - 1))
