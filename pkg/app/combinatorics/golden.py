"""
Printed reference values for |N| = 4 and |N| = 8.

The tables below are transcribed verbatim; golden_suite() recomputes every
one of them from scratch and raises GoldenMismatch on the first difference.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from app.combinatorics.cancellative import (
    alpha_at,
    alpha_curve,
    alpha_prime_at_1,
    alpha_prime_exact,
    build_M,
    invert_M,
)
from app.errors import GoldenMismatch
from app.logging_config import get_logger

logger = get_logger(__name__)

F = Fraction

M4 = (
    (1, 2, 3, 4),
    (3, 4, 3, 0),
    (3, 2, 1, 4),
    (1, 0, 1, 0),
)

M4_INVERSE_TIMES_8 = (
    (-2, 0, 2, 4),
    (0, 2, 0, -6),
    (2, 0, -2, 4),
    (1, -1, 1, -1),
)

M8 = (
    (1, 2, 3, 4, 5, 6, 7, 8),
    (7, 12, 15, 16, 15, 12, 7, 0),
    (21, 30, 31, 28, 25, 26, 35, 56),
    (35, 40, 35, 32, 35, 40, 35, 0),
    (35, 30, 25, 28, 31, 26, 21, 56),
    (21, 12, 13, 16, 13, 12, 21, 0),
    (7, 2, 5, 4, 3, 6, 1, 8),
    (1, 0, 1, 0, 1, 0, 1, 0),
)

M8_INVERSE = (
    (F(-3, 64), F(-1, 32), F(-1, 64), F(0), F(1, 64), F(1, 32), F(3, 64), F(1, 16)),
    (F(-7, 64), F(-1, 32), F(1, 64), F(1, 32), F(1, 64), F(-1, 32), F(-7, 64), F(-7, 32)),
    (F(-7, 64), F(1, 32), F(3, 64), F(0), F(-3, 64), F(-1, 32), F(7, 64), F(7, 16)),
    (F(0), F(5, 64), F(0), F(-3, 64), F(0), F(5, 64), F(0), F(-35, 64)),
    (F(7, 64), F(1, 32), F(-3, 64), F(0), F(3, 64), F(-1, 32), F(-7, 64), F(7, 16)),
    (F(7, 64), F(-1, 32), F(-1, 64), F(1, 32), F(-1, 64), F(-1, 32), F(7, 64), F(-7, 32)),
    (F(3, 64), F(-1, 32), F(1, 64), F(0), F(-1, 64), F(1, 32), F(-3, 64), F(1, 16)),
    (F(1, 128), F(-1, 128), F(1, 128), F(-1, 128), F(1, 128), F(-1, 128), F(1, 128), F(-1, 128)),
)

# alpha'_l(1), l = 2..8, as prime -> coefficient of log p
ALPHA_PRIME_LOG_SUMS = {
    2: {2: F(3, 128), 3: F(-3, 256), 5: F(5, 256), 7: F(-7, 256)},
    3: {2: F(1, 64), 3: F(3, 512), 5: F(-15, 512), 7: F(7, 512)},
    4: {2: F(-5, 128), 3: F(3, 128)},
    5: {2: F(1, 64), 3: F(-15, 512), 5: F(15, 512), 7: F(-7, 512)},
    6: {2: F(3, 128), 3: F(-9, 256), 5: F(-5, 256), 7: F(7, 256)},
    7: {2: F(5, 64), 3: F(63, 512), 5: F(-35, 512), 7: F(-21, 512)},
    8: {2: F(-101, 128), 5: F(35, 128), 7: F(7, 128)},
}

# alpha'_l(1) = -(1/D) log(P/Q) as (D, P, Q)
ALPHA_PRIME_SINGLE_LOGS = {
    2: (256, 22235661, 200000),
    3: (512, 30517578125, 5692329216),
    4: (128, 32, 27),
    5: (512, 11816941917501, 7812500000000),
    6: (256, 61509375, 52706752),
    7: (
        512,
        1625582413058972472208552062511444091796875,
        1258458428839311554156984626190103821156352,
    ),
    8: (128, 2535301200456458802993406410752, 2396825584582984447479248046875),
}

FORM_TOLERANCE = 1e-12
ALPHA_ZERO_TOLERANCE = 1e-12
Q_GRID_POINTS = 1001


def alpha4_printed(q: float) -> np.ndarray:
    """The four printed alpha_l(q) for |N| = 4."""
    return np.array(
        [
            -0.25 * 0.25**q + 0.25 * 0.75**q + 0.125,
            0.25 * 0.5**q - 0.125,
            0.25 * 0.25**q - 0.25 * 0.75**q + 0.125,
            0.5 * 0.25**q - 0.75 * 0.5**q + 0.5 * 0.75**q - 0.125,
        ]
    )


@dataclass
class GoldenReport:
    checks: list[str] = field(default_factory=list)
    alpha_prime: dict[int, float] = field(default_factory=dict)

    def passed(self, name: str) -> None:
        logger.debug(f"golden check passed: {name}")
        self.checks.append(name)


def _expect(condition: bool, name: str, report: GoldenReport, witness=None) -> None:
    if not condition:
        raise GoldenMismatch(f"Golden check failed: {name}", witness=witness)
    report.passed(name)


def check_n4(report: GoldenReport) -> None:
    M = build_M(4)
    _expect(M.entries == M4, "M(4)", report, witness=M.entries)
    inverse = invert_M(M)
    printed = tuple(tuple(F(v, 8) for v in row) for row in M4_INVERSE_TIMES_8)
    _expect(inverse == printed, "M(4)^-1", report)

    qs = np.linspace(0.0, 1.0, Q_GRID_POINTS)
    computed = alpha_curve(4, qs)
    expected = np.array([alpha4_printed(q) for q in qs])
    gap = float(np.max(np.abs(computed - expected)))
    _expect(gap < 1e-14, "alpha(q) formulas, n=4", report, witness={"max_gap": gap})
    interior = computed[:-1]
    _expect(bool(np.all(interior > 0)), "alpha(q) > 0 on [0, 1), n=4", report)
    _expect(bool(np.all(computed[-1] >= -ALPHA_ZERO_TOLERANCE)), "alpha(1) >= 0, n=4", report)


def check_n8(report: GoldenReport) -> None:
    M = build_M(8)
    _expect(M.entries == M8, "M(8)", report, witness=M.entries)
    _expect(invert_M(M) == M8_INVERSE, "M(8)^-1", report)

    at_one = alpha_at(8, q=1.0)
    _expect(
        bool(np.all(np.abs(at_one[1:]) < ALPHA_ZERO_TOLERANCE)),
        "alpha_l(1) = 0 for l >= 2",
        report,
        witness=at_one.tolist(),
    )
    lowest = float(alpha_curve(8, np.linspace(0.0, 1.0, Q_GRID_POINTS))[:, 0].min())
    _expect(lowest >= 2.0**-7, "alpha_1(q) >= 2^-7 on [0, 1]", report, witness=lowest)

    exact = alpha_prime_exact(8)
    for ell in range(2, 9):
        form = exact[ell - 1]
        _expect(form.coefficients == ALPHA_PRIME_LOG_SUMS[ell], f"log-sum coefficients of alpha'_{ell}(1)", report)
        denominator, p, q = ALPHA_PRIME_SINGLE_LOGS[ell]
        log_sum = math.fsum(float(c) * math.log(prime) for prime, c in ALPHA_PRIME_LOG_SUMS[ell].items())
        single = -(math.log(p) - math.log(q)) / denominator
        _expect(
            abs(log_sum - single) <= FORM_TOLERANCE,
            f"printed forms of alpha'_{ell}(1) agree",
            report,
            witness={"log_sum": log_sum, "single_log": single},
        )
        _expect(log_sum < 0, f"alpha'_{ell}(1) < 0", report, witness=log_sum)
        # integer form: Q^D-exponents reassembled from the printed coefficients
        _expect(
            Fraction(form.numerator_int, form.denominator_int) == Fraction(p, q),
            f"single-log ratio of alpha'_{ell}(1)",
            report,
        )
        report.alpha_prime[ell] = log_sum

    derived = alpha_prime_at_1(8)
    _expect(
        bool(np.allclose(derived[1:], [report.alpha_prime[ell] for ell in range(2, 9)], rtol=0.0, atol=FORM_TOLERANCE)),
        "alpha_prime_at_1(8) matches printed forms",
        report,
    )


def golden_suite() -> GoldenReport:
    """
    Recompute the printed matrices and derivative closed forms.

    Raises:
        GoldenMismatch: with the name of the first failing check
    """
    report = GoldenReport()
    check_n4(report)
    check_n8(report)
    logger.info(f"Golden suite passed ({len(report.checks)} checks)")
    return report
