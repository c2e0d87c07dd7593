"""
Exception hierarchy for the toolkit.

Every error carries a message and an optional process exit code; the CLI
maps exceptions to exit codes through cli.main.exit_code_for.
"""

from typing import Any, Optional

# Process exit codes
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CHECK_FAILED = 3
EXIT_NUMERICAL = 4


class ToolkitError(Exception):
    """Base exception for toolkit errors."""

    def __init__(self, message: str, exit_code: Optional[int] = None):
        self.message = message
        self.exit_code = exit_code
        super().__init__(self.message)


class ConfigError(ToolkitError):
    """Raised when the experiment configuration cannot be parsed or is incomplete."""

    def __init__(self, message: str = "Invalid configuration"):
        super().__init__(message, exit_code=EXIT_USAGE)


class CheckFailed(ToolkitError):
    """Base for verification failures. Carries the violating witness."""

    def __init__(self, message: str, witness: Any = None):
        self.witness = witness
        if witness is not None:
            message += f" (witness: {witness})"
        super().__init__(message, exit_code=EXIT_CHECK_FAILED)


# Kernels


class KernelAxiomError(CheckFailed):
    """Raised when a neighbourhood or kernel violates one of its axioms."""


class ContainsOrigin(KernelAxiomError):
    def __init__(self, message: str = "Neighbourhood contains the origin"):
        super().__init__(message)


class NotSymmetric(KernelAxiomError):
    def __init__(self, message: str = "Step set or weights are not symmetric under negation", witness: Any = None):
        super().__init__(message, witness)


class NotIrreducible(KernelAxiomError):
    def __init__(self, message: str = "Steps do not generate the full lattice"):
        super().__init__(message)


class AnisotropicCovariance(KernelAxiomError):
    def __init__(self, message: str = "Covariance is not a multiple of the identity", witness: Any = None):
        super().__init__(message, witness)


class NotAProbability(KernelAxiomError):
    def __init__(self, message: str = "Weights are not a probability distribution", witness: Any = None):
        super().__init__(message, witness)


# Rates


class RateError(ToolkitError):
    """Base for rate-model construction and evaluation errors."""

    def __init__(self, message: str, exit_code: Optional[int] = EXIT_NUMERICAL):
        super().__init__(message, exit_code=exit_code)


class KeyMismatch(RateError):
    def __init__(self, message: str = "Window keys do not match the model neighbourhood"):
        super().__init__(message, exit_code=EXIT_USAGE)


class NegativeTotalRate(RateError):
    def __init__(self, message: str = "Reconstructed flip rate is negative"):
        super().__init__(message)


class NoLimit(RateError):
    def __init__(self, message: str = "Numeric epsilon-extrapolation did not stabilize"):
        super().__init__(message)


class BoundViolated(CheckFailed):
    def __init__(self, message: str = "Bound violated", witness: Any = None):
        super().__init__(message, witness)


class SignViolated(CheckFailed):
    def __init__(self, message: str = "Sign condition violated", witness: Any = None):
        super().__init__(message, witness)


# Exact algebra


class AlgebraError(ToolkitError):
    """Base for exact linear-algebra and cancellativity errors."""

    def __init__(self, message: str, exit_code: Optional[int] = EXIT_NUMERICAL):
        super().__init__(message, exit_code=exit_code)


class Singular(AlgebraError):
    def __init__(self, message: str = "Matrix is singular"):
        super().__init__(message)


class FormsDisagree(CheckFailed):
    def __init__(self, message: str = "Closed forms disagree", witness: Any = None):
        super().__init__(message, witness)


class NoValidQ(AlgebraError):
    def __init__(self, message: str = "No q in [0,1) keeps every alpha nonnegative"):
        super().__init__(message)


class NegativeAlpha(AlgebraError):
    def __init__(self, message: str = "Alpha vector has a negative component"):
        super().__init__(message, exit_code=EXIT_CHECK_FAILED)


class RoundTripMismatch(CheckFailed):
    def __init__(self, message: str = "Rates reconstructed from the cancellative form differ", witness: Any = None):
        super().__init__(message, witness)


class InequalityViolated(CheckFailed):
    def __init__(self, message: str = "Partition inequality violated", witness: Any = None):
        super().__init__(message, witness)


# Simulation


class SimulationError(ToolkitError):
    """Base for simulator errors."""

    def __init__(self, message: str, exit_code: Optional[int] = EXIT_NUMERICAL):
        super().__init__(message, exit_code=exit_code)


class ActiveSetOverflow(SimulationError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"Active set grew to {size} sites (cap {cap})")


class HorizonNonpositive(SimulationError):
    def __init__(self, horizon: float):
        super().__init__(f"Horizon must be positive, got {horizon}", exit_code=EXIT_USAGE)


class ComparisonConditionFails(CheckFailed):
    def __init__(self, message: str = "Comparison condition fails", witness: Any = None):
        super().__init__(message, witness)


class OrderingViolated(CheckFailed):
    def __init__(self, message: str = "Coupled components lost their ordering", witness: Any = None):
        super().__init__(message, witness)


class StateSpaceTooLarge(SimulationError):
    def __init__(self, sites: int, limit: int = 9):
        super().__init__(f"Exact oracle supports at most {limit} sites, got {sites}", exit_code=EXIT_USAGE)


# Estimation


class EstimationError(ToolkitError):
    """Base for Monte Carlo estimation errors."""

    def __init__(self, message: str, exit_code: Optional[int] = EXIT_NUMERICAL):
        super().__init__(message, exit_code=exit_code)


class InsufficientSamples(EstimationError):
    def __init__(self, message: str = "Not enough samples for an estimate"):
        super().__init__(message)


class DualityViolated(CheckFailed):
    def __init__(self, message: str = "Forward and dual expectations disagree", witness: Any = None):
        super().__init__(message, witness)


class OutOfRange(EstimationError):
    def __init__(self, message: str = "Scaling parameter out of range"):
        super().__init__(message, exit_code=EXIT_USAGE)


class GoldenMismatch(CheckFailed):
    def __init__(self, message: str = "Computed value differs from the printed reference", witness: Any = None):
        super().__init__(message, witness)
