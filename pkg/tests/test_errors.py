"""
Tests for the exception hierarchy and exit-code mapping.
"""

import pytest

from app.errors import (
    EXIT_CHECK_FAILED,
    EXIT_FAILURE,
    EXIT_NUMERICAL,
    EXIT_USAGE,
    ActiveSetOverflow,
    CheckFailed,
    ConfigError,
    DualityViolated,
    HorizonNonpositive,
    InsufficientSamples,
    NotSymmetric,
    OrderingViolated,
    StateSpaceTooLarge,
    ToolkitError,
)
from cli.main import exit_code_for


class TestErrors:
    """Tests for error construction."""

    def test_witness_in_message(self):
        """Test that a witness is appended to the message."""
        error = OrderingViolated(witness={"site": (0, 1)})
        assert "(0, 1)" in error.message
        assert error.witness == {"site": (0, 1)}

    def test_active_set_overflow(self):
        """Test that the overflow keeps its size and cap."""
        error = ActiveSetOverflow(12, 10)
        assert (error.size, error.cap) == (12, 10)
        assert error.exit_code == EXIT_NUMERICAL


class TestExitCodes:
    """Tests for exit_code_for."""

    @pytest.mark.parametrize(
        "error, code",
        [
            (ConfigError("bad"), EXIT_USAGE),
            (HorizonNonpositive(0.0), EXIT_USAGE),
            (StateSpaceTooLarge(16), EXIT_USAGE),
            (NotSymmetric(), EXIT_CHECK_FAILED),
            (DualityViolated(), EXIT_CHECK_FAILED),
            (CheckFailed("x"), EXIT_CHECK_FAILED),
            (InsufficientSamples(), EXIT_NUMERICAL),
            (ToolkitError("plain"), EXIT_NUMERICAL),
            (RuntimeError("boom"), EXIT_FAILURE),
        ],
    )
    def test_mapping(self, error, code):
        """Test the exit status of each error kind."""
        assert exit_code_for(error) == code
