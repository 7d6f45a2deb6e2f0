"""
Spectral Flow Toolkit - Errors

Every failure carries the CLI exit code it maps to:
2 = contract / assertion failure, 3 = numerical certificate failure,
4 = configuration error.
"""

from typing import Optional

EXIT_ASSERTION = 2
EXIT_CERTIFICATE = 3
EXIT_CONFIG = 4


class SpecFlowError(Exception):
    """Base exception for the toolkit."""

    exit_code = EXIT_ASSERTION

    def __init__(self, message: str, code: Optional[int] = None):
        self.message = message
        self.code = code if code is not None else self.exit_code
        super().__init__(self.message)


class FormError(SpecFlowError):
    """Contract violation in the forms algebra (degrees, fibers, flags)."""


class DiracError(SpecFlowError):
    """Invalid operator assembly request (cutoff, aliasing, dimension)."""


class FlowError(SpecFlowError):
    """Path or estimator precondition violated."""


class HeatError(SpecFlowError):
    """Heat diagnostic requested outside its certified range."""


class CertificateError(SpecFlowError):
    """A numerical certificate (residual, hermiticity, cutoff, matching) failed."""

    exit_code = EXIT_CERTIFICATE


class ConfigError(SpecFlowError):
    """Experiment configuration failed validation."""

    exit_code = EXIT_CONFIG
