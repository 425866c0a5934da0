"""Exception types shared across the package."""


class SympextError(Exception):
    """Base class for all package errors."""


class DomainError(SympextError):
    """Model evaluated outside its validity domain."""


class EvaluationError(SympextError):
    """A model evaluation produced non-finite values."""


class TrajectoryEscapedError(SympextError):
    """State norm exceeded the escape bound during integration."""

    def __init__(self, message, last_valid_index=None, partial=None):
        super().__init__(message)
        self.last_valid_index = last_valid_index
        self.partial = partial


class ReferenceConvergenceError(SympextError):
    """Step-doubling refinement failed to certify the requested tolerance."""


class PhaseUndefinedError(SympextError):
    """Polar angle requested too close to the origin."""


class AdmissibilityError(SympextError):
    """No admissible initial condition exists for the requested constraint."""


class ConfigError(SympextError):
    """Invalid or unknown experiment configuration."""
