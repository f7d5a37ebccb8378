"""
Exception hierarchy shared by the numerical modules and the CLI.
"""
from typing import Dict, List, Optional, Sequence


class FracHelmError(Exception):
    """Base class for all lab errors."""


class DomainError(FracHelmError, ValueError):
    """Input outside the domain of a function (poles, unsupported orders/dimensions)."""


class InvalidSpecError(FracHelmError, ValueError):
    """Source or potential specification violates its invariants."""


class InvalidGeometryError(FracHelmError, ValueError):
    """Supports of D and U overlap or cannot be separated."""


class ConfigError(FracHelmError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class CoverageError(FracHelmError, ValueError):
    """Data table does not cover what an estimator needs."""

    def __init__(self, message: str, missing: Optional[Sequence] = None):
        super().__init__(message)
        self.missing = list(missing or [])


class AccuracyError(FracHelmError):
    """A numerical procedure did not reach its tolerance."""

    def __init__(
        self,
        message: str,
        partial_value=None,
        err_est: Optional[float] = None,
        ladder: Optional[Sequence] = None,
    ):
        super().__init__(message)
        self.partial_value = partial_value
        self.err_est = err_est
        self.ladder = list(ladder) if ladder is not None else None


class WavenumberTooSmallError(FracHelmError):
    """Estimated norm of the potential operator is not below one."""

    def __init__(self, message: str, k: float, norm_estimate: float):
        super().__init__(message)
        self.k = k
        self.norm_estimate = norm_estimate


VALIDATION_ERRORS = (DomainError, InvalidSpecError, InvalidGeometryError, ConfigError, CoverageError)
NUMERICAL_ERRORS = (AccuracyError, WavenumberTooSmallError)


def error_payload(exc: Exception) -> Dict:
    """Machine-readable description of an error for diagnostic JSON files."""
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("k", "norm_estimate", "err_est", "missing", "diagnostics", "ladder"):
        if hasattr(exc, attr):
            value = getattr(exc, attr)
            if value is None:
                continue
            if isinstance(value, complex):
                value = [value.real, value.imag]
            elif isinstance(value, (list, tuple)):
                value = [[v.real, v.imag] if isinstance(v, complex) else v for v in value]
            payload[attr] = value
    partial = getattr(exc, "partial_value", None)
    if partial is not None:
        partial = complex(partial)
        payload["partial_value"] = [partial.real, partial.imag]
    return payload
