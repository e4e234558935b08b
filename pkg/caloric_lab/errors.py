"""Exception types shared across the package."""

from __future__ import annotations

from typing import Iterable

from jsonschema import ValidationError


class CaloricLabError(Exception):
    """Base class for every error raised by the library."""

    exit_code = 1


class ConfigError(CaloricLabError):
    """Raised when an experiment or family configuration is unusable."""

    exit_code = 2


class ConfigValidationError(ConfigError):
    """Raised when a configuration file fails schema validation."""

    def __init__(self, errors: Iterable[ValidationError]):
        errors = list(errors)
        formatted = "\n".join(format_error(err) for err in errors)
        super().__init__(formatted)
        self.errors = errors


def format_error(error: ValidationError) -> str:
    """Create a human readable validation error trace."""

    path = " / ".join(str(part) for part in error.absolute_path)
    location = path or "<root>"
    return f"{location}: {error.message}"


class StructuralError(CaloricLabError):
    """Raised when a provider violates symmetry, simplicity or connectivity."""

    exit_code = 2


class DomainError(CaloricLabError):
    """Raised when a vertex or time lies outside the domain of a function."""

    exit_code = 2


class PreconditionError(CaloricLabError):
    """Raised when an operation is called outside its documented preconditions."""

    exit_code = 2


class SingularSystemError(PreconditionError):
    """Raised when coefficient extraction meets coincident sample times."""


class CoverageError(CaloricLabError):
    """Raised when a ball, cylinder or march would leak outside the window."""

    exit_code = 3


class ResourceError(CaloricLabError):
    """Raised when an exact computation exceeds the configured size cap."""

    exit_code = 3


class AssemblyError(CaloricLabError):
    """Raised when a hierarchy chain breaks its defining equations."""

    def __init__(self, index: int, violation: float):
        super().__init__(f"hierarchy equation {index} violated by {violation:g}")
        self.index = index
        self.violation = violation


class IntegrationError(CaloricLabError):
    """Raised when forward time integration fails or blows up."""


class SweepError(CaloricLabError):
    """Raised when one radius of a sweep fails; wraps the original error."""

    def __init__(self, radius: float, cause: CaloricLabError):
        super().__init__(f"R={radius:g}: {cause}")
        self.radius = radius
        self.cause = cause
        self.exit_code = cause.exit_code
