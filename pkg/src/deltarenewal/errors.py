"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class DeltaRenewalError(Exception):
    """Base class for all package errors."""


class ConfigError(DeltaRenewalError):
    """Malformed configuration document (schema violation, unknown key, bad value)."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DomainError(ConfigError):
    """A data atom lies outside the open domain of its datum."""


class AssumptionError(DeltaRenewalError):
    """A structural assumption required by the solver does not hold."""


class TripleIntersectionError(AssumptionError):
    """A boundary-datum atom meets an emission of the renewal integral at the same time."""


class NumericalError(DeltaRenewalError):
    """Quadrature or marching failed to reach the requested tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (achieved residual {residual:.3e})"
        super().__init__(message)


class SmoothnessError(DeltaRenewalError):
    """A derivative was requested beyond the smoothness a function can supply."""


class GeometryError(DeltaRenewalError):
    """A stencil or strip does not fit inside the region it must stay in."""


class ParameterError(DeltaRenewalError):
    """Numerical parameters violate a precondition (resolution, CFL, ordering)."""
