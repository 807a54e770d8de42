"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes; library users can catch the base
class or the specific failure they care about.
"""

from __future__ import annotations


class BohmvelError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(BohmvelError):
    """An argument violates a documented precondition."""


class DomainError(BohmvelError):
    """A query point lies outside the domain of the requested quantity."""


class ConfigurationError(BohmvelError):
    """A run configuration is invalid or physically unusable (grid too
    small, packet clipped, boosted support not representable, ...)."""


class NumericalFailureError(BohmvelError):
    """A numerical guard tripped (norm drift, boundary leak, ...)."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonConvergedError(NumericalFailureError):
    """An iterative limit did not reach its tolerance.

    Carries the residual curve so callers can inspect the approach to the
    limit instead of just seeing a failure.
    """

    def __init__(self, message: str, residual_curve=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.residual_curve = residual_curve


class NodeProximityError(BohmvelError):
    """A velocity-field evaluation hit a near-node (density below floor)
    or, for spinor states, an unphysical interpolated speed."""

    def __init__(self, message: str, rho: float = float("nan")):
        super().__init__(message)
        self.rho = rho


class RegularityError(BohmvelError):
    """An experiment's asymptotic-regularity verdict failed, so the
    comparison it was guarding has no meaning."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
