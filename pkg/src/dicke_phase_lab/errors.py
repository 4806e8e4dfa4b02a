"""Exception types raised across the package.

Every error derives from :class:`DickeLabError` so callers (the CLI in
particular) can catch one base class and map the subtype to an exit code.
"""


class DickeLabError(Exception):
    """Base class for all package errors."""


class InvalidParams(DickeLabError, ValueError):
    """Physical or numerical parameters violate their invariants."""


class UnsupportedParams(DickeLabError, ValueError):
    """Parameters are valid but outside the analytically solved regime (omega0 != omega)."""


class OnBoundary(DickeLabError):
    """The parameter point lies on a critical / exceptional-point line."""

    def __init__(self, detail: str):
        super().__init__(f"parameter point lies on a phase boundary: {detail}")
        self.detail = detail


class DegenerateForm(DickeLabError):
    """Quadratic form with |mu| == |delta|; no oscillator normal form exists."""


class NonPositiveEcho(DickeLabError):
    """An echo sample is at or below the underflow floor, so ln L is undefined."""


class NonConvergence(DickeLabError):
    """The Krylov propagator could not reach the requested local tolerance."""


class NormDrift(DickeLabError):
    """State norm drifted beyond the allowed bound during propagation."""


class CutoffTooSmall(DickeLabError, ValueError):
    """Boson cutoff below the minimum supported value."""


class MalformedCSV(DickeLabError, ValueError):
    """An echo CSV could not be parsed."""


class WindowTooShort(DickeLabError):
    """The validity window is too short to extract decay rate or frequencies."""
