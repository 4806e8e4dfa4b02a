"""Anisotropic Dicke model parameters, Nambu blocks and phase classification.

In the large-N limit the model reduces to two decoupled quadratic modes
``d1, d2 = (a +/- b)/sqrt(2)`` with

* ``H1 = (w + g1) d1^dag d1 + (g2/2)(d1^dag^2 + d1^2)``
* ``H2 = (w - g1) d2^dag d2 - (g2/2)(d2^dag^2 + d2^2)``

Each mode is represented by a 2x2 non-Hermitian Nambu matrix
``h = (mu/2) sz + i (delta/2) sy``. Its exceptional points
(``|mu| == |delta|``) are the critical lines of the phase diagram:

* ``g2 = |w - g1|``  (EP of h2; NP/SP2 for g1 < w, SP1/SP2 for g1 > w)
* ``g2 = w + g1``    (EP of h1; SP2/SP3)
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bogoliubov import EPS_BOUNDARY, OscillatorKind, QuadraticForm, diagonalize
from .errors import InvalidParams, OnBoundary, UnsupportedParams


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the anisotropic Dicke model.

    ``omega0`` defaults to ``omega``. Analytic routines only accept the
    resonant case; the finite-N simulator accepts any ``omega0``.
    """

    omega: float = 1.0
    omega0: Optional[float] = None
    g1: float = 0.0
    g2: float = 0.0
    n_atoms: int = 100

    def __post_init__(self):
        if self.omega0 is None:
            object.__setattr__(self, "omega0", self.omega)
        for name in ("omega", "omega0", "g1", "g2"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParams(f"{name} must be finite")
        if self.omega <= 0:
            raise InvalidParams(f"omega must be positive, got {self.omega}")
        if self.g1 < 0 or self.g2 < 0:
            raise InvalidParams(f"couplings must be non-negative, got g1={self.g1}, g2={self.g2}")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise InvalidParams(f"n_atoms must be a positive integer, got {self.n_atoms}")

    @property
    def resonant(self) -> bool:
        return self.omega0 == self.omega


def require_resonant(params: ModelParams) -> None:
    if not params.resonant:
        raise UnsupportedParams(
            f"analytic results need omega0 == omega (got omega={params.omega}, omega0={params.omega0})"
        )


class Phase(str, enum.Enum):
    NP = "NP"
    SP1 = "SP1"
    SP2 = "SP2"
    SP3 = "SP3"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class PhaseRegion:
    tag: Phase
    boundary_detail: Optional[str] = None

    def __post_init__(self):
        if (self.tag is Phase.BOUNDARY) != bool(self.boundary_detail):
            raise ValueError("boundary_detail must be given exactly when tag is Boundary")

    @property
    def on_boundary(self) -> bool:
        return self.tag is Phase.BOUNDARY

    def __str__(self) -> str:
        if self.on_boundary:
            return f"Boundary({self.boundary_detail})"
        return self.tag.value


def classify_phase(params: ModelParams, eps: float = EPS_BOUNDARY) -> PhaseRegion:
    """Locate ``(g1, g2)`` in the NP/SP1/SP2/SP3 phase diagram.

    Points within ``eps * omega`` of a critical line are reported as
    ``Boundary`` with the line named in ``boundary_detail``.
    """
    require_resonant(params)
    w, g1, g2 = params.omega, params.g1, params.g2
    tol = eps * w
    hits = []
    if abs(abs(w - g1) - g2) <= tol:
        if g1 < w - tol:
            hits.append("NP/SP2 line g1+g2=omega (EP of h2)")
        elif g1 > w + tol:
            hits.append("SP1/SP2 line g2=g1-omega (EP of h2)")
        else:
            hits.append("EP of h2 at g1=omega, g2=0")
    if abs(w + g1 - g2) <= tol:
        hits.append("SP2/SP3 line g2=g1+omega (EP of h1)")
    if hits:
        return PhaseRegion(Phase.BOUNDARY, "; ".join(hits))
    if g1 + g2 < w:
        return PhaseRegion(Phase.NP)
    if g2 < g1 - w:
        return PhaseRegion(Phase.SP1)
    if g2 < g1 + w:
        return PhaseRegion(Phase.SP2)
    return PhaseRegion(Phase.SP3)


@dataclass(frozen=True)
class NambuBlock:
    """The 2x2 matrix ``[[mu/2, delta/2], [-delta/2, -mu/2]]`` and its right eigenpairs.

    ``eigenvalues`` is ``(lam_plus, lam_minus)`` with
    ``lam_pm = +/- sqrt(mu^2 - delta^2) / 2`` (principal complex root).
    ``eigenvectors`` holds the matching right eigenvectors, unnormalized, as
    ``(-(mu + 2 lam)/delta, 1)``; at ``delta == 0`` the basis vectors are used.
    """

    index: int
    mu: float
    delta: float
    eigenvalues: tuple
    eigenvectors: tuple

    @property
    def matrix(self) -> np.ndarray:
        return 0.5 * np.array([[self.mu, self.delta], [-self.delta, -self.mu]], dtype=complex)

    @property
    def gap(self) -> float:
        return abs(self.eigenvalues[0] - self.eigenvalues[1])

    @property
    def alignment(self) -> float:
        """``|<phi+, phi->| / (|phi+| |phi-|)``; equals 1 at an EP."""
        u, v = self.eigenvectors
        return float(abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v)))

    @property
    def at_exceptional_point(self) -> bool:
        return self.eigenvalues[0] == 0 and self.eigenvalues[1] == 0


def _nambu_block(index: int, mu: float, delta: float) -> NambuBlock:
    a, d = abs(mu), abs(delta)
    gap = a - d
    # snap roundoff-level misses of the EP; sqrt would amplify them to ~1e-8
    if abs(gap) <= 4 * np.finfo(float).eps * max(a, d):
        gap = 0.0
    radicand = gap * (a + d)
    lam = 0.5 * cmath.sqrt(radicand)
    lams = (lam, -lam)
    if delta != 0:
        vecs = tuple(np.array([-(mu + 2 * l) / delta, 1.0], dtype=complex) for l in lams)
    else:
        # diagonal matrix: (1, 0) carries +mu/2, (0, 1) carries -mu/2
        e1 = np.array([1.0, 0.0], dtype=complex)
        e2 = np.array([0.0, 1.0], dtype=complex)
        vecs = tuple(e1 if np.isclose(l, mu / 2) else e2 for l in lams)
        if mu == 0:
            vecs = (e1, e2)
    return NambuBlock(index, mu, delta, lams, vecs)


def nambu_blocks(params: ModelParams) -> tuple[NambuBlock, NambuBlock]:
    """``(h1, h2)`` with ``h1: (mu, delta) = (w + g1, +g2)`` and ``h2: (w - g1, -g2)``."""
    require_resonant(params)
    w, g1, g2 = params.omega, params.g1, params.g2
    return _nambu_block(1, w + g1, g2), _nambu_block(2, w - g1, -g2)


def effective_frequencies(params: ModelParams) -> tuple[float, float]:
    """``(Omega1, Omega2)`` with ``Omega_i = sqrt(|(w +/- g1)^2 - g2^2|)``."""
    require_resonant(params)
    w, g1, g2 = params.omega, params.g1, params.g2

    def freq(mu):
        a = abs(mu)
        return math.sqrt(abs(a - g2) * (a + g2))

    return freq(w + g1), freq(w - g1)


@dataclass(frozen=True)
class EquivalentHamiltonian:
    """Normal form of one decoupled mode.

    Attributes
    ----------
    mode : int
        1 or 2.
    kind : OscillatorKind
        HO, AHO or IHO.
    omega_eff : float
        ``Omega_i >= 0``.
    tanh_theta : float
        Real Bogoliubov parameter of the normal form (``|tanh_theta| < 1``).
        This is the value that enters the oscillation amplitude of the echo.
    tanh_theta_complex : complex
        The region-specific closed form: ``(mu - Omega)/g2`` for oscillating
        modes, ``(g2 + i Omega1)/(w + g1)`` and ``(g2 - i Omega2)/(w - g1)``
        for inverted ones. For the AHO mode of SP1 this has modulus > 1 and
        differs from ``tanh_theta``. NaN when its denominator vanishes.
    offset : float
        ``-(w +/- g1)/2``.
    sign : int
        +1 / -1 for HO / AHO; for IHO the sign of the pairing term, which is
        negative for mode 2.
    """

    mode: int
    kind: OscillatorKind
    omega_eff: float
    tanh_theta: float
    tanh_theta_complex: complex
    offset: float
    sign: int


_REGION_KINDS = {
    Phase.NP: (OscillatorKind.HO, OscillatorKind.HO),
    Phase.SP1: (OscillatorKind.HO, OscillatorKind.AHO),
    Phase.SP2: (OscillatorKind.HO, OscillatorKind.IHO),
    Phase.SP3: (OscillatorKind.IHO, OscillatorKind.IHO),
}


def region_kinds(tag: Phase) -> tuple[OscillatorKind, OscillatorKind]:
    return _REGION_KINDS[tag]


def _safe_div(num: complex, den: float) -> complex:
    return num / den if den != 0 else complex(math.nan, math.nan)


def region_hamiltonians(params: ModelParams) -> tuple[EquivalentHamiltonian, EquivalentHamiltonian]:
    """Equivalent Hamiltonians ``(H1, H2)`` for a non-boundary point.

    Raises
    ------
    OnBoundary
        When the point sits on a critical line (some ``Omega_i = 0``).
    """
    region = classify_phase(params)
    if region.on_boundary:
        raise OnBoundary(region.boundary_detail)
    w, g1, g2 = params.omega, params.g1, params.g2
    tol = EPS_BOUNDARY * w
    out = []
    for mode, mu in ((1, w + g1), (2, w - g1)):
        nf = diagonalize(QuadraticForm(mu, g2), tol=tol)
        if nf.kind is OscillatorKind.IHO:
            if mode == 1:
                tc = _safe_div(complex(g2, nf.omega_eff), mu)
            else:
                tc = _safe_div(complex(g2, -nf.omega_eff), mu)
            sign = nf.sign if mode == 1 else -nf.sign
        else:
            tc = complex(0.0) if g2 == 0 else complex((mu - nf.omega_eff) / g2)
            sign = nf.sign
        out.append(EquivalentHamiltonian(mode, nf.kind, nf.omega_eff, nf.tanh_theta, tc, nf.offset, sign))
    expected = region_kinds(region.tag)
    if (out[0].kind, out[1].kind) != expected:  # pragma: no cover - guards classifier/diagonalizer drift
        raise AssertionError(f"{region} expects {expected}, diagonalizer gave {(out[0].kind, out[1].kind)}")
    return out[0], out[1]


#: Representative points of the four regions, (g1, g2) in units of omega.
PRESETS = {
    "a": (0.4, 0.4),
    "b": (1.6, 0.4),
    "c": (1.2, 0.8),
    "d": (0.4, 1.6),
}
