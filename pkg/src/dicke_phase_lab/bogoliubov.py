"""Normal forms of the single-mode quadratic boson Hamiltonian.

The Hamiltonian handled here is::

    H = mu * b^dag b + (delta / 2) * (b^dag b^dag + b b)

A real Bogoliubov rotation ``g = sinh(theta) b^dag + cosh(theta) b`` brings it
to one of three normal forms, selected by the relative size of ``|mu|`` and
``|delta|``:

* ``|mu| > |delta|``, ``mu > 0``: harmonic oscillator ``+W (g^dag g + 1/2) - mu/2``
* ``|mu| > |delta|``, ``mu < 0``: anti-harmonic oscillator ``-W (g^dag g + 1/2) - mu/2``
* ``|mu| < |delta|``: inverted oscillator ``sgn(delta) W/2 (g^dag^2 + g^2) - mu/2``

with ``W = sqrt(|mu^2 - delta^2|)``. ``|mu| == |delta|`` is an exceptional
point of the form and has no oscillator normal form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateForm, InvalidParams

#: Absolute tolerance (in the units of mu/delta) below which ``|mu| - |delta|``
#: counts as degenerate. Shared with the phase classifier.
EPS_BOUNDARY = 1e-9


class OscillatorKind(str, enum.Enum):
    HO = "HO"
    AHO = "AHO"
    IHO = "IHO"
    DEGENERATE = "Degenerate"

    @property
    def oscillates(self) -> bool:
        return self in (OscillatorKind.HO, OscillatorKind.AHO)


@dataclass(frozen=True)
class QuadraticForm:
    mu: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.delta)):
            raise InvalidParams(f"quadratic form needs finite coefficients, got ({self.mu}, {self.delta})")


@dataclass(frozen=True)
class NormalForm:
    """Result of :func:`diagonalize`.

    Attributes
    ----------
    kind : OscillatorKind
    omega_eff : float
        Non-negative frequency ``sqrt(|mu^2 - delta^2|)``.
    sign : int
        ``sgn(mu)`` for HO/AHO, ``sgn(delta)`` for IHO.
    tanh_theta : float
        Real Bogoliubov parameter, always ``|tanh_theta| < 1``.
    offset : float
        Constant energy ``-mu / 2``.
    """

    kind: OscillatorKind
    omega_eff: float
    sign: int
    tanh_theta: float
    offset: float

    @property
    def theta(self) -> float:
        return math.atanh(self.tanh_theta)

    def level(self, n: int) -> float:
        """Energy of the n-th oscillator level (HO/AHO only)."""
        if not self.kind.oscillates:
            raise DegenerateForm(f"{self.kind.value} form has no discrete ladder")
        return self.offset + self.sign * self.omega_eff * (n + 0.5)


def _sgn(x: float) -> int:
    return 1 if x > 0 else (-1 if x < 0 else 0)


def diagonalize(q: QuadraticForm, tol: float = EPS_BOUNDARY) -> NormalForm:
    """Bring ``q`` to its oscillator normal form.

    Raises
    ------
    DegenerateForm
        If ``| |mu| - |delta| | <= tol``.
    """
    mu, delta = q.mu, q.delta
    gap = abs(mu) - abs(delta)
    if abs(gap) <= tol:
        raise DegenerateForm(f"|mu| == |delta| for (mu, delta) = ({mu}, {delta})")
    # (|mu| - |delta|)(|mu| + |delta|) keeps the radicand accurate near the EP
    omega_eff = math.sqrt(abs(gap) * (abs(mu) + abs(delta)))
    offset = -mu / 2
    if gap > 0:
        sign = _sgn(mu)
        kind = OscillatorKind.HO if sign > 0 else OscillatorKind.AHO
        tanh_theta = 0.0 if delta == 0 else (mu - sign * omega_eff) / delta
    else:
        sign = _sgn(delta)
        kind = OscillatorKind.IHO
        tanh_theta = 0.0 if mu == 0 else (delta - sign * omega_eff) / mu
    return NormalForm(kind, omega_eff, sign, tanh_theta, offset)


def quadratic_matrix(q: QuadraticForm, cutoff: int) -> np.ndarray:
    """Dense matrix of ``q`` on the Fock states ``|0>, ..., |cutoff>``."""
    n = np.arange(cutoff + 1, dtype=float)
    mat = np.diag(q.mu * n)
    pair = 0.5 * q.delta * np.sqrt((n[:-2] + 1) * (n[:-2] + 2))
    idx = np.arange(cutoff - 1)
    mat[idx + 2, idx] = pair
    mat[idx, idx + 2] = pair
    return mat


def matrix_oracle(q: QuadraticForm, cutoff: int) -> np.ndarray:
    """Sorted eigenvalues of the Fock-truncated matrix of ``q``.

    Independent brute-force check of :func:`diagonalize`: for HO/AHO forms the
    eigenvalues nearest the vacuum converge to the oscillator ladder, for IHO
    forms the spectrum does not converge as ``cutoff`` grows.
    """
    if cutoff < 8:
        raise InvalidParams("matrix_oracle needs cutoff >= 8")
    return np.linalg.eigvalsh(quadratic_matrix(q, cutoff))
