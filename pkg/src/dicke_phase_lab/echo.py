"""Closed-form Loschmidt echoes of the two-mode effective model.

For the vacuum of ``d1, d2`` the echo factorizes, ``L = L1 * L2``, and each
factor depends only on the normal form of its mode:

* HO / AHO:  ``L_j = 1 - a(tanh_theta) sin^2(Omega_j t)``,
  ``a(x) = 8 x^2 / (2 + x^2)^2``
* IHO:       ``L_j = 1 / cosh(Omega_j t)``

These are small-squeezing approximations. ``D(t) = d/dt ln L`` then
oscillates around zero (two oscillating modes), around ``-Omega2`` (one of
each), or tends to ``-(Omega1 + Omega2)`` (two inverted modes).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bogoliubov import OscillatorKind
from .errors import DegenerateForm, NonPositiveEcho, OnBoundary
from .model import ModelParams, classify_phase, region_hamiltonians

#: Samples at or below this value are clamped and excluded from ln L.
UNDERFLOW_FLOOR = 1e-300


class Provenance(str, enum.Enum):
    ANALYTIC = "analytic"
    EFFECTIVE = "effective-oracle"
    FINITE_N = "finite-N"


@dataclass
class EchoSeries:
    """Echo samples ``L(t_k)`` on a uniform grid (times in units of 1/omega).

    ``valid`` flags the samples usable for ln L and observable extraction:
    False where the sample hit the underflow floor or lies past a validity
    horizon. ``diagnostics`` carries optional per-sample monitors recorded
    by the propagator (norm, parity leakage, ...).
    """

    times: np.ndarray
    values: np.ndarray
    provenance: Provenance
    valid: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size >= 2:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(self.times[-1])):
                raise ValueError("time grid must be uniform and increasing")
        if self.values.size and abs(self.values[0] - 1) > 1e-12:
            raise ValueError(f"echo must start at 1, got {self.values[0]!r}")
        if np.any(self.values < 0) or np.any(self.values > 1 + 1e-9):
            raise ValueError("echo samples must lie in [0, 1]")
        floor_ok = self.values > UNDERFLOW_FLOOR
        if self.valid is None:
            self.valid = floor_ok
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & floor_ok
        self.values = np.maximum(self.values, UNDERFLOW_FLOOR)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def window_end(self) -> int:
        """Number of leading samples that are all valid."""
        bad = np.flatnonzero(~self.valid)
        return int(bad[0]) if bad.size else self.times.size

    def truncated(self, t_max: float) -> "EchoSeries":
        """Copy with samples past ``t_max`` flagged invalid."""
        valid = self.valid & (self.times <= t_max + 1e-12)
        return EchoSeries(self.times, self.values, self.provenance, valid, dict(self.diagnostics))


@dataclass(frozen=True)
class QuenchObservables:
    """Dimensionless decay rate and frequencies of one quench.

    Attributes
    ----------
    lam : float
        Decay rate of L in units of omega (``<= 0``).
    f : float
        Sum of the oscillation frequencies in units of omega (``>= 0``).
    f1, f2 : float or None
        Per-mode frequencies ``Omega_i / (pi omega)`` where the mode oscillates.
    balance : float
        Long-time mean of ``D(t)/omega``; equals ``lam`` for the analytic forms.
    """

    lam: float
    f: float
    f1: Optional[float] = None
    f2: Optional[float] = None
    balance: float = 0.0

    def __post_init__(self):
        if self.lam > 0:
            raise ValueError(f"decay rate must be <= 0, got {self.lam}")
        if self.f < 0:
            raise ValueError(f"frequency sum must be >= 0, got {self.f}")

    @property
    def behavior(self) -> str:
        """One of ``oscillatory``, ``decaying``, ``mixed``, ``static``."""
        decays, oscillates = self.lam < 0, self.f > 0
        if decays and oscillates:
            return "mixed"
        if decays:
            return "decaying"
        if oscillates:
            return "oscillatory"
        return "static"


def oscillation_amplitude(tanh_theta: float) -> float:
    """Depth ``8 x^2 / (2 + x^2)^2`` of the periodic echo factor."""
    x2 = tanh_theta * tanh_theta
    return 8 * x2 / (2 + x2) ** 2


def ab_amplitude(tanh_theta: float) -> float:
    """Alternate depth ``2 A^2`` with ``A = 2 / (1 + 2 / tanh^2)``.

    Kept for comparison only; the propagated two-mode model rules it out
    (it is fourth order in tanh where the true depth is second order).
    """
    if tanh_theta == 0:
        return 0.0
    a = 2.0 / (1.0 + 2.0 / tanh_theta**2)
    return 2 * a * a


def _sech(x):
    # 2 e^-x / (1 + e^-2x) avoids cosh overflow for large x
    e = np.exp(-np.abs(x))
    return 2 * e / (1 + e * e)


def mode_echo(mode, t):
    """Echo factor ``L_j(t)`` of one normal form (``EquivalentHamiltonian`` or ``NormalForm``).

    Raises
    ------
    DegenerateForm
        For a degenerate (``Omega = 0``) form.
    """
    kind = OscillatorKind(mode.kind)
    t = np.asarray(t, dtype=float)
    if kind is OscillatorKind.DEGENERATE or mode.omega_eff == 0:
        raise DegenerateForm("echo undefined at an exceptional point")
    x = mode.omega_eff * t
    if kind.oscillates:
        out = 1.0 - oscillation_amplitude(mode.tanh_theta) * np.sin(x) ** 2
    else:
        out = _sech(x)
    return out if out.ndim else float(out)


def full_echo(params: ModelParams, t):
    """Approximate ``L(t)`` of the effective model: the product of both mode factors."""
    h1, h2 = region_hamiltonians(params)
    out = np.asarray(mode_echo(h1, t)) * np.asarray(mode_echo(h2, t))
    return out if out.ndim else float(out)


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform grid ``0, dt, ..., horizon`` (horizon rounded to a whole step)."""
    n = int(round(horizon / dt))
    return np.arange(n + 1) * dt


def analytic_series(params: ModelParams, times) -> EchoSeries:
    """Sample :func:`full_echo` (time in units of 1/omega) into an :class:`EchoSeries`."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(full_echo(params, times / params.omega), dtype=float)
    return EchoSeries(times, values, Provenance.ANALYTIC)


def log_derivative(series: EchoSeries, strict: bool = True) -> np.ndarray:
    """``D(t) = d/dt ln L`` by central differences (one-sided at the ends).

    With ``strict`` a floored sample raises :class:`NonPositiveEcho`;
    otherwise D is NaN wherever a floored sample enters the stencil.
    """
    vals = series.values
    floored = vals <= UNDERFLOW_FLOOR
    if strict and floored.any():
        k = int(np.flatnonzero(floored)[0])
        raise NonPositiveEcho(f"L({series.times[k]:g}) is below the underflow floor")
    if vals.size < 3:
        raise ValueError("need at least 3 samples for a derivative")
    d = np.gradient(np.log(vals), series.dt, edge_order=2)
    if floored.any():
        bad = floored.copy()
        bad[1:] |= floored[:-1]
        bad[:-1] |= floored[1:]
        d[bad] = np.nan
    return d


def analytic_observables(params: ModelParams) -> QuenchObservables:
    """Decay rate and frequency sum predicted by the normal forms.

    Oscillating modes contribute ``Omega_i / pi`` to ``f``; inverted modes
    contribute ``-Omega_i`` to ``lam`` (and the balance point of D).
    """
    region = classify_phase(params)
    if region.on_boundary:
        raise OnBoundary(region.boundary_detail)
    w = params.omega
    freqs: list[Optional[float]] = []
    lam = 0.0
    for h in region_hamiltonians(params):
        if h.kind.oscillates:
            freqs.append(h.omega_eff / (math.pi * w))
        else:
            freqs.append(None)
            lam -= h.omega_eff / w
    f = sum(x for x in freqs if x is not None)
    return QuenchObservables(lam=lam, f=f, f1=freqs[0], f2=freqs[1], balance=lam)
