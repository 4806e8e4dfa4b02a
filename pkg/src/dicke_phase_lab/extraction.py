"""Decay rate and oscillation frequencies from a sampled echo.

The pipeline works on the leading valid part of an :class:`EchoSeries`
(times in units of 1/omega, so rates and frequencies come out dimensionless):

1. ``D(t) = d/dt ln L`` by central differences.
2. A first-pass least-squares slope of ln L over the trailing half of the
   window decides whether the echo decays.
3. Candidate frequencies are the peaks of a Hann-windowed, zero-padded FFT of
   the detrended D, taken over the whole window for a non-decaying echo and
   over the trailing 60% otherwise (the early transient of a decaying echo
   is not stationary). Peak positions are refined by a nonlinear sinusoid
   fit with phase-free second overtones, and a weak peak at twice a strong
   one's frequency is treated as that peak's overtone.
4. The decay rate is the slope of ln L over the trailing half with the
   detected sinusoids included as nuisance regressors, which removes the
   bias a plain line fit picks up from a partial oscillation cycle.

The effective model has two modes, so a non-decaying echo reports its two
strongest oscillations and a decaying one at most one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.signal.windows import hann

from .echo import EchoSeries, QuenchObservables, log_derivative
from .errors import WindowTooShort


@dataclass(frozen=True)
class ExtractionSettings:
    """Tuning knobs of :func:`extract`.

    Attributes
    ----------
    fit_fraction : float
        Trailing fraction of the validity window used for the slope fit.
    spectral_fraction : float
        Trailing fraction searched for oscillations when the echo decays;
        a quadratic baseline absorbs what is left of the initial transient.
    decay_tol : float
        Slopes above ``-decay_tol`` count as no decay (``lam = 0``).
    noise_amplitude : float
        D oscillations weaker than this (units of omega) are ignored.
    relative_noise : float
        For a decaying echo, oscillations weaker than this fraction of the
        decay rate are ignored as well.
    min_cycles : float
        Minimum count of periods of the fastest oscillation plus decay
        constants that must fit in the window.
    pad : int
        Zero-padding factor of the FFT.
    max_candidates : int
        Number of FFT peaks passed to the refinement fit.
    """

    fit_fraction: float = 0.5
    spectral_fraction: float = 0.6
    decay_tol: float = 0.05
    noise_amplitude: float = 0.01
    relative_noise: float = 0.05
    min_cycles: float = 4.0
    pad: int = 16
    max_candidates: int = 4


@dataclass(frozen=True)
class Extraction:
    """Observables plus the raw numbers behind them."""

    observables: QuenchObservables
    slope: float
    window: float
    peaks: tuple  # ((frequency, amplitude), ...) of D, strongest first


def _sinusoid_design(t: np.ndarray, freqs, degree: int, harmonics: int = 1) -> np.ndarray:
    # polynomial baseline, then fundamentals (cos, sin per frequency), then locked overtones
    u = (t - t.mean()) / max(np.ptp(t), 1e-300)
    cols = [u**k for k in range(degree + 1)]
    for k in range(1, harmonics + 1):
        for f in freqs:
            arg = 2 * np.pi * k * f * t
            cols += [np.cos(arg), np.sin(arg)]
    return np.column_stack(cols)


def _sinusoid_fit(t, y, freqs, degree, harmonics=1):
    a = _sinusoid_design(t, freqs, degree, harmonics)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return coef, y - a @ coef


def line_slope(t: np.ndarray, y: np.ndarray) -> float:
    """Ordinary least-squares slope."""
    return float(np.polyfit(t, y, 1)[0])


def spectrum_peaks(t: np.ndarray, x: np.ndarray, pad: int = 16, count: int = 4,
                   floor: float = 0.0, degree: int = 1) -> list:
    """Strongest local maxima of the Hann-windowed amplitude spectrum of ``x``.

    A polynomial baseline of ``degree`` is removed first. Amplitudes are
    scaled so a pure sinusoid of amplitude A shows a peak of about A.
    Returns ``[(frequency, amplitude)]`` sorted by decreasing amplitude,
    excluding the DC leakage region.
    """
    n = x.size
    span = t[-1] - t[0]
    resid = x - np.polyval(np.polyfit(t, x, degree), t)
    w = hann(n, sym=False)
    spec = np.abs(np.fft.rfft(resid * w, n=pad * n)) * 2 / w.sum()
    freqs = np.fft.rfftfreq(pad * n, d=t[1] - t[0])
    idx, _ = find_peaks(spec)
    idx = [i for i in idx if freqs[i] > 1.5 / span and spec[i] > floor]
    idx.sort(key=lambda i: -spec[i])
    return [(float(freqs[i]), float(spec[i])) for i in idx[:count]]


def refine_frequencies(t: np.ndarray, x: np.ndarray, guesses, degree: int = 1,
                       harmonics: int = 2):
    """Least-squares sinusoid fit of ``x``; returns ``[(frequency, amplitude)]``.

    Each frequency carries ``harmonics - 1`` phase-free overtones at integer
    multiples, since the log of a periodic echo factor is not a pure
    sinusoid. Frequencies start at ``guesses`` and may move by half an FFT
    bin width of the unpadded record in either direction. The amplitude is
    that of the fundamental.
    """
    if not guesses:
        return []
    span = t[-1] - t[0]
    g = np.asarray(guesses, dtype=float)
    half_bin = 0.5 / span
    lo, hi = np.maximum(g - half_bin, 1e-9), g + half_bin
    res = least_squares(lambda f: _sinusoid_fit(t, x, f, degree, harmonics)[1], g,
                        bounds=(lo, hi), x_scale=half_bin, xtol=1e-12, ftol=1e-12)
    coef, _ = _sinusoid_fit(t, x, res.x, degree, harmonics)
    off = degree + 1
    fund = coef[off: off + 2 * g.size]
    amps = np.hypot(fund[0::2], fund[1::2])
    out = sorted(zip(res.x.tolist(), amps.tolist()), key=lambda p: -p[1])
    return [(float(f), float(a)) for f, a in out]


def drop_overtones(peaks, span: float, ratio: float = 0.5) -> list:
    """Remove peaks at twice the frequency of a peak at least ``1/ratio`` times stronger.

    ``peaks`` must be sorted by decreasing amplitude. Only the second
    overtone is screened: two genuine modes may sit at a 3:1 ratio.
    """
    kept = []
    for f, a in peaks:
        overtone = any(abs(f - 2 * fk) <= max(0.05 * 2 * fk, 1 / span) and a < ratio * ak
                       for fk, ak in kept)
        if not overtone:
            kept.append((f, a))
    return kept


def extract(series: EchoSeries, settings: ExtractionSettings = ExtractionSettings()) -> Extraction:
    """Decay rate ``lam`` and frequency sum ``f`` of an echo series.

    Raises
    ------
    WindowTooShort
        The validity window holds fewer than ``min_cycles`` periods of the
        fastest detected oscillation plus decay constants.
    """
    n = series.window_end()
    if n < 16:
        raise WindowTooShort(f"only {n} valid samples")
    t = series.times[:n]
    ln_l = np.log(series.values[:n])
    span = float(t[-1] - t[0])

    if np.max(np.abs(ln_l)) < 1e-12:
        return Extraction(QuenchObservables(0.0, 0.0), 0.0, span, ())

    d = log_derivative(EchoSeries(t, series.values[:n], series.provenance))
    late = t >= t[0] + (1 - settings.fit_fraction) * span
    if late.sum() < 8:
        raise WindowTooShort("trailing window holds fewer than 8 samples")

    decays = line_slope(t[late], ln_l[late]) < -settings.decay_tol
    if decays:
        seg, degree = t >= t[0] + (1 - settings.spectral_fraction) * span, 2
    else:
        seg, degree = np.ones_like(late), 1
    cands = spectrum_peaks(t[seg], d[seg], settings.pad, settings.max_candidates,
                           floor=settings.noise_amplitude / 4, degree=degree)
    seg_span = float(t[seg][-1] - t[seg][0])
    cands = drop_overtones(cands, seg_span)
    peaks = refine_frequencies(t[seg], d[seg], [f for f, _ in cands], degree)
    floor = settings.noise_amplitude
    if decays:
        floor = max(floor, -settings.relative_noise * line_slope(t[late], ln_l[late]))
    peaks = drop_overtones([p for p in peaks if p[1] >= floor], seg_span)

    coef, _ = _sinusoid_fit(t[late], ln_l[late], [f for f, _ in peaks], 1, 2)
    slope = float(coef[1]) / float(np.ptp(t[late]))
    balance = float(np.mean(d[late]))

    modes = sorted((f for f, _ in peaks[: 1 if decays or slope < -settings.decay_tol else 2]),
                   reverse=True)
    lam = slope if slope < -settings.decay_tol else 0.0
    f_sum = float(sum(modes))

    # periods of the fastest oscillation plus decay constants resolved by the window
    cycles = span * (max(modes, default=0.0) - lam)
    if cycles < settings.min_cycles:
        raise WindowTooShort(
            f"window {span:g} holds {cycles:.2f} < {settings.min_cycles:g} periods plus decay constants")

    f1 = modes[0] if modes else None
    f2 = modes[1] if len(modes) > 1 else None
    obs = QuenchObservables(lam=lam, f=f_sum, f1=f1, f2=f2, balance=min(balance, 0.0))
    return Extraction(obs, slope, span, tuple(peaks))
