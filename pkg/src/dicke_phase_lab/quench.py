"""Sparse quench dynamics of the finite-N model and of the two-mode effective model.

Basis conventions (also used for any state dumps):

* full model, ``mode_count=1``: ``|j=N/2, m> x |n>`` at index
  ``(m + N/2) * (n_max + 1) + n``
* effective model, ``mode_count=2``: ``|n_a> x |n_b>`` at index
  ``n_a * (n_max + 1) + n_b``

Boson raising beyond ``n_max`` is dropped (hard truncation), which keeps the
truncated matrices exactly Hermitian.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Iterator, Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .echo import EchoSeries, Provenance
from .errors import CutoffTooSmall, InvalidParams, NonConvergence, NormDrift
from .model import ModelParams

log = logging.getLogger(__name__)

KRYLOV_MAX = 64
LOCAL_TOL = 1e-10
NORM_TOL = 1e-8
#: Allowed ``|ln L_N - ln L_2N|`` inside the finite-size validity window.
FINITE_SIZE_TOL = 0.05


@dataclass(frozen=True)
class BasisSpec:
    n_atoms: int
    boson_cutoff: int
    mode_count: int = 1

    def __post_init__(self):
        if self.boson_cutoff < 1:
            raise CutoffTooSmall(f"boson cutoff must be >= 1, got {self.boson_cutoff}")
        if self.mode_count not in (1, 2):
            raise InvalidParams(f"mode_count must be 1 or 2, got {self.mode_count}")
        if self.n_atoms < 1:
            raise InvalidParams(f"n_atoms must be >= 1, got {self.n_atoms}")

    @property
    def dimension(self) -> int:
        nb = self.boson_cutoff + 1
        return (self.n_atoms + 1) * nb if self.mode_count == 1 else nb * nb

    def index(self, first: float, second: int) -> int:
        """Basis index of ``(m, n)`` (full model) or ``(n_a, n_b)`` (effective)."""
        nb = self.boson_cutoff + 1
        if self.mode_count == 1:
            k = first + self.n_atoms / 2
            if not (0 <= k <= self.n_atoms and float(k).is_integer()):
                raise InvalidParams(f"m={first} outside the spin-{self.n_atoms / 2} multiplet")
            row = int(k)
        else:
            row = int(first)
            if not 0 <= row <= self.boson_cutoff:
                raise InvalidParams(f"n_a={first} outside the cutoff")
        if not 0 <= second <= self.boson_cutoff:
            raise InvalidParams(f"occupation {second} outside the cutoff")
        return row * nb + int(second)

    def doubled(self) -> "BasisSpec":
        return BasisSpec(self.n_atoms, 2 * self.boson_cutoff, self.mode_count)


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Hermitian matrix as canonically ordered (row, col, value) triplets."""

    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    hermitian: bool = True

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.dimension,) * 2)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def hermiticity_error(self) -> float:
        m = self.csr
        diff = m - m.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def _assemble(dim: int, diag: np.ndarray, upper: list) -> SparseHamiltonian:
    """Build from the diagonal plus off-diagonal ``(row, col, value)`` arrays.

    Each off-diagonal element is stored together with its conjugate partner;
    the triplets are then sorted row-major so the layout is reproducible.
    """
    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [diag.astype(complex)]
    for r, c, v in upper:
        rows += [r, c]
        cols += [c, r]
        vals += [v.astype(complex), np.conj(v.astype(complex))]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = (vals != 0) | (rows == cols)
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if np.any((rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])):  # pragma: no cover
        raise AssertionError("duplicate matrix element in assembly")
    return SparseHamiltonian(dim, rows.astype(np.int64), cols.astype(np.int64), vals)


def build_adm(params: ModelParams, spec: BasisSpec) -> SparseHamiltonian:
    """Finite-N Hamiltonian ``w a^dag a + w0 Jz + g1/sqrt(N)(a^dag J- + a J+) + g2/sqrt(N)(a^dag J+ + a J-)``."""
    if spec.mode_count != 1:
        raise InvalidParams("build_adm needs a single-boson basis (mode_count=1)")
    if spec.n_atoms != params.n_atoms:
        raise InvalidParams(f"basis has N={spec.n_atoms} but params have N={params.n_atoms}")
    N, nmax = spec.n_atoms, spec.boson_cutoff
    nb = nmax + 1
    j = N / 2
    k, n = np.divmod(np.arange(spec.dimension), nb)
    m = k - j
    diag = params.omega * n + params.omega0 * m

    scale = 1.0 / math.sqrt(N)
    upper = []
    raise_ok = n < nmax
    # a^dag J-: (m, n) -> (m - 1, n + 1)
    src = raise_ok & (k > 0)
    amp = np.sqrt(n[src] + 1) * np.sqrt(j * (j + 1) - m[src] * (m[src] - 1))
    upper.append((src.nonzero()[0], src.nonzero()[0] - nb + 1, params.g1 * scale * amp))
    # a^dag J+: (m, n) -> (m + 1, n + 1)
    src = raise_ok & (k < N)
    amp = np.sqrt(n[src] + 1) * np.sqrt(j * (j + 1) - m[src] * (m[src] + 1))
    upper.append((src.nonzero()[0], src.nonzero()[0] + nb + 1, params.g2 * scale * amp))
    # stored as (row=target, col=source) plus conjugate
    upper = [(dst, s, v) for s, dst, v in upper]
    return _assemble(spec.dimension, diag, upper)


def build_effective(params: ModelParams, spec: BasisSpec) -> SparseHamiltonian:
    """Two-mode ``w (a^dag a + b^dag b) + g1 (a^dag b + a b^dag) + g2 (a^dag b^dag + a b)``."""
    if spec.mode_count != 2:
        raise InvalidParams("build_effective needs a two-boson basis (mode_count=2)")
    nmax = spec.boson_cutoff
    nb = nmax + 1
    na, nbv = np.divmod(np.arange(spec.dimension), nb)
    diag = params.omega * (na + nbv)
    upper = []
    # a^dag b: (na, nb) -> (na + 1, nb - 1)
    src = (na < nmax) & (nbv > 0)
    s = src.nonzero()[0]
    upper.append((s + nb - 1, s, params.g1 * np.sqrt(na[src] + 1) * np.sqrt(nbv[src])))
    # a^dag b^dag: (na, nb) -> (na + 1, nb + 1)
    src = (na < nmax) & (nbv < nmax)
    s = src.nonzero()[0]
    upper.append((s + nb + 1, s, params.g2 * np.sqrt(na[src] + 1) * np.sqrt(nbv[src] + 1)))
    return _assemble(spec.dimension, diag, upper)


def basis_state(spec: BasisSpec, first: float, second: int = 0) -> np.ndarray:
    psi = np.zeros(spec.dimension, dtype=complex)
    psi[spec.index(first, second)] = 1.0
    return psi


def ground_state_index(spec: BasisSpec) -> int:
    """Index of ``|down, 0>`` (full model) or ``|0, 0>`` (effective model)."""
    return spec.index(-spec.n_atoms / 2, 0) if spec.mode_count == 1 else 0


def parity_signs(spec: BasisSpec) -> np.ndarray:
    """Eigenvalues of ``exp(i pi (a^dag a + Jz + N/2))`` on the full-model basis."""
    k, n = np.divmod(np.arange(spec.dimension), spec.boson_cutoff + 1)
    return np.where((k + n) % 2 == 0, 1.0, -1.0)


def excitation_number(spec: BasisSpec) -> np.ndarray:
    """Diagonal of ``a^dag a + Jz`` on the full-model basis."""
    k, n = np.divmod(np.arange(spec.dimension), spec.boson_cutoff + 1)
    return n + k - spec.n_atoms / 2


def lanczos_step(matvec: Callable, v: np.ndarray, dt: float, tol: float = LOCAL_TOL,
                 m_max: int = KRYLOV_MAX, work: Optional[np.ndarray] = None) -> tuple[np.ndarray, int, float]:
    """Approximate ``exp(-i H dt) v`` in a Krylov space of at most ``m_max`` vectors.

    Returns ``(w, m, err)`` where ``err`` is the usual a-posteriori estimate
    ``beta_m |e_m^T exp(-i T_m dt) e_1| |v|``. The caller decides what to do
    when ``err > tol`` (``m`` then equals ``m_max``). ``work`` is an optional
    reusable ``(m_max, len(v))`` complex buffer for the Krylov basis.
    """
    beta0 = np.linalg.norm(v)
    if work is None or work.shape[0] < m_max or work.shape[1] != v.size:
        work = np.empty((m_max, v.size), dtype=complex)
    basis = work
    basis[0] = v / beta0
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    coeffs = np.ones(1, dtype=complex)
    err = math.inf
    m = 1
    for j in range(m_max):
        w = matvec(basis[j])
        alpha[j] = np.vdot(basis[j], w).real
        # full Gram-Schmidt against the basis, repeated only when it cancelled
        # most of w (DGKS criterion); <b_i|w> = conj(b_i . conj(w)) avoids
        # conjugating the whole basis
        span = basis[: j + 1]
        before = np.linalg.norm(w)
        w -= np.conj(span @ np.conj(w)) @ span
        b = np.linalg.norm(w)
        if b < 0.7071 * before:
            w -= np.conj(span @ np.conj(w)) @ span
            b = np.linalg.norm(w)
        m = j + 1
        if m == 1:
            evals, evecs = np.array([alpha[0]]), np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(alpha[:m], beta[: m - 1])
        coeffs = evecs @ (np.exp(-1j * dt * evals) * evecs[0].conj())
        if b <= 1e-14 * max(1.0, abs(alpha[j])):
            err = 0.0  # invariant subspace: the projection is exact
            break
        err = b * abs(coeffs[-1]) * beta0
        if err <= tol:
            break
        if j + 1 < m_max:
            beta[j] = b
            basis[j + 1] = w / b
    return beta0 * (coeffs @ basis[:m]), m, err


def propagate(h: SparseHamiltonian, psi0: np.ndarray, grid, tol: float = LOCAL_TOL,
              m_max: int = KRYLOV_MAX, max_halvings: int = 10) -> Iterator[np.ndarray]:
    """Yield ``exp(-i H t_k) psi0`` for every point of the uniform ``grid``.

    Each grid step is one short-iterative Lanczos step; if the local error
    estimate exceeds ``tol`` at ``m_max`` the step is split in halves.

    Raises
    ------
    NonConvergence
        Tolerance unreachable even after ``max_halvings`` splits.
    NormDrift
        ``| |psi| - 1 |`` exceeds 1e-8 at any grid point.
    """
    grid = np.asarray(grid, dtype=float)
    psi = np.array(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1) > NORM_TOL:
        raise InvalidParams("initial state must be normalized")
    matvec = h.csr.dot
    work = np.empty((m_max, psi.size), dtype=complex)
    if grid.size and grid[0] != 0:
        psi = _advance(matvec, psi, grid[0], tol, m_max, max_halvings, work)
    yield psi.copy()
    for dt in np.diff(grid):
        psi = _advance(matvec, psi, dt, tol, m_max, max_halvings, work)
        drift = abs(np.linalg.norm(psi) - 1)
        if drift > NORM_TOL:
            raise NormDrift(f"norm drifted by {drift:.2e}")
        yield psi.copy()


def _advance(matvec, psi, dt, tol, m_max, max_halvings, work=None):
    pieces = 1
    for _ in range(max_halvings + 1):
        sub = dt / pieces
        out = psi
        ok = True
        for _ in range(pieces):
            out, _m, err = lanczos_step(matvec, out, sub, tol, m_max, work)
            if err > tol:
                ok = False
                break
        if ok:
            return out
        pieces *= 2
    raise NonConvergence(f"Lanczos tolerance {tol:g} unreachable for step {dt:g} with m <= {m_max}")


def echo_series(h: SparseHamiltonian, psi0: np.ndarray, grid, tol: float = LOCAL_TOL,
                provenance: Provenance = Provenance.FINITE_N,
                monitors: Optional[Mapping[str, Callable[[np.ndarray], float]]] = None,
                stop: Optional[Callable[[int, float], bool]] = None) -> EchoSeries:
    """Loschmidt echo ``|<psi0|psi(t)>|^2`` along ``grid``.

    The state norm is always recorded in ``diagnostics['norm']``; extra
    ``monitors`` (name -> function of the state) are recorded alongside.
    If ``stop(k, L_k)`` returns True the run ends there and the series
    covers ``grid[:k + 1]`` only.
    """
    monitors = dict(monitors or {})
    grid = np.asarray(grid, dtype=float)
    support = np.flatnonzero(psi0)
    ref = np.conj(psi0[support])
    values = np.empty(grid.size)
    diag = {"norm": np.empty(grid.size)}
    diag.update({name: np.empty(grid.size) for name in monitors})
    for k, psi in enumerate(propagate(h, psi0, grid, tol)):
        values[k] = abs(ref @ psi[support]) ** 2
        diag["norm"][k] = np.linalg.norm(psi)
        for name, fn in monitors.items():
            diag[name][k] = fn(psi)
        if stop is not None and stop(k, values[k]):
            grid, values = grid[: k + 1], values[: k + 1]
            diag = {name: arr[: k + 1] for name, arr in diag.items()}
            break
    values = np.minimum(values, 1.0)
    return EchoSeries(grid, values, provenance, diagnostics=diag)


def _hamiltonian(params: ModelParams, spec: BasisSpec) -> SparseHamiltonian:
    return build_adm(params, spec) if spec.mode_count == 1 else build_effective(params, spec)


def run_quench(params: ModelParams, spec: BasisSpec, grid, initial: str = "down",
               tol: float = LOCAL_TOL, monitors=None, stop=None) -> EchoSeries:
    """Echo from ``|down>|0>`` (or ``|up>|0>``) for the full model, ``|0,0>`` for the effective one.

    ``grid`` is in units of 1/omega; ``monitors`` and ``stop`` are passed to
    :func:`echo_series`.
    """
    h = _hamiltonian(params, spec)
    if spec.mode_count == 1:
        m0 = -spec.n_atoms / 2 if initial == "down" else spec.n_atoms / 2
        if initial not in ("down", "up"):
            raise InvalidParams(f"initial state must be 'down' or 'up', got {initial!r}")
        psi0 = basis_state(spec, m0, 0)
        prov = Provenance.FINITE_N
    else:
        if initial != "down":
            raise InvalidParams("the effective model only starts from the two-mode vacuum")
        psi0 = basis_state(spec, 0, 0)
        prov = Provenance.EFFECTIVE
    grid = np.asarray(grid, dtype=float) / params.omega
    series = echo_series(h, psi0, grid, tol, prov, monitors, stop)
    series.times = series.times * params.omega
    return series


def mirror_run(params: ModelParams, spec: BasisSpec, grid, tol: float = LOCAL_TOL) -> EchoSeries:
    """Full-model echo starting from all atoms excited, ``|up>|0>``."""
    if spec.mode_count != 1:
        raise InvalidParams("mirror_run applies to the full model only")
    return run_quench(params, spec, grid, initial="up", tol=tol)


def _agreement_horizon(times: np.ndarray, bad: np.ndarray) -> float:
    hits = np.flatnonzero(bad)
    if hits.size == 0:
        return float(times[-1])
    return 0.0 if hits[0] == 0 else float(times[hits[0] - 1])


def _common_prefix(series: EchoSeries, reference: EchoSeries) -> int:
    # a reference stopped early covers a prefix of the grid
    n = min(series.times.size, reference.times.size)
    if not np.allclose(series.times[:n], reference.times[:n]):
        raise ValueError("series must share a time grid")
    return n


def _absolute_gap(tol: float):
    return lambda ref, val: abs(val - ref) >= tol


def _log_gap(tol: float):
    return lambda ref, val: not (abs(np.log(val) - np.log(ref)) < tol) if val > 0 and ref > 0 else True


def convergence_horizon(series: EchoSeries, reference: EchoSeries, tol: float = 1e-6) -> float:
    """Largest grid time T with ``max |L - L_ref| < tol`` on ``[0, T]``.

    ``reference`` may cover only a prefix of the grid (a companion run that
    stopped at the first disagreement).
    """
    n = _common_prefix(series, reference)
    bad = np.abs(series.values[:n] - reference.values[:n]) >= tol
    return _agreement_horizon(series.times[:n], bad)


def log_horizon(series: EchoSeries, reference: EchoSeries, tol: float = FINITE_SIZE_TOL) -> float:
    """Largest grid time T with ``|ln L - ln L_ref| < tol`` on ``[0, T]``.

    Relative agreement is the right measure where L itself becomes tiny
    (decaying echoes), unlike the absolute sup-norm of
    :func:`convergence_horizon`. Samples flagged invalid count as disagreement.
    """
    n = _common_prefix(series, reference)
    with np.errstate(divide="ignore"):
        gap = np.abs(np.log(series.values[:n]) - np.log(reference.values[:n]))
    bad = ~(gap < tol) | ~series.valid[:n] | ~reference.valid[:n]
    return _agreement_horizon(series.times[:n], bad)


def convergence_check(params: ModelParams, spec: BasisSpec, grid, tol: float = 1e-6,
                      initial: str = "down", series: Optional[EchoSeries] = None) -> float:
    """Truncation horizon T*: doubling ``n_max`` changes L by less than ``tol`` on ``[0, T*]``.

    Pass ``series`` to reuse an existing run at ``spec``.
    """
    if series is None:
        series = run_quench(params, spec, grid, initial)
    differs = _absolute_gap(tol)
    reference = run_quench(params, spec.doubled(), grid, initial,
                           stop=lambda k, val: differs(series.values[k], val))
    return convergence_horizon(series, reference, tol)


def finite_size_horizon(params: ModelParams, spec: BasisSpec, grid, tol: float = FINITE_SIZE_TOL,
                        initial: str = "down", series: Optional[EchoSeries] = None) -> float:
    """Horizon T_N over which the N-atom echo agrees with the 2N-atom one.

    Agreement means ``|ln L_N - ln L_2N| < tol``; beyond T_N the finite
    spin length (revivals, saturation) dominates the echo.
    """
    if spec.mode_count != 1:
        raise InvalidParams("finite-size horizon applies to the full model only")
    if series is None:
        series = run_quench(params, spec, grid, initial)
    big = BasisSpec(2 * spec.n_atoms, spec.boson_cutoff)
    differs = _log_gap(tol)
    reference = run_quench(replace(params, n_atoms=big.n_atoms), big, grid, initial,
                           stop=lambda k, val: differs(series.values[k], val))
    return log_horizon(series, reference, tol)


@dataclass(frozen=True)
class Validity:
    """Trustworthy time window of a simulated echo.

    ``cutoff_horizon`` is T* from doubling the boson cutoff; ``size_horizon``
    is T_N from doubling the atom number (None for the effective model).
    """

    cutoff_horizon: float
    size_horizon: Optional[float] = None

    @property
    def horizon(self) -> float:
        if self.size_horizon is None:
            return self.cutoff_horizon
        return min(self.cutoff_horizon, self.size_horizon)


def validated_run(params: ModelParams, spec: BasisSpec, grid, initial: str = "down",
                  cutoff_tol: float = 1e-6, size_tol: float = FINITE_SIZE_TOL,
                  tol: float = LOCAL_TOL) -> tuple[EchoSeries, Validity]:
    """Run a quench plus its convergence companions.

    Returns the series with samples past the validity horizon flagged
    invalid, and the :class:`Validity` that produced the flagging.
    """
    series = run_quench(params, spec, grid, initial, tol)
    t_star = convergence_check(params, spec, grid, cutoff_tol, initial, series)
    t_size = None
    if spec.mode_count == 1:
        t_size = finite_size_horizon(params, spec, grid, size_tol, initial, series)
    validity = Validity(t_star, t_size)
    return series.truncated(validity.horizon), validity
