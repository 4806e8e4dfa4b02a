import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import expm_multiply

from dicke_phase_lab.echo import (
    Provenance,
    ab_amplitude,
    analytic_series,
    full_echo,
    oscillation_amplitude,
    time_grid,
)
from dicke_phase_lab.errors import CutoffTooSmall, InvalidParams, NonConvergence, NormDrift
from dicke_phase_lab.model import PRESETS, ModelParams, region_hamiltonians
from dicke_phase_lab.quench import (
    BasisSpec,
    SparseHamiltonian,
    basis_state,
    build_adm,
    build_effective,
    Validity,
    convergence_check,
    convergence_horizon,
    echo_series,
    finite_size_horizon,
    excitation_number,
    ground_state_index,
    lanczos_step,
    log_horizon,
    mirror_run,
    parity_signs,
    propagate,
    run_quench,
    validated_run,
)
from oracles import two_mode_echo


def element(h, row, col):
    return h.csr[row, col]


# -- BasisSpec ---------------------------------------------------------------

def test_dimensions():
    assert BasisSpec(100, 140).dimension == 101 * 141
    assert BasisSpec(1, 140, 2).dimension == 141 ** 2


def test_index_conventions():
    spec = BasisSpec(4, 5)
    assert spec.index(-2, 0) == 0
    assert spec.index(-1, 3) == 6 + 3
    assert spec.index(2, 5) == spec.dimension - 1
    two = BasisSpec(1, 5, 2)
    assert two.index(2, 3) == 2 * 6 + 3
    with pytest.raises(InvalidParams):
        spec.index(3, 0)


@pytest.mark.parametrize("kwargs,err", [
    (dict(n_atoms=2, boson_cutoff=0), CutoffTooSmall),
    (dict(n_atoms=0, boson_cutoff=3), InvalidParams),
    (dict(n_atoms=2, boson_cutoff=3, mode_count=3), InvalidParams),
])
def test_basis_invariants(kwargs, err):
    with pytest.raises(err):
        BasisSpec(**kwargs)


# -- Hamiltonian assembly ----------------------------------------------------

def test_adm_rotating_element():
    p = ModelParams(g1=0.37, g2=0.0, n_atoms=2)
    spec = BasisSpec(2, 4)
    h = build_adm(p, spec)
    assert element(h, spec.index(-1, 1), spec.index(0, 0)) == pytest.approx(0.37, abs=1e-15)


def test_adm_counter_rotating_element():
    p = ModelParams(g1=0.0, g2=0.52, n_atoms=2)
    spec = BasisSpec(2, 4)
    h = build_adm(p, spec)
    # a^dag J+ : sqrt(1) * sqrt(j(j+1) - m(m+1)) / sqrt(N) with j=1, m=-1
    assert element(h, spec.index(0, 1), spec.index(-1, 0)) == pytest.approx(0.52, abs=1e-15)


def test_adm_diagonal():
    p = ModelParams(omega=1.3, omega0=0.7, g1=0.2, g2=0.4, n_atoms=6)
    spec = BasisSpec(6, 5)
    d = build_adm(p, spec).csr.diagonal().real
    for m in (-3, 0, 2):
        for n in (0, 4):
            assert d[spec.index(m, n)] == pytest.approx(1.3 * n + 0.7 * m)


def test_effective_elements():
    p = ModelParams(g1=0.3, g2=0.8)
    spec = BasisSpec(1, 6, 2)
    h = build_effective(p, spec)
    assert element(h, spec.index(1, 1), spec.index(0, 0)) == pytest.approx(0.8)
    assert element(h, spec.index(1, 0), spec.index(0, 1)) == pytest.approx(0.3)
    assert element(h, spec.index(2, 3), spec.index(2, 3)) == pytest.approx(5.0)


@pytest.mark.parametrize("builder,spec", [
    (build_adm, BasisSpec(8, 10)),
    (build_effective, BasisSpec(8, 10, 2)),
])
def test_exactly_hermitian_and_canonical(builder, spec):
    p = ModelParams(g1=0.7, g2=1.1, n_atoms=8)
    h = builder(p, spec)
    assert h.hermiticity_error() == 0.0
    key = h.rows * h.dimension + h.cols
    assert np.all(np.diff(key) > 0)
    again = builder(p, spec)
    assert np.array_equal(h.values, again.values) and np.array_equal(key, again.rows * h.dimension + again.cols)


def test_hard_truncation_drops_raises():
    spec = BasisSpec(1, 3, 2)
    h = build_effective(ModelParams(g1=0.5, g2=0.5), spec).csr
    top = spec.index(3, 3)
    # nothing above the cutoff exists, so the top state only couples downwards
    assert h[:, top].nnz == h[top, :].nnz


def test_builders_check_mode_count():
    p = ModelParams(n_atoms=4)
    with pytest.raises(InvalidParams):
        build_adm(p, BasisSpec(4, 3, 2))
    with pytest.raises(InvalidParams):
        build_effective(p, BasisSpec(4, 3, 1))
    with pytest.raises(InvalidParams):
        build_adm(p, BasisSpec(6, 3))


def test_zero_coupling_is_diagonal():
    h = build_adm(ModelParams(n_atoms=6), BasisSpec(6, 5)).csr
    assert (h - sp.diags(h.diagonal())).nnz == 0


# -- propagation -------------------------------------------------------------

def diagonal_hamiltonian(energies):
    n = len(energies)
    idx = np.arange(n)
    return SparseHamiltonian(n, idx, idx, np.asarray(energies, dtype=complex))


def test_diagonal_hamiltonian_exact_phases():
    rng = np.random.default_rng(3)
    e = rng.uniform(-3, 3, 40)
    c = rng.normal(size=40) + 1j * rng.normal(size=40)
    c /= np.linalg.norm(c)
    grid = time_grid(5, 0.05)
    series = echo_series(diagonal_hamiltonian(e), c, grid)
    w = np.abs(c) ** 2
    expected = np.abs(np.exp(-1j * np.outer(grid, e)) @ w) ** 2
    assert np.max(np.abs(series.values - expected)) < 1e-12


def small_effective(g1=0.6, g2=0.9, cutoff=20):
    return build_effective(ModelParams(g1=g1, g2=g2), BasisSpec(1, cutoff, 2))


def test_lanczos_matches_expm_multiply():
    h = small_effective()
    rng = np.random.default_rng(0)
    v = rng.normal(size=h.dimension) + 1j * rng.normal(size=h.dimension)
    v /= np.linalg.norm(v)
    w, m, err = lanczos_step(h.csr.dot, v, 0.05)
    ref = expm_multiply(-1j * 0.05 * h.csr, v)
    assert err <= 1e-10 and m < 64
    assert np.linalg.norm(w - ref) < 1e-10


def test_propagate_matches_expm_multiply_over_a_grid():
    h = small_effective(cutoff=12)
    psi0 = basis_state(BasisSpec(1, 12, 2), 0, 0)
    grid = time_grid(2.0, 0.1)
    states = np.array(list(propagate(h, psi0, grid)))
    ref = expm_multiply(-1j * h.csr, psi0, start=0, stop=2.0, num=grid.size, endpoint=True)
    assert np.max(np.abs(states - ref)) < 1e-9


def test_step_halving_keeps_accuracy():
    h = small_effective(cutoff=12)
    psi0 = basis_state(BasisSpec(1, 12, 2), 0, 0)
    grid = np.array([0.0, 1.5])
    out = list(propagate(h, psi0, grid, m_max=6))[-1]
    ref = expm_multiply(-1j * 1.5 * h.csr, psi0)
    assert np.linalg.norm(out - ref) < 1e-9


def test_unreachable_tolerance():
    h = small_effective(cutoff=12)
    psi0 = basis_state(BasisSpec(1, 12, 2), 0, 0)
    with pytest.raises(NonConvergence):
        list(propagate(h, psi0, np.array([0.0, 5.0]), m_max=2, max_halvings=0))


def test_norm_drift_detected(monkeypatch):
    import dicke_phase_lab.quench as quench

    def leaky(matvec, v, dt, tol, m_max, work=None):
        return 0.999 * v, 1, 0.0

    monkeypatch.setattr(quench, "lanczos_step", leaky)
    h = small_effective(cutoff=4)
    with pytest.raises(NormDrift):
        list(propagate(h, basis_state(BasisSpec(1, 4, 2), 0, 0), time_grid(1.0, 0.1)))


def test_unnormalized_initial_state_rejected():
    h = small_effective(cutoff=4)
    with pytest.raises(InvalidParams):
        list(propagate(h, np.ones(h.dimension, complex), time_grid(1.0, 0.1)))


# -- echoes and conserved quantities -----------------------------------------

def test_decoupled_echo_is_one():
    s = run_quench(ModelParams(n_atoms=10), BasisSpec(10, 8), time_grid(3, 0.05))
    assert np.max(np.abs(s.values - 1)) < 1e-14
    assert s.provenance is Provenance.FINITE_N


def test_ground_state_index():
    assert ground_state_index(BasisSpec(10, 8)) == 0
    assert ground_state_index(BasisSpec(1, 8, 2)) == 0


def test_parity_is_conserved():
    spec = BasisSpec(10, 30)
    p = ModelParams(g1=0.7, g2=0.9, n_atoms=10)
    odd = parity_signs(spec) < 0
    s = run_quench(p, spec, time_grid(4, 0.05),
                   monitors={"odd": lambda psi: float(np.sum(np.abs(psi[odd]) ** 2))})
    assert np.max(s.diagnostics["odd"]) < 1e-10
    assert np.max(np.abs(s.diagnostics["norm"] - 1)) < 1e-8


def test_rotating_wave_conserves_excitations():
    spec = BasisSpec(10, 30)
    p = ModelParams(g1=1.3, g2=0.0, n_atoms=10)
    nexc = excitation_number(spec)
    s = run_quench(p, spec, time_grid(4, 0.05), initial="up",
                   monitors={"exc": lambda psi: float(np.sum(nexc * np.abs(psi) ** 2))})
    assert np.max(np.abs(s.diagnostics["exc"] - s.diagnostics["exc"][0])) < 1e-10


def test_effective_rotating_wave_is_periodic():
    # g2 = 0 conserves n_a + n_b, so the vacuum is an eigenstate
    s = run_quench(ModelParams(g1=0.4, g2=0.0), BasisSpec(1, 10, 2), time_grid(2, 0.05))
    assert np.max(np.abs(s.values - 1)) < 1e-12


@pytest.mark.parametrize("name", "abc")
def test_effective_model_matches_gaussian_oracle(name):
    g1, g2 = PRESETS[name]
    grid = time_grid(3, 0.02)
    s = run_quench(ModelParams(g1=g1, g2=g2), BasisSpec(1, 60, 2), grid)
    assert s.provenance is Provenance.EFFECTIVE
    assert np.max(np.abs(s.values - two_mode_echo(g1, g2, grid))) < 1e-9


def test_amplitude_adjudication():
    # the propagated effective model against both closed-form amplitudes at point a
    g1, g2 = PRESETS["a"]
    grid = time_grid(12, 0.02)
    s = run_quench(ModelParams(g1=g1, g2=g2), BasisSpec(1, 60, 2), grid)
    approx = full_echo(ModelParams(g1=g1, g2=g2), grid)
    dev_lt = np.max(np.abs(s.values - approx))
    h1, h2 = region_hamiltonians(ModelParams(g1=g1, g2=g2))
    alt = ((1 - ab_amplitude(h1.tanh_theta) * np.sin(h1.omega_eff * grid) ** 2)
           * (1 - ab_amplitude(h2.tanh_theta) * np.sin(h2.omega_eff * grid) ** 2))
    dev_ab = np.max(np.abs(s.values - alt))
    assert dev_lt < 0.03
    assert dev_ab > 5 * dev_lt
    # both factors' depths match to leading order in tanh^2
    for h in (h1, h2):
        depth = 1 - (1 + h.tanh_theta**2 * 4 / (1 - h.tanh_theta**2) ** 2) ** -0.5
        assert oscillation_amplitude(h.tanh_theta) == pytest.approx(depth, rel=0.2)


def test_run_quench_rejects_bad_initial_state():
    with pytest.raises(InvalidParams):
        run_quench(ModelParams(n_atoms=4), BasisSpec(4, 3), time_grid(1, 0.1), initial="left")
    with pytest.raises(InvalidParams):
        run_quench(ModelParams(), BasisSpec(1, 3, 2), time_grid(1, 0.1), initial="up")
    with pytest.raises(InvalidParams):
        mirror_run(ModelParams(), BasisSpec(1, 3, 2), time_grid(1, 0.1))


def test_time_is_in_units_of_inverse_omega():
    g1, g2 = 0.6, 0.3
    grid = time_grid(3, 0.05)
    a = run_quench(ModelParams(omega=1.0, g1=g1, g2=g2), BasisSpec(1, 30, 2), grid)
    b = run_quench(ModelParams(omega=2.0, g1=2 * g1, g2=2 * g2), BasisSpec(1, 30, 2), grid)
    assert np.array_equal(a.times, b.times)
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_mirror_run_starts_from_excited_atoms():
    p = ModelParams(g1=0.5, g2=0.2, n_atoms=6)
    s = mirror_run(p, BasisSpec(6, 10), time_grid(1, 0.1))
    assert s.values[0] == 1.0 and s.values[-1] < 1


# -- convergence horizon -----------------------------------------------------

def test_convergence_horizon_basic():
    grid = time_grid(1, 0.1)
    a = analytic_series(ModelParams(g1=0.4, g2=0.4), grid)
    assert convergence_horizon(a, a) == pytest.approx(1.0)
    vals = a.values.copy()
    vals[5:] -= 1e-3
    b = type(a)(grid, vals, a.provenance)
    assert convergence_horizon(b, a) == pytest.approx(0.4)


def test_convergence_check_decoupled_reaches_grid_end():
    assert convergence_check(ModelParams(n_atoms=4), BasisSpec(4, 5), time_grid(2, 0.1)) == pytest.approx(2.0)


def test_convergence_check_finite_for_inverted_modes():
    g1, g2 = PRESETS["d"]
    t_star = convergence_check(ModelParams(g1=g1, g2=g2), BasisSpec(1, 20, 2), time_grid(4, 0.05))
    assert 0 < t_star < 4


def test_convergence_check_matches_full_companion():
    # the early-stopping companion must give the same horizon as a full one
    g1, g2 = PRESETS["d"]
    p, spec, grid = ModelParams(g1=g1, g2=g2), BasisSpec(1, 20, 2), time_grid(4, 0.05)
    series = run_quench(p, spec, grid)
    full = run_quench(p, spec.doubled(), grid)
    assert convergence_check(p, spec, grid, series=series) == convergence_horizon(series, full)


def test_convergence_horizon_accepts_shorter_reference():
    grid = time_grid(1, 0.1)
    a = analytic_series(ModelParams(g1=0.4, g2=0.4), grid)
    assert convergence_horizon(a, type(a)(grid[:6], a.values[:6], a.provenance)) == pytest.approx(0.5)
    vals = a.values[:4].copy()
    vals[1:] += 1e-3
    assert convergence_horizon(a, type(a)(grid[:4], vals, a.provenance)) == 0.0


def test_echo_series_stop_condition():
    h = small_effective(cutoff=6)
    psi0 = basis_state(BasisSpec(1, 6, 2), 0, 0)
    s = echo_series(h, psi0, time_grid(2, 0.1), stop=lambda k, val: k == 3)
    assert s.times.size == 4 and s.diagnostics["norm"].size == 4


def test_log_horizon_is_relative():
    grid = time_grid(10, 0.1)
    a = type(analytic_series(ModelParams(), grid))(grid, np.exp(-2 * grid), Provenance.FINITE_N)
    b = type(a)(grid, np.exp(-2 * grid) * np.where(grid > 6, 1.2, 1.0), Provenance.FINITE_N)
    assert log_horizon(b, a, 0.05) == pytest.approx(6.0)
    # absolute differences of tiny echoes stay below any useful sup-norm threshold
    assert convergence_horizon(b, a, 1e-4) == pytest.approx(10.0)


def test_log_horizon_counts_invalid_samples():
    grid = time_grid(1, 0.1)
    a = type(analytic_series(ModelParams(), grid))(grid, np.ones_like(grid), Provenance.FINITE_N,
                                                   valid=grid < 0.55)
    assert log_horizon(a, a) == pytest.approx(0.5)


def test_finite_size_horizon_full_model_only():
    with pytest.raises(InvalidParams):
        finite_size_horizon(ModelParams(), BasisSpec(1, 10, 2), time_grid(1, 0.1))


def test_finite_size_horizon_small_system():
    p = ModelParams(g1=0.4, g2=0.4, n_atoms=4)
    t_n = finite_size_horizon(p, BasisSpec(4, 20), time_grid(10, 0.05), tol=0.05)
    assert 0 < t_n < 10


def test_validity_horizon():
    assert Validity(5.0).horizon == 5.0
    assert Validity(5.0, 3.0).horizon == 3.0


def test_validated_run_flags_samples_past_horizon():
    p = ModelParams(g1=0.4, g2=0.4, n_atoms=4)
    series, validity = validated_run(p, BasisSpec(4, 20), time_grid(10, 0.05))
    assert validity.size_horizon is not None
    assert series.window_end() == np.searchsorted(series.times, validity.horizon, side="right")
    eff, v_eff = validated_run(ModelParams(g1=0.4, g2=0.4), BasisSpec(1, 30, 2), time_grid(2, 0.05))
    assert v_eff.size_horizon is None and eff.valid.all()


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2))
def test_norm_conserved_for_any_couplings(g1, g2):
    s = run_quench(ModelParams(g1=g1, g2=g2, n_atoms=4), BasisSpec(4, 12), time_grid(1, 0.1))
    assert np.max(np.abs(s.diagnostics["norm"] - 1)) < 1e-8
    assert np.all((s.values >= 0) & (s.values <= 1))
