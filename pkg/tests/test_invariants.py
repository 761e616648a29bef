import numpy as np
import pytest
from scipy.signal import hilbert as analytic_signal

from mbo_lab.invariants import EPS_FLOOR, drift_report, els_norm, snapshot
from mbo_lab.mbo_solver import SolverConfig, Trajectory, solve
from mbo_lab.spectral_core import (Field, build_grid, field_from_function, from_spectrum, project,
                                   to_spectrum)


def test_cos_snapshot():
    g = build_grid(64, 1.0)
    s = snapshot(field_from_function(g, np.cos))
    assert abs(s.mass) <= 1e-14
    assert s.l2sq == pytest.approx(np.pi, rel=1e-14)
    assert s.hamiltonian == pytest.approx(7 * np.pi / 16, rel=1e-12)


def dense_hamiltonian(fn, dfn, P, n):
    """Independent oracle: trapezoid on a dense grid, Hilbert transform via the analytic signal."""
    L = 2 * np.pi * P
    x = np.arange(n) * L / n - L / 2
    ux = dfn(x)
    h_ux = np.imag(analytic_signal(ux))
    u = fn(x)
    return (L / n) * np.sum(0.5 * u * h_ux - u**4 / 12)


def test_hamiltonian_matches_dense_oracle():
    fn = lambda x: 0.5 * np.exp(-x**2)
    dfn = lambda x: -x * np.exp(-x**2)
    g = build_grid(512, 16.0)
    h = snapshot(field_from_function(g, fn)).hamiltonian
    ref = dense_hamiltonian(fn, dfn, 16.0, 8192)
    assert h == pytest.approx(ref, rel=1e-8)


def test_complex_snapshot_omits_hamiltonian():
    g = build_grid(32, 1.0)
    s = snapshot(field_from_function(g, lambda x: np.exp(1j * x), real=False))
    assert s.hamiltonian is None
    assert isinstance(s.mass, complex)


def test_focusing_sign_flip_of_quartic_term():
    g = build_grid(64, 1.0)
    u = field_from_function(g, np.cos)
    d = snapshot(u, focusing=True).hamiltonian - snapshot(u).hamiltonian
    assert d == pytest.approx(2 * (3 * np.pi / 4) / 12, rel=1e-12)


def test_linear_run_has_no_drift():
    cfg = SolverConfig(n=128, period_scale=4.0, dt=1e-2, T=1.0, nonlinear=False)
    tr = solve(field_from_function(cfg.grid, lambda x: np.exp(-x**2)), cfg)
    rep = drift_report(tr)
    assert rep.columns == ("quantity", "t", "value", "rel_drift")
    assert all(d <= 1e-12 for d in rep.summary["max_drift"].values())


def test_drift_floor_for_zero_mass():
    cfg = SolverConfig(n=64, period_scale=1.0, dt=1e-2, T=0.1)
    tr = solve(field_from_function(cfg.grid, lambda x: 0.2 * np.sin(x)), cfg)
    rep = drift_report(tr)
    masses = [s.mass for s in tr.invariant_log]
    expect = max(abs(m - masses[0]) for m in masses) / max(abs(masses[0]), EPS_FLOOR)
    assert np.isfinite(rep.summary["max_drift"]["mass"])
    assert rep.summary["max_drift"]["mass"] == pytest.approx(expect, rel=1e-12, abs=0)


def test_drift_magnitude_similar_for_both_signs():
    drifts = []
    for focusing in (False, True):
        cfg = SolverConfig(n=256, period_scale=16.0, dt=1e-3, T=0.5, focusing=focusing)
        tr = solve(field_from_function(cfg.grid, lambda x: 0.5 * np.exp(-x**2)), cfg)
        drifts.append(drift_report(tr).summary["max_drift"]["l2sq"])
    assert all(d <= 1e-6 for d in drifts)


def test_hamiltonian_drift_order():
    drifts = []
    for dt in (0.02, 0.01):
        cfg = SolverConfig(n=128, period_scale=4.0, dt=dt, T=1.0, snapshot_stride=1)
        tr = solve(field_from_function(cfg.grid, lambda x: 0.8 * np.exp(-x**2)), cfg)
        drifts.append(drift_report(tr).summary["max_drift"]["hamiltonian"])
    assert 16 * 0.7 <= drifts[0] / drifts[1] <= 16 * 1.3


def shell_trajectory(k, times, evolve=False):
    g = build_grid(256, 4.0)
    u = field_from_function(g, lambda x: np.cos(1.1 * 2.0**k * x) * np.exp(-x**2 / 20))
    s = project(to_spectrum(u), k, "R_k")
    states = []
    for t in times:
        phase = np.exp(1j * t * -g.xi * np.abs(g.xi)) if evolve else 1.0
        states.append(from_spectrum(s.scaled(phase), reality_hint=False))
    log = tuple(snapshot(v, t) for v, t in zip(states, times))
    return Trajectory(tuple(times), tuple(states), log), s


def test_els_norm_single_shell():
    k, sexp = 3, 0.7
    tr, s = shell_trajectory(k, (0.0, 0.5, 1.0))
    assert els_norm(tr, 0.0, sexp) == pytest.approx(2.0 ** (sexp * k) * np.sqrt(s.l2sq()), rel=1e-12)
    tr, _ = shell_trajectory(k, (0.0, 0.5, 1.0), evolve=True)
    assert els_norm(tr, 0.0, sexp) == pytest.approx(2.0 ** (sexp * k) * np.sqrt(s.l2sq()), rel=1e-10)


def test_els_norm_zero_and_monotone():
    g = build_grid(64, 2.0)
    z = Field(g, np.zeros(64))
    tr = Trajectory((0.0, 1.0), (z, z), (snapshot(z), snapshot(z, 1.0)))
    assert els_norm(tr, 0.5, 1.0) == 0
    cfg = SolverConfig(n=128, period_scale=4.0, dt=1e-2, T=1.0)
    full = solve(field_from_function(cfg.grid, lambda x: 1.5 * np.exp(-x**2)), cfg)
    values = []
    for m in (2, 5, len(full.times)):
        part = Trajectory(full.times[:m], full.states[:m], full.invariant_log[:m])
        values.append(els_norm(part, 0.0, 0.5))
    assert values == sorted(values)
