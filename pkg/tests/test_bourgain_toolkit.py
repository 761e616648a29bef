import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbo_lab.bourgain_toolkit import (SampledSpectrum, beta, composite_rule, dyadic_modulation_norm,
                                      indicator_profile, j_functional, make_block, modulation_intervals,
                                      resonance, shell_intervals, spacetime_spectrum, windowed_l2sq)
from mbo_lab.errors import ConfigError, CostGuardError, SupportError
from mbo_lab.mbo_solver import SolverConfig, omega, solve
from mbo_lab.spectral_core import CUTOFFS, field_from_function


def test_composite_rule_is_exact_on_polynomials():
    x, w = composite_rule([0.0, 0.3, 1.0, 2.5], 6)
    assert np.sum(w * x**11) == pytest.approx(2.5**12 / 12, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(*[st.floats(-100, 100, allow_nan=False)] * 3)
def test_resonance_factorizes(a, b, c):
    # on all-positive or all-negative triples Omega = 2(ab + bc + ca) up to sign
    lhs = resonance(abs(a), abs(b), abs(c))
    rhs = 2 * (abs(a * b) + abs(b * c) + abs(c * a))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)
    assert resonance(a, b, c) == pytest.approx(-resonance(-a, -b, -c), rel=1e-12, abs=1e-9)


def test_beta_and_shells():
    assert beta(3, 6) == 2.0
    assert beta(0, 0) == 2.0
    with pytest.raises(ConfigError):
        beta(1, -1)
    assert shell_intervals(0) == ((-2.0, 2.0),)
    assert shell_intervals(3) == ((-16.0, -4.0), (4.0, 16.0))
    assert shell_intervals(-1, "homogeneous") == ((-1.0, -0.25), (0.25, 1.0))
    with pytest.raises(ConfigError):
        shell_intervals(-1)
    assert modulation_intervals(2, "cumulative") == ((-8.0, 8.0),)


def test_block_support_checks():
    with pytest.raises(SupportError):
        make_block(2, 1, xi_range=(1.0, 5.0))
    with pytest.raises(SupportError):
        make_block(2, 1, mu_range=(0.5, 3.0))
    with pytest.raises(ConfigError):
        make_block(2, 1, resolution=8)
    with pytest.raises(ConfigError):
        make_block(2, 1, profile="custom")
    b = make_block(2, 1, xi_range=(2.5, 5.5), mu_range=(1.2, 3.0))
    assert b.is_indicator
    assert b.l2_norm() == pytest.approx(np.sqrt(3.0 * 1.8), rel=1e-14)
    with pytest.raises(SupportError):
        dyadic_modulation_norm(b, 5)


def test_indicator_norm_matches_dense_oracle():
    b = make_block(2, 1, xi_range=(2.5, 5.5), mu_range=(1.2, 3.0))
    m = np.linspace(1.2, 3.0, 200001)
    ref = sum(2 ** (j / 2) * beta(2, j) * np.sqrt(3.0 * np.trapezoid(CUTOFFS.eta(j, m) ** 2, m))
              for j in range(6))
    assert dyadic_modulation_norm(b, 2) == pytest.approx(ref, rel=1e-7)
    bk = sum(2 ** (j / 2) * np.sqrt(3.0 * np.trapezoid(CUTOFFS.eta(j, m) ** 2, m)) for j in range(6))
    assert dyadic_modulation_norm(b, 2, "Bk") == pytest.approx(bk, rel=1e-7)


def test_sampled_norm_agrees_with_block_norm():
    b = make_block(3, 2, "smooth_eta")
    xi = np.linspace(-14, 14, 281)
    tau = np.linspace(-220, 220, 1201)
    X, T = np.meshgrid(xi, tau, indexing="ij")
    ss = SampledSpectrum(xi, tau, b.evaluate(X, T - omega(X)))
    assert dyadic_modulation_norm(ss, 3) == pytest.approx(dyadic_modulation_norm(b, 3), rel=1e-3)
    with pytest.raises(SupportError):
        dyadic_modulation_norm(ss, 6)
    with pytest.raises(ConfigError):
        dyadic_modulation_norm(ss, 3, kind="Yk")


def test_norm_scales_with_amplitude():
    a = make_block(3, 2, "smooth_eta")
    b = make_block(3, 2, "smooth_eta", amplitude=-2.5)
    assert dyadic_modulation_norm(b, 3) == pytest.approx(2.5 * dyadic_modulation_norm(a, 3), rel=1e-14)


def small_blocks(resolution):
    f = [make_block(2, 1, resolution=resolution, xi_range=(2.5, 5.5), mu_range=(1.2, 3.0))
         for _ in range(3)]
    return f + [make_block(4, 6, resolution=resolution, xi_range=(8.0, 16.0), mu_range=(40.0, 110.0))]


def test_separable_j_is_converged():
    a = j_functional(*small_blocks(16), method="separable")
    b = j_functional(*small_blocks(24), method="separable")
    assert a > 0
    assert a == pytest.approx(b, rel=1e-4)


def test_tensor_j_approaches_separable():
    ref = j_functional(*small_blocks(24), method="separable")
    err16 = abs(j_functional(*small_blocks(16), method="tensor") / ref - 1)
    assert err16 <= 2e-3


def test_j_zero_cases_and_guards():
    f = small_blocks(16)
    # the output frequency is positive, so a block on negative xi is never reached
    neg = make_block(4, 6, xi_range=(-16.0, -8.0), mu_range=(40.0, 110.0))
    assert j_functional(f[0], f[1], f[2], neg) == 0.0
    zero = make_block(2, 1, xi_range=(2.5, 5.5), mu_range=(1.2, 3.0), amplitude=0.0)
    assert j_functional(zero, f[1], f[2], f[3]) == 0.0
    with pytest.raises(CostGuardError):
        j_functional(*small_blocks(32), method="tensor")
    smooth = make_block(2, 1, "smooth_eta")
    with pytest.raises(ConfigError):
        j_functional(smooth, f[1], f[2], f[3], method="separable")
    with pytest.raises(ConfigError):
        j_functional(*f, method="mc")


def test_indicator_profile_evaluation():
    p = indicator_profile((0.0, 1.0), (2.0, 3.0))
    assert np.array_equal(p(np.array([-0.5, 0.5, 1.5, 2.5, 3.5])), [0, 1, 0, 1, 0])
    assert p.l2sq() == pytest.approx(2.0, rel=1e-14)


@pytest.fixture(scope="module")
def linear_run():
    cfg = SolverConfig(n=64, period_scale=2.0, dt=0.01, T=1.27, snapshot_stride=1, nonlinear=False)
    return cfg, solve(field_from_function(cfg.grid, lambda x: np.exp(-x**2) * np.cos(3 * x)), cfg)


def test_spacetime_parseval(linear_run):
    cfg, tr = linear_run
    sp = spacetime_spectrum(tr)
    m = len(tr.times)
    assert np.sum(np.abs(sp.values) ** 2) / (cfg.grid.length * m * cfg.dt) == pytest.approx(
        windowed_l2sq(tr), rel=1e-12)


def test_free_wave_sits_on_the_dispersion_curve(linear_run):
    _, tr = linear_run
    sp = spacetime_spectrum(tr)
    i = np.argmax(np.max(np.abs(sp.values), axis=1))
    tau0 = sp.tau[np.argmax(np.abs(sp.values[i]))]
    assert abs(tau0 - omega(sp.xi[i])) <= sp.tau[1] - sp.tau[0]


def test_spacetime_spectrum_preconditions(linear_run):
    cfg, tr = linear_run
    short = SolverConfig(n=64, period_scale=2.0, dt=0.01, T=0.5, snapshot_stride=1, nonlinear=False)
    with pytest.raises(ConfigError):
        spacetime_spectrum(solve(tr.states[0], short))
    with pytest.raises(ConfigError):
        spacetime_spectrum(tr, window="box")
    assert spacetime_spectrum(tr, window="eta0").values.shape == (64, len(tr.times))


def riemann_j(xi, mu, n=80, h=1e-3):
    """Midpoint sum over (xi1, xi2, xi3); the three-fold modulation box
    convolution is sampled on a uniform grid of step h."""
    grids = [a + (b - a) * (np.arange(n) + 0.5) / n for a, b in xi[:3]]
    w = np.prod([(b - a) / n for a, b in xi[:3]])
    X1, X2, X3 = np.meshgrid(*grids, indexing="ij")
    s = X1 + X2 + X3
    om = resonance(X1, X2, X3)
    pts = [np.arange(a, b, h) + h / 2 for a, b in mu[:3]]
    conv = np.convolve(np.convolve(np.ones(len(pts[0])), np.ones(len(pts[1]))), np.ones(len(pts[2]))) * h**3
    start = sum(p[0] for p in pts)
    edges = start - h / 2 + h * np.arange(len(conv) + 1)
    cdf = np.concatenate([[0.0], np.cumsum(conv)])
    g = np.interp(mu[3][1] - om, edges, cdf) - np.interp(mu[3][0] - om, edges, cdf)
    return w * np.sum(g * ((s >= xi[3][0]) & (s <= xi[3][1])))


@pytest.mark.parametrize("out_xi", [(7.7, 16.0), (9.0, 12.5)])
def test_separable_j_matches_riemann_oracle(out_xi):
    mu = [(1.2, 3.0), (1.0, 2.5), (1.5, 3.5), (40.0, 110.0)]
    xi = [(2.5, 5.5), (2.2, 4.0), (3.0, 5.0), out_xi]
    f = [make_block(2, 1, xi_range=x, mu_range=m) for x, m in zip(xi[:3], mu[:3])]
    f.append(make_block(3, 6, xi_range=xi[3], mu_range=mu[3]))
    assert j_functional(*f) == pytest.approx(riemann_j(xi, mu), rel=1e-3)
