import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbo_lab.errors import ConfigError
from mbo_lab.spectral_core import (CUTOFFS, Field, Spectrum, build_grid, derivative, dyadic_cutoff,
                                   field_from_function, from_spectrum, gauge_transform, hilbert,
                                   padded_power, project, raw_to_spectrum, sobolev_norm,
                                   spectrum_to_raw, to_spectrum)


def test_grid_frequencies_and_spacing():
    g = build_grid(8, 1.0)
    assert np.array_equal(g.xi, np.arange(-4, 4, dtype=float))
    assert g.dx == pytest.approx(2 * np.pi / 8, rel=1e-15)
    assert g.x[0] == pytest.approx(-np.pi)


@pytest.mark.parametrize("n,P", [(6, 1.0), (12, 1.0), (4, 1.0), (8, 0.0), (8, -1.0)])
def test_grid_rejects_bad_parameters(n, P):
    with pytest.raises(ConfigError):
        build_grid(n, P)


def test_zero_field_has_zero_spectrum():
    g = build_grid(16, 1.0)
    assert not np.any(to_spectrum(Field(g, np.zeros(16))).coeffs)


def test_pure_mode_is_a_single_coefficient():
    g = build_grid(16, 1.0)
    c = to_spectrum(field_from_function(g, lambda x: np.exp(1j * x), real=False)).coeffs
    hit = np.abs(c) > 1e-12
    assert np.array_equal(g.xi[hit], [1.0])
    # u_hat(1) = int e^{-ix} e^{ix} dx = 2 pi
    assert abs(c[hit][0]) == pytest.approx(2 * np.pi, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.5, 16.0]))
def test_round_trip_and_parseval(seed, P):
    g = build_grid(256, P)
    rng = np.random.default_rng(seed)
    u = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    s = to_spectrum(u)
    back = from_spectrum(s).values
    assert np.max(np.abs(back - u.values)) <= 1e-12 * np.max(np.abs(u.values))
    l2 = g.dx * np.sum(np.abs(u.values) ** 2)
    assert s.l2sq() == pytest.approx(l2, rel=1e-12)


def test_raw_round_trip():
    g = build_grid(32, 3.0)
    rng = np.random.default_rng(1)
    s = Spectrum(g, rng.standard_normal(32) + 1j * rng.standard_normal(32))
    assert np.allclose(raw_to_spectrum(g, spectrum_to_raw(s)).coeffs, s.coeffs, rtol=0, atol=1e-13)


def test_hilbert_of_cos_is_sin():
    g = build_grid(256, 1.0)
    h = from_spectrum(hilbert(to_spectrum(field_from_function(g, np.cos))), reality_hint=True)
    assert np.max(np.abs(h.values - np.sin(g.x))) <= 1e-12


def test_hilbert_kills_constants_and_squares_to_minus_one():
    g = build_grid(64, 2.0)
    const = to_spectrum(Field(g, np.full(64, 3.0)))
    assert np.max(np.abs(hilbert(const).coeffs)) == 0
    rng = np.random.default_rng(4)
    c = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    c[g.modes == 0] = 0
    s = Spectrum(g, c)
    assert np.allclose(hilbert(hilbert(s)).coeffs, -c, rtol=0, atol=1e-13)


def test_hilbert_is_skew_adjoint():
    g = build_grid(128, 1.0)
    u = field_from_function(g, lambda t: np.sin(2 * t) + 0.3 * np.cos(5 * t))
    v = field_from_function(g, lambda t: np.cos(2 * t) - np.sin(7 * t))
    hu = from_spectrum(hilbert(to_spectrum(u))).values.real
    hv = from_spectrum(hilbert(to_spectrum(v))).values.real
    lhs = g.dx * np.sum(hu * v.values.real)
    rhs = -g.dx * np.sum(u.values.real * hv)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@pytest.mark.parametrize("fn,expect", [
    (np.sin, np.cos),
    (lambda x: np.full_like(x, 2.0), lambda x: np.zeros_like(x)),
])
def test_derivative(fn, expect):
    g = build_grid(64, 1.0)
    d = from_spectrum(derivative(to_spectrum(field_from_function(g, fn))))
    assert np.max(np.abs(d.values - expect(g.x))) <= 1e-12


def test_derivative_of_exponential_mode():
    g = build_grid(64, 1.0)
    u = field_from_function(g, lambda x: np.exp(2j * x), real=False)
    d = from_spectrum(derivative(to_spectrum(u)))
    assert np.max(np.abs(d.values - 2j * u.values)) <= 1e-12


def test_eta0_values_and_shape():
    assert dyadic_cutoff("eta0", 0, 1.0) == 1.0
    assert dyadic_cutoff("eta0", 0, 2.0) == 0.0
    xi = np.linspace(-3, 3, 2001)
    e = CUTOFFS.eta0(xi)
    assert np.array_equal(e, CUTOFFS.eta0(-xi))
    assert np.all((e >= 0) & (e <= 1))
    assert np.all(e[np.abs(xi) <= 1.25] == 1)
    assert np.all(e[np.abs(xi) >= 1.6] == 0)
    mid = (xi >= 1.25) & (xi <= 1.6)
    assert np.all(np.diff(e[mid]) <= 0)


def test_chi_telescopes_and_partitions():
    K = 6
    xi = np.linspace(2.0 ** (-K - 1) * 1.6 * 1.001, 2.0**K * 1.25 * 0.999, 777)
    total = sum(CUTOFFS.chi(k, xi) for k in range(-K, K + 1))
    tele = CUTOFFS.eta0(xi / 2.0**K) - CUTOFFS.eta0(xi / 2.0 ** (-K - 1))
    assert np.allclose(total, tele, rtol=0, atol=1e-14)
    assert np.allclose(total, 1.0, rtol=0, atol=1e-10)


@pytest.mark.parametrize("k", [-2, 0, 3, 7])
def test_chi_support(k):
    xi = np.linspace(-2.0 ** (k + 2), 2.0 ** (k + 2), 4001)
    c = CUTOFFS.chi(k, xi)
    a = np.abs(xi)
    outside = (a < 0.625 * 2.0**k) | (a > 1.6 * 2.0**k)
    assert np.all(c[outside] == 0)


def test_projections():
    g = build_grid(256, 4.0)
    rng = np.random.default_rng(2)
    s = Spectrum(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    assert not np.any(project(project(s, 2, "P_k"), 5, "P_k").coeffs)
    c = s.coeffs.copy()
    c[g.modes == 0] = 0
    s0 = Spectrum(g, c)
    kmin = int(np.floor(np.log2(1 / g.period_scale))) - 1
    total = sum(project(s0, k, "R_k").coeffs for k in range(kmin, 8))
    assert np.allclose(total, c, rtol=0, atol=0)
    # projections and the Hilbert transform commute exactly
    assert np.array_equal(project(hilbert(s), 3, "P_k").coeffs, hilbert(project(s, 3, "P_k")).coeffs)


def test_positive_projection_of_cos():
    g = build_grid(64, 1.0)
    v = from_spectrum(project(to_spectrum(field_from_function(g, np.cos)), 0, "P_plus"))
    assert np.max(np.abs(v.values - 0.5 * np.exp(1j * g.x))) <= 1e-13


@pytest.mark.parametrize("exponent,expect", [(0.0, np.sqrt(np.pi)), (1.0, np.sqrt(2 * np.pi))])
def test_sobolev_norm_of_cos(exponent, expect):
    g = build_grid(64, 1.0)
    s = to_spectrum(field_from_function(g, np.cos))
    assert sobolev_norm(s, exponent) == pytest.approx(expect, rel=1e-13)


def test_sobolev_norm_zero_and_homogeneous_mean():
    g = build_grid(32, 1.0)
    assert sobolev_norm(to_spectrum(Field(g, np.zeros(32))), 0.7) == 0
    const = to_spectrum(Field(g, np.ones(32)))
    assert sobolev_norm(const, 0.5, homogeneous=True) == 0


def test_padded_power_is_alias_free():
    g = build_grid(32, 1.0)
    u = field_from_function(g, lambda x: np.cos(5 * x) + np.sin(3 * x))
    raw = np.fft.fft(u.values)
    cube = np.fft.ifft(padded_power(raw, 3)).real
    assert np.max(np.abs(cube - u.values.real**3)) <= 1e-12


def test_gauge_transform():
    g = build_grid(4096, 1.0)
    assert not np.any(gauge_transform(Field(g, np.zeros(4096), reality_hint=True)).values)
    # no low-frequency content: the phase is 1 up to rounding
    hi = field_from_function(g, lambda x: np.cos(1500 * x) + 0.5 * np.sin(1200 * x))
    ref = from_spectrum(project(project(to_spectrum(hi), 10, "P_geq"), 0, "P_plus")).values
    assert np.max(np.abs(ref)) > 0.5
    assert np.max(np.abs(gauge_transform(hi).values - ref)) <= 1e-12
    mixed = field_from_function(g, lambda x: np.exp(-x**2) + 0.1 * np.cos(1500 * x))
    v = gauge_transform(mixed).values
    ref = from_spectrum(project(project(to_spectrum(mixed), 10, "P_geq"), 0, "P_plus")).values
    assert np.allclose(np.abs(v), np.abs(ref), rtol=0, atol=1e-12)
    with pytest.raises(ConfigError):
        gauge_transform(Field(g, np.zeros(4096, dtype=complex)))
