"""Periodic spectral infrastructure.

Conventions
-----------
Grid points are x_j = j*2*pi*P/n - pi*P and frequencies xi_m = m/P with
m = -n/2, ..., n/2 - 1 (ascending storage order).  The transform is the
periodic restriction of the line transform,

    u_hat(xi) = int e^{-i x xi} u(x) dx,     u(x) = (1/L) sum_m u_hat(xi_m) e^{i x xi_m},

with L = 2*pi*P, so int |u|^2 dx = (1/L) sum |u_hat|^2.  Inside the solver the
raw ``numpy.fft`` ordering is used instead; helpers below convert.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np
from scipy.special import beta as beta_fn, betainc, roots_legendre

from .errors import ConfigError

__all__ = [
    "SpectralGrid",
    "Field",
    "Spectrum",
    "DyadicCutoffs",
    "CUTOFFS",
    "build_grid",
    "to_spectrum",
    "from_spectrum",
    "hilbert",
    "derivative",
    "dyadic_cutoff",
    "project",
    "sobolev_norm",
    "gauge_transform",
    "padded_size",
    "padded_power",
    "field_from_function",
]


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    n: int
    period_scale: float

    def __post_init__(self) -> None:
        if not _is_power_of_two(self.n) or self.n < 8:
            raise ConfigError(f"n must be a power of two >= 8, got {self.n!r}", key="n")
        if not (np.isfinite(self.period_scale) and self.period_scale > 0):
            raise ConfigError(f"period scale P must be positive, got {self.period_scale!r}", key="P")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "period_scale", float(self.period_scale))

    @property
    def length(self) -> float:
        return 2.0 * np.pi * self.period_scale

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def freq_weight(self) -> float:
        """Parseval weight: int |u|^2 = freq_weight * sum |u_hat|^2."""
        return 1.0 / self.length

    @cached_property
    def modes(self) -> np.ndarray:
        m = np.arange(-self.n // 2, self.n // 2)
        m.setflags(write=False)
        return m

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.n) * self.dx - np.pi * self.period_scale
        x.setflags(write=False)
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        xi = self.modes / self.period_scale
        xi.setflags(write=False)
        return xi

    @cached_property
    def xi_fft(self) -> np.ndarray:
        """Frequencies in raw numpy.fft order (Nyquist mode carries -n/2)."""
        xi = np.fft.ifftshift(self.xi)
        xi.setflags(write=False)
        return xi

    @cached_property
    def _phase(self) -> np.ndarray:
        # e^{-i x_0 xi_m} with x_0 = -pi P equals (-1)^m
        p = np.where(self.modes % 2 == 0, 1.0, -1.0)
        p.setflags(write=False)
        return p

    @property
    def nyquist(self) -> float:
        return self.n / (2.0 * self.period_scale)


def build_grid(n: int, period_scale: float) -> SpectralGrid:
    return SpectralGrid(n, period_scale)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Field:
    grid: SpectralGrid
    values: np.ndarray
    reality_hint: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.shape != (self.grid.n,):
            raise ConfigError(f"field needs {self.grid.n} samples, got shape {v.shape}")
        v = _frozen(v)
        object.__setattr__(self, "values", v)
        if self.reality_hint:
            scale = np.max(np.abs(v)) if v.size else 0.0
            if np.max(np.abs(v.imag)) > 1e-10 * scale:
                raise ConfigError("reality_hint set but field has a non-negligible imaginary part")

    @property
    def real(self) -> np.ndarray:
        return self.values.real


@dataclass(frozen=True)
class Spectrum:
    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs)
        if c.shape != (self.grid.n,):
            raise ConfigError(f"spectrum needs {self.grid.n} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", _frozen(c))

    def l2sq(self) -> float:
        return float(self.grid.freq_weight * np.sum(np.abs(self.coeffs) ** 2))

    def scaled(self, factor: np.ndarray | complex) -> "Spectrum":
        return Spectrum(self.grid, self.coeffs * factor)


def field_from_function(grid: SpectralGrid, fn: Callable[[np.ndarray], np.ndarray],
                        real: bool = True) -> Field:
    vals = np.asarray(fn(grid.x))
    return Field(grid, vals.real if real else vals, reality_hint=real)


def to_spectrum(f: Field) -> Spectrum:
    g = f.grid
    raw = np.fft.fftshift(np.fft.fft(f.values))
    return Spectrum(g, g.dx * g._phase * raw)


def from_spectrum(s: Spectrum, reality_hint: bool = False) -> Field:
    g = s.grid
    vals = np.fft.ifft(np.fft.ifftshift(s.coeffs * g._phase)) / g.dx
    if reality_hint:
        vals = vals.real
    return Field(g, vals, reality_hint=reality_hint)


# raw-order helpers used by the time steppers -------------------------------

def spectrum_to_raw(s: Spectrum) -> np.ndarray:
    """Spectrum -> numpy.fft coefficients of the sample vector."""
    g = s.grid
    return np.fft.ifftshift(s.coeffs * g._phase) / g.dx


def raw_to_spectrum(grid: SpectralGrid, raw: np.ndarray) -> Spectrum:
    return Spectrum(grid, grid.dx * grid._phase * np.fft.fftshift(raw))


def padded_size(n: int, pad: float) -> int:
    if pad < 2:
        raise ConfigError(f"dealias pad must be >= 2, got {pad}", key="dealias_pad")
    m = int(np.ceil(pad * n))
    return m + (m % 2)


def padded_power(raw: np.ndarray, power: int, pad: float = 2.0) -> np.ndarray:
    """Raw coefficients of u**power, alias-free for power <= 3 when pad >= 2.

    The Nyquist mode of the input is ignored and the output Nyquist mode is
    zero, so the product only sees the symmetric band |m| < n/2.
    """
    n = raw.shape[-1]
    h = n // 2
    m = padded_size(n, pad)
    cp = np.zeros(raw.shape[:-1] + (m,), dtype=complex)
    cp[..., :h] = raw[..., :h]
    cp[..., m - h + 1:] = raw[..., h + 1:]
    u = np.fft.ifft(cp, axis=-1) * (m / n)
    w = np.fft.fft(u ** power, axis=-1) * (n / m)
    out = np.zeros_like(raw, dtype=complex)
    out[..., :h] = w[..., :h]
    out[..., h + 1:] = w[..., m - h + 1:]
    return out


# Fourier multipliers ---------------------------------------------------------

def hilbert(s: Spectrum) -> Spectrum:
    return s.scaled(-1j * np.sign(s.grid.xi))


def derivative(s: Spectrum) -> Spectrum:
    return s.scaled(1j * s.grid.xi)


# Littlewood-Paley cutoffs ----------------------------------------------------

_GL_NODES, _GL_WEIGHTS = roots_legendre(48)


def _exp_bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
    return out


def _exp_bump_prime(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    q = ti * (1.0 - ti)
    out[inside] = np.exp(-1.0 / q) * (1.0 - 2.0 * ti) / q**2
    return out


def _exp_bump_integral(t: np.ndarray) -> np.ndarray:
    """int_0^t of the exponential bump, t in [0, 1/2], by Gauss-Legendre."""
    half = 0.5 * t[..., None]
    s = half * (_GL_NODES + 1.0)
    return np.sum(_exp_bump(s) * _GL_WEIGHTS, axis=-1) * half[..., 0]


_EXP_BUMP_HALF = float(_exp_bump_integral(np.array([0.5]))[0])


@dataclass(frozen=True)
class DyadicCutoffs:
    """Smooth plateau eta_0 and the derived dyadic family.

    eta_0 = 1 on |xi| <= plateau, 0 on |xi| >= edge, and in between
    1 - Psi(t) where Psi is the normalized running integral of a bump on [0,1].
    smoothness_order=None selects the C-infinity bump exp(-1/(t(1-t)));
    an integer m >= 4 selects the polynomial bump (t(1-t))^m (class C^m).
    """

    smoothness_order: int | None = None
    plateau: float = 1.25
    edge: float = 1.6

    def __post_init__(self) -> None:
        if self.smoothness_order is not None and int(self.smoothness_order) < 4:
            raise ConfigError("smoothness_order must be >= 4", key="smoothness_order")
        if not 0 < self.plateau < self.edge:
            raise ConfigError("need 0 < plateau < edge")

    @property
    def width(self) -> float:
        return self.edge - self.plateau

    def _ramp(self, t: np.ndarray, nu: int) -> np.ndarray:
        """Psi(t) (nu=0) or its t-derivatives; t clipped to [0, 1]."""
        m = self.smoothness_order
        if m is None:
            if nu == 1:
                return _exp_bump(t) / (2.0 * _EXP_BUMP_HALF)
            if nu == 2:
                return _exp_bump_prime(t) / (2.0 * _EXP_BUMP_HALF)
            tc = np.clip(t, 0.0, 1.0)
            low = np.minimum(tc, 1.0 - tc)
            part = _exp_bump_integral(low) / (2.0 * _EXP_BUMP_HALF)
            return np.where(tc <= 0.5, part, 1.0 - part)
        inside = (t > 0) & (t < 1)
        if nu == 0:
            return betainc(m + 1, m + 1, np.clip(t, 0.0, 1.0))
        norm = beta_fn(m + 1, m + 1)
        ti = np.where(inside, t, 0.5)
        if nu == 1:
            val = (ti * (1 - ti)) ** m / norm
        else:
            val = m * (ti * (1 - ti)) ** (m - 1) * (1 - 2 * ti) / norm
        return np.where(inside, val, 0.0)

    def eta0(self, xi, nu: int = 0) -> np.ndarray:
        """eta_0(xi) and its first two xi-derivatives (nu = 0, 1, 2)."""
        xi = np.asarray(xi, dtype=float)
        a = np.abs(xi)
        t = (a - self.plateau) / self.width
        if nu == 0:
            return 1.0 - self._ramp(t, 0)
        if nu == 1:
            return -np.sign(xi) * self._ramp(t, 1) / self.width
        if nu == 2:
            return -self._ramp(t, 2) / self.width**2
        raise ValueError("nu must be 0, 1 or 2")

    def eta_leq(self, k: int, xi) -> np.ndarray:
        return self.eta0(np.ldexp(np.asarray(xi, dtype=float), -k))

    def chi(self, k: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.eta0(np.ldexp(xi, -k)) - self.eta0(np.ldexp(xi, -(k - 1)))

    def eta(self, k: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if k < 0:
            return np.zeros_like(xi)
        if k == 0:
            return self.eta0(xi)
        return self.chi(k, xi)

    def breakpoints(self, k: int, kind: str = "eta") -> tuple[float, ...]:
        """Nonnegative points where eta_k / chi_k changes smoothness class."""
        p, e = self.plateau, self.edge
        if kind == "eta" and k == 0:
            return (0.0, p, e)
        if kind == "eta" and k < 0:
            return ()
        s = 2.0**k
        return (0.5 * p * s, 0.5 * e * s, p * s, e * s)


CUTOFFS = DyadicCutoffs()

CutoffKind = Literal["eta0", "chi_k", "eta_k", "eta_leq"]


def dyadic_cutoff(kind: CutoffKind, k: int, xi, cutoffs: DyadicCutoffs = CUTOFFS):
    if kind == "eta0":
        out = cutoffs.eta0(xi)
    elif kind == "chi_k":
        out = cutoffs.chi(k, xi)
    elif kind == "eta_k":
        out = cutoffs.eta(k, xi)
    elif kind == "eta_leq":
        out = cutoffs.eta_leq(k, xi)
    else:
        raise ConfigError(f"unknown cutoff kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


def o_shell_indicator(k: int, xi) -> np.ndarray:
    """1_{O_k}: |xi| in [(3/4)2^k, (3/2)2^k)."""
    a = np.abs(np.asarray(xi, dtype=float))
    return ((a >= 0.75 * 2.0**k) & (a < 1.5 * 2.0**k)).astype(float)


ProjectKind = Literal["P_k", "R_k", "P_leq", "R_leq", "P_geq", "R_geq", "P_plus"]


def projection_multiplier(grid: SpectralGrid, k: int, kind: ProjectKind,
                          cutoffs: DyadicCutoffs = CUTOFFS) -> np.ndarray:
    xi = grid.xi
    a = np.abs(xi)
    if kind == "P_k":
        return cutoffs.chi(k, xi)
    if kind == "R_k":
        return o_shell_indicator(k, xi)
    if kind == "P_leq":
        return cutoffs.eta_leq(k, xi)
    if kind == "P_geq":
        return 1.0 - cutoffs.eta_leq(k - 1, xi)
    if kind == "R_leq":
        return (a < 1.5 * 2.0**k).astype(float)
    if kind == "R_geq":
        return (a >= 0.75 * 2.0**k).astype(float)
    if kind == "P_plus":
        return (xi > 0).astype(float)
    raise ConfigError(f"unknown projection kind {kind!r}")


def project(s: Spectrum, k: int, kind: ProjectKind, cutoffs: DyadicCutoffs = CUTOFFS) -> Spectrum:
    return s.scaled(projection_multiplier(s.grid, k, kind, cutoffs))


def sobolev_norm(s: Spectrum, exponent: float, homogeneous: bool = False) -> float:
    xi = s.grid.xi
    c2 = np.abs(s.coeffs) ** 2
    if homogeneous:
        nz = xi != 0
        w = np.zeros_like(xi)
        w[nz] = np.abs(xi[nz]) ** (2.0 * exponent)
    else:
        w = (1.0 + xi**2) ** exponent
    return float(np.sqrt(s.grid.freq_weight * np.sum(w * c2)))


def gauge_transform(u: Field, low: int = 0, high: int = 10,
                    cutoffs: DyadicCutoffs = CUTOFFS) -> Field:
    """v = exp(-(i/2) int^x (P_{<=low} u)^2) * P_+ P_{>=high} u.

    The antiderivative is the zero-mean spectral primitive of the fluctuating
    part plus mean * x for the mean of (P_{<=low} u)^2.
    """
    if not u.reality_hint:
        raise ConfigError("gauge transform expects a real field (reality_hint)")
    g = u.grid
    s = to_spectrum(u)
    w_raw = spectrum_to_raw(project(s, low, "P_leq", cutoffs))
    sq = raw_to_spectrum(g, padded_power(w_raw, 2))
    mean = sq.coeffs[g.modes == 0][0].real / g.length
    prim = np.zeros(g.n, dtype=complex)
    nz = g.xi != 0
    prim[nz] = sq.coeffs[nz] / (1j * g.xi[nz])
    antider = from_spectrum(Spectrum(g, prim), reality_hint=True).real + mean * g.x
    high_part = from_spectrum(project(project(s, high, "P_geq", cutoffs), 0, "P_plus"))
    return Field(g, np.exp(-0.5j * antider) * high_part.values, reality_hint=False)
