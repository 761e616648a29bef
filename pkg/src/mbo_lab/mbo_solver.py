"""Time evolution for u_t + H u_xx = u^2 u_x on a periodic grid.

The state is advanced in raw numpy.fft coefficients.  Only the symmetric band
|m| < n/2 is evolved: the Nyquist mode is removed from initial data, which
keeps real data exactly real and makes the semi-discrete flow conserve the
discrete invariants.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import ConfigError, DivergenceError
from .invariants import ConservedSnapshot, snapshot_from_raw
from .spectral_core import (Field, SpectralGrid, Spectrum, from_spectrum, padded_power,
                            padded_size, raw_to_spectrum, spectrum_to_raw, to_spectrum)

BLOWUP_FACTOR = 10.0
CONTOUR_POINTS = 16


def omega(xi):
    """Dispersion relation omega(xi) = -xi|xi|."""
    xi = np.asarray(xi, dtype=float)
    return -xi * np.abs(xi)


class NonContractionWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n: int = 256
    period_scale: float = 16.0
    dt: float = 1e-3
    T: float = 1.0
    integrator: Literal["etdrk4", "ifrk4"] = "etdrk4"
    dealias_pad: float = 2.0
    snapshot_stride: int = 10
    focusing: bool = False
    nonlinear: bool = True

    def __post_init__(self) -> None:
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError("dt must be positive", key="dt")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ConfigError("T must be positive", key="T")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"T/dt = {steps} is not an integer", key="dt")
        if self.integrator not in ("etdrk4", "ifrk4"):
            raise ConfigError(f"unknown integrator {self.integrator!r}", key="integrator")
        if self.dealias_pad < 2:
            raise ConfigError("dealias_pad must be >= 2", key="dealias_pad")
        if int(self.snapshot_stride) < 1:
            raise ConfigError("snapshot_stride must be >= 1", key="snapshot_stride")
        self.grid  # validates n and P

    @cached_property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.n, self.period_scale)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stiffness(self) -> float:
        """dt * max|omega| on the grid; recorded, not enforced (linear part is exact)."""
        return self.dt * self.grid.nyquist**2


@dataclass(frozen=True)
class Trajectory:
    times: tuple[float, ...]
    states: tuple[Field, ...]
    invariant_log: tuple[ConservedSnapshot, ...]

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        if len({(s.grid.n, s.grid.period_scale) for s in self.states}) > 1:
            raise ValueError("trajectory states must share one grid")

    @property
    def grid(self) -> SpectralGrid:
        return self.states[0].grid

    def to_csv(self) -> str:
        lines = ["t,x,re_u,im_u"]
        x = self.grid.x
        for t, u in zip(self.times, self.states):
            for xj, v in zip(x, u.values):
                lines.append(f"{t!r},{float(xj)!r},{float(v.real)!r},{float(v.imag)!r}")
        return "\n".join(lines) + "\n"

    def to_binary(self) -> bytes:
        """Per snapshot: n, P, t, then (re, im) of each spectral coefficient, all <f8."""
        out = bytearray()
        g = self.grid
        for t, u in zip(self.times, self.states):
            c = to_spectrum(u).coeffs
            inter = np.empty(2 * g.n)
            inter[0::2], inter[1::2] = c.real, c.imag
            out += struct.pack("<3d", float(g.n), g.period_scale, t)
            out += inter.astype("<f8").tobytes()
        return bytes(out)


def read_binary(data: bytes) -> list[tuple[float, Spectrum]]:
    """Inverse of Trajectory.to_binary."""
    out = []
    pos = 0
    while pos < len(data):
        n, p, t = struct.unpack_from("<3d", data, pos)
        pos += 24
        n = int(n)
        vals = np.frombuffer(data, dtype="<f8", count=2 * n, offset=pos)
        pos += 16 * n
        out.append((t, Spectrum(SpectralGrid(n, p), vals[0::2] + 1j * vals[1::2])))
    return out


# ---------------------------------------------------------------------------

def free_evolve(s: Spectrum, t: float) -> Spectrum:
    return s.scaled(np.exp(1j * t * omega(s.grid.xi)))


def _nonlinear_raw(raw: np.ndarray, xi_fft: np.ndarray, sign: float, pad: float) -> np.ndarray:
    # u^2 u_x = (1/3) d/dx (u^3)
    return (sign / 3.0) * 1j * xi_fft * padded_power(raw, 3, pad)


def nonlinearity(u: Field, focusing: bool = False, pad: float = 2.0) -> Field:
    """u^2 u_x (or -u^2 u_x), alias-free on the symmetric band."""
    g = u.grid
    raw = _nonlinear_raw(spectrum_to_raw(to_spectrum(u)), g.xi_fft, -1.0 if focusing else 1.0, pad)
    return from_spectrum(raw_to_spectrum(g, raw), reality_hint=u.reality_hint)


def _etd_coefficients(z: np.ndarray, h: float) -> tuple[np.ndarray, ...]:
    """Cox-Matthews ETDRK4 weights by averaging over a circle around each z."""
    r = np.exp(2j * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS)
    lr = z[:, None] + r[None, :]
    e = np.exp(lr)
    q = h * np.mean((np.exp(lr / 2) - 1) / lr, axis=1)
    f1 = h * np.mean((-4 - lr + e * (4 - 3 * lr + lr**2)) / lr**3, axis=1)
    f2 = h * np.mean((2 + lr + e * (lr - 2)) / lr**3, axis=1)
    f3 = h * np.mean((-4 - 3 * lr - lr**2 + e * (4 - lr)) / lr**3, axis=1)
    return q, f1, f2, f3


class _Stepper:
    def __init__(self, cfg: SolverConfig, real: bool):
        g = cfg.grid
        self.cfg = cfg
        self.real = real
        self.xi = g.xi_fft
        self.sign = -1.0 if cfg.focusing else 1.0
        h = cfg.dt
        lin = 1j * omega(self.xi)
        self.E = np.exp(h * lin)
        self.E2 = np.exp(0.5 * h * lin)
        if cfg.integrator == "etdrk4":
            self.q, self.f1, self.f2, self.f3 = _etd_coefficients(h * lin, h)
        n = g.n
        self._neg = (-np.arange(n)) % n
        padded_size(n, cfg.dealias_pad)

    def N(self, c: np.ndarray) -> np.ndarray:
        if not self.cfg.nonlinear:
            return np.zeros_like(c)
        return _nonlinear_raw(c, self.xi, self.sign, self.cfg.dealias_pad)

    def symmetrize(self, c: np.ndarray) -> np.ndarray:
        return 0.5 * (c + np.conj(c[self._neg]))

    def step(self, c: np.ndarray) -> np.ndarray:
        h = self.cfg.dt
        if self.cfg.integrator == "etdrk4":
            nv = self.N(c)
            a = self.E2 * c + self.q * nv
            na = self.N(a)
            b = self.E2 * c + self.q * na
            nb = self.N(b)
            cc = self.E2 * a + self.q * (2 * nb - nv)
            nc = self.N(cc)
            out = self.E * c + self.f1 * nv + 2 * self.f2 * (na + nb) + self.f3 * nc
        else:
            k1 = self.N(c)
            k2 = self.N(self.E2 * (c + 0.5 * h * k1))
            k3 = self.N(self.E2 * c + 0.5 * h * k2)
            k4 = self.N(self.E * c + h * self.E2 * k3)
            out = self.E * c + (h / 6.0) * (self.E * k1 + 2 * self.E2 * (k2 + k3) + k4)
        if self.real:
            out = self.symmetrize(out)
        return out


def _strip_nyquist(c: np.ndarray) -> np.ndarray:
    c = np.array(c, dtype=complex)
    c[len(c) // 2] = 0.0
    return c


def _check_grid(u0: Field, cfg: SolverConfig) -> None:
    if u0.grid != cfg.grid:
        raise ConfigError("initial field grid does not match the solver configuration", key="n")


def _raw_to_field(grid: SpectralGrid, raw: np.ndarray, real: bool) -> Field:
    vals = np.fft.ifft(raw)
    return Field(grid, vals.real if real else vals, reality_hint=real)


def _l2(c: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(c) ** 2)))


def step(u: Field, cfg: SolverConfig) -> Field:
    _check_grid(u, cfg)
    st = _Stepper(cfg, u.reality_hint)
    c0 = _strip_nyquist(np.fft.fft(u.values))
    c1 = st.step(c0)
    _guard(c0, c1, cfg.dt)
    return _raw_to_field(u.grid, c1, u.reality_hint)


def _guard(before: np.ndarray, after: np.ndarray, t: float) -> None:
    a, b = _l2(before), _l2(after)
    if not np.isfinite(b) or b > BLOWUP_FACTOR * max(a, 1e-300):
        raise DivergenceError(f"L2 norm grew from {a:.3e} to {b:.3e} in one step at t={t:.6g}", t=t)


def iterate_raw(u0: Field, cfg: SolverConfig):
    """Yield (step index, time, raw coefficients) for every step, starting at 0."""
    _check_grid(u0, cfg)
    st = _Stepper(cfg, u0.reality_hint)
    c = _strip_nyquist(np.fft.fft(u0.values))
    if u0.reality_hint:
        c = st.symmetrize(c)
    yield 0, 0.0, c
    for i in range(1, cfg.n_steps + 1):
        nxt = st.step(c)
        t = i * cfg.dt
        _guard(c, nxt, t)
        c = nxt
        yield i, t, c


def solve(u0: Field, cfg: SolverConfig) -> Trajectory:
    g = cfg.grid
    real = u0.reality_hint
    times, states, log = [], [], []
    stride = int(cfg.snapshot_stride)
    for i, t, c in iterate_raw(u0, cfg):
        if i % stride == 0 or i == cfg.n_steps:
            times.append(t)
            states.append(_raw_to_field(g, c, real))
            log.append(snapshot_from_raw(g, c, t, real, cfg.focusing, cfg.nonlinear))
    return Trajectory(tuple(times), tuple(states), tuple(log))


# ---------------------------------------------------------------------------

def picard_solve(u0: Field, cfg: SolverConfig, iterations: int = 6
                 ) -> tuple[list[Trajectory], list[float]]:
    """Picard iterates of u = W(t)phi + int_0^t W(t-s) (u^2 u_x)(s) ds.

    The Duhamel integral is a cumulative trapezoid rule on the step grid,
    carried out in the interaction picture v(t) = W(-t)u(t).  Returns the
    iterates u^(0..iterations) and residuals[n] = sup_t ||u^(n+1) - u^(n)||_{H^1/2}.
    """
    _check_grid(u0, cfg)
    if cfg.T > 1.0:
        raise ConfigError("picard_solve needs T <= 1", key="T")
    if iterations < 2:
        raise ConfigError("need at least two Picard iterations", key="iterations")
    g = cfg.grid
    real = u0.reality_hint
    st = _Stepper(cfg, real)
    nt = cfg.n_steps
    t = np.arange(nt + 1) * cfg.dt
    phase = np.exp(1j * np.outer(t, omega(g.xi_fft)))          # W(t) per grid time
    c0 = _strip_nyquist(np.fft.fft(u0.values))
    if real:
        c0 = st.symmetrize(c0)
    weight = g.freq_weight * g.dx**2 * np.sqrt(1.0 + g.xi_fft**2)

    def h_half(d: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(weight * np.abs(d) ** 2, axis=-1))

    current = phase * c0[None, :]
    iterates = [current]
    residuals: list[float] = []
    for _ in range(iterations):
        nl = np.stack([st.N(row) for row in current])
        integrand = np.conj(phase) * nl
        acc = np.zeros_like(integrand)
        acc[1:] = np.cumsum(0.5 * cfg.dt * (integrand[1:] + integrand[:-1]), axis=0)
        nxt = phase * (c0[None, :] + acc)
        if real:
            nxt = 0.5 * (nxt + np.conj(nxt[:, st._neg]))
        residuals.append(float(np.max(h_half(nxt - current))))
        iterates.append(nxt)
        current = nxt
    ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 0]
    if any(r > 1 for r in ratios):
        warnings.warn(f"Picard residuals are not contracting: ratios {ratios}", NonContractionWarning)
    stride = int(cfg.snapshot_stride)
    keep = [i for i in range(nt + 1) if i % stride == 0 or i == nt]
    trajs = []
    for it in iterates:
        states = tuple(_raw_to_field(g, it[i], real) for i in keep)
        log = tuple(snapshot_from_raw(g, it[i], t[i], real, cfg.focusing, cfg.nonlinear) for i in keep)
        trajs.append(Trajectory(tuple(float(t[i]) for i in keep), states, log))
    return trajs, residuals


def sup_l2_distance(a: Trajectory, b: Trajectory) -> float:
    """sup over shared snapshot times of ||a(t) - b(t)||_{L^2}."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are not sampled at the same times")
    dx = a.grid.dx
    return max(float(np.sqrt(dx * np.sum(np.abs(u.values - v.values) ** 2)))
               for u, v in zip(a.states, b.states))
