"""Modified energies for the I-method.

Normalizations follow spectral_core: with L the period length, the pairing
(A(D)u, u) is (1/L) sum a|u_hat|^2 and a sum over the lattice hyperplane
xi_1 + ... + xi_k = 0 carries L^{-(k-1)}.  For the defocusing flow

    d/dt E0 = R4,    R4 = -(1/6) L^{-3} sum i (sum_j xi_j a(xi_j)) prod u_hat(xi_j)
    E1 = L^{-3} sum b4 prod u_hat,    b4 = (1/6) (sum xi_j a(xi_j)) / (sum omega(xi_j))
    d/dt (E0 + E1) = R6.

All lattice sums run over the symmetric band |m| < n/2, which is exactly the
set of modes the solver evolves, so the identities hold for the semi-discrete
flow and not just in the continuum limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import roots_legendre

from .errors import ConfigError, CostGuardError, DomainError
from .mbo_solver import SolverConfig, Trajectory, iterate_raw
from .reports import SweepReport, linear_fit, make_report
from .spectral_core import CUTOFFS, Field, Spectrum, padded_power, raw_to_spectrum, spectrum_to_raw

THETA = 1e-6
R6_MAX_N = 32
_GL8 = roots_legendre(8)
_GL4 = roots_legendre(4)

ResonantValue = Literal["zero", "limit"]


# ---------------------------------------------------------------------------
# symbols

@dataclass(frozen=True, eq=False)
class SymbolS:
    """Even symbol a(xi) > 0 of order s (window epsilon), optionally high-passed.

    ``evaluator`` is the base symbol; None means (1 + xi^2)^s, whose derivatives
    are analytic.  Custom evaluators get derivatives by central differences,
    which limits the accuracy of the stable b4 branch to roughly 1e-8.
    """

    s: float
    epsilon: float
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    high_pass: bool = True

    def base(self, xi, nu: int = 0) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.evaluator is None:
            s = self.s
            w = 1.0 + xi**2
            if nu == 0:
                return w**s
            if nu == 1:
                return 2 * s * xi * w ** (s - 1)
            return 2 * s * w ** (s - 1) + 4 * s * (s - 1) * xi**2 * w ** (s - 2)
        f = lambda z: np.asarray(self.evaluator(z), dtype=float)
        if nu == 0:
            return f(xi)
        h = 1e-3 * np.maximum(1.0, np.abs(xi))
        if nu == 1:
            return (8 * (f(xi + h) - f(xi - h)) - (f(xi + 2 * h) - f(xi - 2 * h))) / (12 * h)
        return (16 * (f(xi + h) + f(xi - h)) - (f(xi + 2 * h) + f(xi - 2 * h)) - 30 * f(xi)) / (12 * h**2)

    def __call__(self, xi, nu: int = 0) -> np.ndarray:
        """a(xi) and its first two derivatives."""
        if not self.high_pass:
            return self.base(xi, nu)
        hp = [1.0 - CUTOFFS.eta0(xi), -CUTOFFS.eta0(xi, 1), -CUTOFFS.eta0(xi, 2)]
        b = [self.base(xi, i) for i in range(nu + 1)]
        if nu == 0:
            return b[0] * hp[0]
        if nu == 1:
            return b[1] * hp[0] + b[0] * hp[1]
        return b[2] * hp[0] + 2 * b[1] * hp[1] + b[0] * hp[2]

    def g(self, xi, nu: int = 0) -> np.ndarray:
        """g = xi a(xi) and its derivatives; g is odd."""
        xi = np.asarray(xi, dtype=float)
        if nu == 0:
            return xi * self(xi)
        if nu == 1:
            return self(xi) + xi * self(xi, 1)
        return 2 * self(xi, 1) + xi * self(xi, 2)


def _check_symbol(sym: SymbolS) -> None:
    grid = np.concatenate([[0.0], np.logspace(-3, 6, 400)])
    a_pos = sym.base(grid)
    a_neg = sym.base(-grid)
    if not np.all(np.isfinite(a_pos)) or np.any(a_pos <= 0):
        raise ConfigError("symbol must be finite and positive", key="evaluator")
    if not np.allclose(a_pos, a_neg, rtol=1e-12, atol=0):
        raise ConfigError("symbol must be even", key="evaluator")
    c_reg = 2.0 * sym.s + 2.0
    slope = np.abs(sym.base(grid, 1)) * np.sqrt(1.0 + grid**2)
    if np.any(slope > c_reg * a_pos * (1 + 1e-6)):
        raise ConfigError("symbol fails |a'| <= C a (1+xi^2)^(-1/2)", key="evaluator")
    far = grid >= 8.0
    ratio = np.log(a_pos[far]) / np.log1p(grid[far] ** 2)
    tol = 1e-12
    if np.any(ratio < sym.s - tol) or np.any(ratio > sym.s + sym.epsilon + tol):
        raise ConfigError("symbol leaves the growth window [s, s+epsilon] for |xi| >= 8", key="evaluator")


def make_symbol(s: float, epsilon: float = 0.1, high_pass: bool = True,
                evaluator: Callable[[np.ndarray], np.ndarray] | None = None) -> SymbolS:
    if s < 0:
        raise ConfigError("s must be nonnegative", key="s")
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive", key="epsilon")
    sym = SymbolS(float(s), float(epsilon), evaluator, bool(high_pass))
    _check_symbol(sym)
    return sym


# ---------------------------------------------------------------------------
# b4

def _gl_mean(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
             rule=_GL8) -> np.ndarray:
    z, w = rule
    pts = lo[..., None] + 0.5 * (hi - lo)[..., None] * (z + 1.0)
    return 0.5 * np.sum(f(pts) * w, axis=-1)


def _divided_difference(sym: SymbolS, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = y - x
    short = np.abs(d) < 1e-2 * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))
    out = np.empty_like(d)
    if short.any():
        out[short] = _gl_mean(lambda t: sym.g(t, 1), x[short], y[short])
    lng = ~short
    if lng.any():
        out[lng] = (sym.g(y[lng]) - sym.g(x[lng])) / d[lng]
    return out


def _parallelogram_mean(sym: SymbolS, a: np.ndarray, s1: np.ndarray, h: np.ndarray,
                        mu: np.ndarray) -> np.ndarray:
    """Mean of g'' over {a + u + t : u in [0, s1], t in [0, h]} (signed sides)."""
    swap = np.abs(h) > np.abs(s1)
    lng = np.where(swap, h, s1)
    sht = np.where(swap, s1, h)
    out = np.empty_like(a)
    ftc = np.abs(lng) >= 1e-4 * mu
    if ftc.any():
        aa, L, S = a[ftc], lng[ftc], sht[ftc]
        out[ftc] = _gl_mean(lambda t: sym.g(t + L[:, None], 1) - sym.g(t, 1), aa, aa + S) / L
    tiny = ~ftc
    if tiny.any():
        aa, L, S = a[tiny], lng[tiny], sht[tiny]
        inner = lambda t: _gl_mean(lambda u: sym.g(u, 2), t, t + L[:, None], _GL4)
        out[tiny] = _gl_mean(inner, aa, aa + S, _GL4)
    return out


def b4_eval(xi1, xi2, xi3, xi4, a: SymbolS, resonant_value: ResonantValue = "zero"):
    """Quartic multiplier (1/6) sum g / sum omega on the hyperplane, g = xi a(xi).

    Near the singular set the quotient is replaced by an exact rewrite as a
    mean of g'' (two positive and two negative entries) or as a difference
    of divided differences of g (one entry of the minority sign).  On exact
    resonances both numerator and denominator vanish; ``resonant_value``
    selects 0 (default) or the continuous extension.
    """
    x = np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in (xi1, xi2, xi3, xi4)]), axis=-1)
    scalar = x.ndim == 1
    x = np.sort(x.reshape(-1, 4), axis=-1)
    mu = np.max(np.abs(x), axis=-1)
    if np.any(np.abs(x.sum(axis=-1)) > 1e-9 * mu):
        raise DomainError("b4 needs xi1 + xi2 + xi3 + xi4 = 0")
    neg = np.sum(x < 0, axis=-1)
    flip = neg == 3
    x[flip] = -x[flip][:, ::-1]
    neg = np.where(flip, 1, neg)
    out = np.zeros(len(x))
    limit = resonant_value == "limit"
    if resonant_value not in ("zero", "limit"):
        raise ConfigError(f"unknown resonant_value {resonant_value!r}", key="resonant_value")

    # two negative, two nonnegative: sum omega = 2 (x1 + x3)(x1 + x4)
    A = neg == 2
    if A.any():
        y, m = x[A], mu[A]
        s1 = y[:, 2] + y[:, 0]
        h = y[:, 3] + y[:, 0]
        den = 2.0 * s1 * h
        res = np.zeros(len(y))
        direct = (np.abs(den) >= THETA * m**2) & (den != 0)
        res[direct] = np.sum(a.g(y[direct]), axis=-1) / (6.0 * den[direct])
        stable = ~direct & (limit | ((s1 != 0) & (h != 0)))
        if stable.any():
            res[stable] = -_parallelogram_mean(a, -y[stable, 0], s1[stable], h[stable], m[stable]) / 12.0
        out[A] = res

    # one negative entry: sum omega = 2 (pq + r(p+q))
    B = neg == 1
    if B.any():
        y, m = x[B], mu[B]
        p, q, r = y[:, 1], y[:, 2], y[:, 3]
        sig = p + q
        den = 2.0 * (p * q + r * sig)
        res = np.zeros(len(y))
        direct = (np.abs(den) >= THETA * m**2) & (den != 0)
        res[direct] = np.sum(a.g(y[direct]), axis=-1) / (6.0 * den[direct])
        stable = ~direct & (limit | (sig != 0)) & (r != 0)
        if stable.any():
            pp, qq, rr, ss = p[stable], q[stable], r[stable], sig[stable]
            q1 = _divided_difference(a, -pp, qq)
            q2 = _divided_difference(a, rr, -y[stable, 0])
            corr = np.where(ss > 0, pp * qq / np.where(ss > 0, ss, 1.0), 0.0)
            res[stable] = (q1 - q2) / (12.0 * (rr + corr))
        out[B] = res
    return float(out[0]) if scalar else out.reshape(np.broadcast_shapes(*[np.shape(v) for v in (xi1, xi2, xi3, xi4)]))


# ---------------------------------------------------------------------------
# lattice sums

@dataclass(frozen=True)
class _Gamma4Kernel:
    band: np.ndarray   # mode numbers |m| < n/2
    idx: np.ndarray    # (4, K) indices into band with m1+m2+m3+m4 = 0
    b4: np.ndarray
    gsum: np.ndarray   # sum_j g(xi_j)


@lru_cache(maxsize=16)
def _kernel(n: int, period_scale: float, sym: SymbolS, resonant_value: str) -> _Gamma4Kernel:
    h = n // 2
    band = np.arange(-h + 1, h)
    nb = len(band)
    i1, i2, i3 = np.meshgrid(np.arange(nb), np.arange(nb), np.arange(nb), indexing="ij")
    i1, i2, i3 = i1.ravel(), i2.ravel(), i3.ravel()
    m4 = -(band[i1] + band[i2] + band[i3])
    keep = np.abs(m4) < h
    i1, i2, i3 = i1[keep], i2[keep], i3[keep]
    i4 = m4[keep] + h - 1
    xi = band / period_scale
    b4 = b4_eval(xi[i1], xi[i2], xi[i3], xi[i4], sym, resonant_value)
    gb = sym.g(xi)
    gsum = gb[i1] + gb[i2] + gb[i3] + gb[i4]
    return _Gamma4Kernel(band, np.stack([i1, i2, i3, i4]), b4, gsum)


def _band_coeffs(s: Spectrum) -> np.ndarray:
    g = s.grid
    return s.coeffs[np.abs(g.modes) < g.n // 2]


def _out(v: complex, return_complex: bool):
    return complex(v) if return_complex else float(np.real(v))


def modified_energy(s: Spectrum, a: SymbolS, order: Literal["E0", "E1"] = "E0",
                    focusing: bool = False, resonant_value: ResonantValue = "zero",
                    return_complex: bool = False):
    g = s.grid
    L = g.length
    if order == "E0":
        v = np.sum(a(g.xi) * np.abs(s.coeffs) ** 2) / L
        return _out(v, return_complex)
    if order != "E1":
        raise ConfigError(f"unknown order {order!r}", key="order")
    ker = _kernel(g.n, g.period_scale, a, resonant_value)
    c = _band_coeffs(s)
    i = ker.idx
    v = np.sum(ker.b4 * c[i[0]] * c[i[1]] * c[i[2]] * c[i[3]]) / L**3
    return _out(-v if focusing else v, return_complex)


def r4(s: Spectrum, a: SymbolS, focusing: bool = False, return_complex: bool = False):
    g = s.grid
    ker = _kernel(g.n, g.period_scale, a, "zero")
    c = _band_coeffs(s)
    i = ker.idx
    v = -(1j / 6.0) * np.sum(ker.gsum * c[i[0]] * c[i[1]] * c[i[2]] * c[i[3]]) / g.length**3
    return _out(-v if focusing else v, return_complex)


def _triple_convolution(s: Spectrum) -> np.ndarray:
    """C3(sigma) = sum_{a+b+c=sigma} u_hat u_hat u_hat on the band."""
    g = s.grid
    raw = spectrum_to_raw(s)
    raw[g.n // 2] = 0.0
    cube = raw_to_spectrum(g, padded_power(raw, 3)).coeffs
    return g.length**2 * cube[np.abs(g.modes) < g.n // 2]


def r6(s: Spectrum, a: SymbolS, resonant_value: ResonantValue = "zero",
       return_complex: bool = False):
    """Sextic remainder (4i/3) L^{-5} sum_sigma T(sigma) sigma C3(sigma).

    T(sigma) collects b4(xi1, xi2, xi3, sigma) u_hat^3 over xi1+xi2+xi3 = -sigma.
    The sign is the same for the focusing flow (b4 and the nonlinearity both flip).
    """
    g = s.grid
    if g.n > R6_MAX_N:
        raise CostGuardError(f"r6 is limited to n <= {R6_MAX_N} (got n = {g.n})")
    ker = _kernel(g.n, g.period_scale, a, resonant_value)
    c = _band_coeffs(s)
    i = ker.idx
    w = ker.b4 * c[i[0]] * c[i[1]] * c[i[2]]
    nb = len(c)
    T = np.bincount(i[3], w.real, nb) + 1j * np.bincount(i[3], w.imag, nb)
    sigma = ker.band / g.period_scale
    v = (4j / 3.0) * np.sum(T * sigma * _triple_convolution(s)) / g.length**5
    return _out(v, return_complex)


def r6_bruteforce(s: Spectrum, a: SymbolS, resonant_value: ResonantValue = "zero") -> complex:
    """Direct sextuple lattice sum; test oracle for small n only."""
    g = s.grid
    h = g.n // 2
    band = np.arange(-h + 1, h)
    c = _band_coeffs(s)
    xi = band / g.period_scale
    idx = np.array(np.meshgrid(*[np.arange(len(band))] * 5, indexing="ij")).reshape(5, -1)
    m6 = -band[idx].sum(axis=0)
    keep = np.abs(m6) < h
    idx = idx[:, keep]
    i6 = m6[keep] + h - 1
    m456 = band[idx[3]] + band[idx[4]] + m6[keep]
    inband = np.abs(m456) < h
    idx, i6, m456 = idx[:, inband], i6[inband], m456[inband]
    sig = m456 / g.period_scale
    b = b4_eval(xi[idx[0]], xi[idx[1]], xi[idx[2]], sig, a, resonant_value)
    prod = c[idx[0]] * c[idx[1]] * c[idx[2]] * c[idx[3]] * c[idx[4]] * c[i6]
    return complex((4j / 3.0) * np.sum(b * sig * prod) / g.length**5)


def annotate(tr: Trajectory, a: SymbolS, focusing: bool = False) -> Trajectory:
    """Fill modified_e0 / modified_e01 in the invariant log."""
    from .spectral_core import to_spectrum
    log = []
    for u, snap in zip(tr.states, tr.invariant_log):
        sp = to_spectrum(u)
        e0 = modified_energy(sp, a, "E0")
        e1 = modified_energy(sp, a, "E1", focusing=focusing)
        log.append(snap.with_energies(e0, e0 + e1))
    return Trajectory(tr.times, tr.states, tuple(log))


# ---------------------------------------------------------------------------
# cancellation experiment

@dataclass(frozen=True)
class EnergyReport:
    amplitudes: tuple[float, ...]
    drift_e0: tuple[float, ...]
    drift_e01: tuple[float, ...]
    slope_e0: float
    slope_e01: float

    def __post_init__(self) -> None:
        if any(d < 0 for d in self.drift_e0 + self.drift_e01):
            raise ValueError("drifts must be nonnegative")

    def to_report(self) -> SweepReport:
        rows = list(zip(self.amplitudes, self.drift_e0, self.drift_e01))
        return make_report("modified-energy", ("amplitude", "drift_e0", "drift_e01"), rows,
                           slope_e0=self.slope_e0, slope_e01=self.slope_e01)


def default_profile(x: np.ndarray) -> np.ndarray:
    return np.exp(-x**2)


def cancellation_experiment(amplitudes: Sequence[float], cfg: SolverConfig, a: SymbolS,
                            profile: Callable[[np.ndarray], np.ndarray] = default_profile
                            ) -> EnergyReport:
    """Max |E0(t) - E0(0)| and |(E0+E1)(t) - (E0+E1)(0)| over snapshot times.

    Drifts are absolute: E0 moves at order amplitude^4 and E0 + E1 at
    order amplitude^6, which is what the fitted log-log slopes expose.
    """
    amps = [float(v) for v in amplitudes]
    if not amps or any(v <= 0 for v in amps):
        raise ConfigError("amplitudes must be positive", key="amplitudes")
    g = cfg.grid
    d0, d01 = [], []
    for amp in amps:
        u0 = Field(g, amp * np.asarray(profile(g.x), dtype=float), reality_hint=True)
        first = None
        w0 = w01 = 0.0
        for i, t, c in iterate_raw(u0, cfg):
            if i % cfg.snapshot_stride and i != cfg.n_steps:
                continue
            sp = raw_to_spectrum(g, c)
            e0 = modified_energy(sp, a, "E0")
            e01 = e0 + modified_energy(sp, a, "E1", focusing=cfg.focusing)
            if first is None:
                first = (e0, e01)
            w0 = max(w0, abs(e0 - first[0]))
            w01 = max(w01, abs(e01 - first[1]))
        d0.append(w0)
        d01.append(w01)
    la = np.log(amps)
    f0 = linear_fit(la, np.log(np.maximum(d0, 1e-300)))
    f01 = linear_fit(la, np.log(np.maximum(d01, 1e-300)))
    return EnergyReport(tuple(amps), tuple(d0), tuple(d01), f0.slope, f01.slope)
