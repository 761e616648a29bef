"""Frequency/modulation space machinery in sharp coordinates (xi, mu = tau - omega(xi)).

Dyadic blocks are separable: amplitude * phi(xi) * psi(mu) with one-dimensional
profiles carrying their own smoothness breakpoints, so every quadrature rule
here is composite Gauss-Legendre on pieces where the integrand is smooth.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import optimize
from scipy.special import roots_legendre

from .errors import ConfigError, CostGuardError, SupportError
from .mbo_solver import Trajectory, omega
from .spectral_core import CUTOFFS, to_spectrum

MAX_TENSOR_NODES = 10**9
ShellFamily = Literal["tilde", "homogeneous"]
MuFamily = Literal["slice", "cumulative"]

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    return _GL_CACHE[n]


def composite_rule(breaks: Sequence[float], n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre on each [breaks[i], breaks[i+1]]."""
    b = np.asarray(breaks, dtype=float)
    z, w = gauss_legendre(n)
    lo, hi = b[:-1, None], b[1:, None]
    x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * z
    return x.ravel(), (0.5 * (hi - lo) * w).ravel()


def resonance(xi1, xi2, xi3):
    """Omega = omega(xi1) + omega(xi2) + omega(xi3) - omega(xi1 + xi2 + xi3)."""
    xi1, xi2, xi3 = (np.asarray(v, dtype=float) for v in (xi1, xi2, xi3))
    out = omega(xi1) + omega(xi2) + omega(xi3) - omega(xi1 + xi2 + xi3)
    return float(out) if out.ndim == 0 else out


def beta(k: int, j: int) -> float:
    if j < 0:
        raise ConfigError("modulation index j must be >= 0", key="j")
    return 1.0 + 2.0 ** ((j - 2 * k) / 2.0)


def shell_intervals(k: int, family: ShellFamily = "tilde") -> tuple[tuple[float, float], ...]:
    """I_k = {|xi| in [2^(k-1), 2^(k+1)]}; the tilde family replaces k = 0 by [-2, 2]."""
    if family == "tilde":
        if k < 0:
            raise ConfigError("tilde shells need k >= 0", key="k")
        if k == 0:
            return ((-2.0, 2.0),)
    elif family != "homogeneous":
        raise ConfigError(f"unknown shell family {family!r}", key="shell")
    lo, hi = 2.0 ** (k - 1), 2.0 ** (k + 1)
    return ((-hi, -lo), (lo, hi))


def modulation_intervals(j: int, family: MuFamily = "slice") -> tuple[tuple[float, float], ...]:
    if j < 0:
        raise ConfigError("modulation index j must be >= 0", key="j")
    if family == "cumulative":
        return ((-(2.0 ** (j + 1)), 2.0 ** (j + 1)),)
    if family != "slice":
        raise ConfigError(f"unknown modulation family {family!r}", key="mu_family")
    return shell_intervals(j, "tilde")


def _pieces_within(pieces, intervals, rtol: float = 1e-12) -> bool:
    def ok(lo, hi):
        return any(a - rtol * max(1.0, abs(a)) <= lo and hi <= b + rtol * max(1.0, abs(b)) for a, b in intervals)
    return all(ok(lo, hi) for lo, hi in pieces)


def _inside(intervals, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
    m = np.zeros(np.shape(x), dtype=bool)
    for lo, hi in intervals:
        m |= (x >= lo - tol) & (x <= hi + tol)
    return m


# ---------------------------------------------------------------------------
# profiles and blocks

@dataclass(frozen=True, eq=False)
class Profile1D:
    """Function on the line, smooth on each piece and zero off the pieces."""

    pieces: tuple[tuple[float, float], ...]
    fn: Callable[[np.ndarray], np.ndarray]
    kind: Literal["indicator", "smooth", "custom"] = "custom"

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ConfigError("profile needs at least one piece")
        if any(hi < lo for lo, hi in self.pieces):
            raise ConfigError("profile pieces must satisfy lo <= hi")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(_inside(self.pieces, x), self.fn(x), 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return min(p[0] for p in self.pieces), max(p[1] for p in self.pieces)

    def rule(self, n: int, extra_breaks: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        xs, ws = [], []
        for lo, hi in self.pieces:
            b = sorted({lo, hi, *[e for e in extra_breaks if lo < e < hi]})
            if hi > lo:
                x, w = composite_rule(b, n)
                xs.append(x)
                ws.append(w)
        if not xs:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(xs), np.concatenate(ws)

    def l2sq(self, n: int = 32) -> float:
        x, w = self.rule(n)
        return float(np.sum(w * np.abs(self.fn(x)) ** 2))


def _ones(x: np.ndarray) -> np.ndarray:
    return np.ones_like(np.asarray(x, dtype=float))


def indicator_profile(*intervals: tuple[float, float]) -> Profile1D:
    return Profile1D(tuple((float(a), float(b)) for a, b in intervals), _ones, "indicator")


def eta_profile(j: int) -> Profile1D:
    """The smooth dyadic cutoff eta_j (eta_0 for j = 0), split at its breakpoints."""
    bp = CUTOFFS.breakpoints(j, "eta")
    if j == 0:
        p, e = bp[1], bp[2]
        pieces = ((-e, -p), (-p, p), (p, e))
    else:
        pts = bp
        pos = tuple(zip(pts[:-1], pts[1:]))
        pieces = tuple((-b, -a) for a, b in reversed(pos)) + pos
    return Profile1D(pieces, lambda x, j=j: CUTOFFS.eta(j, x), "smooth")


@dataclass(frozen=True, eq=False)
class BlockFunction2D:
    """amplitude * xi_profile(xi) * mu_profile(mu) in sharp coordinates."""

    k: int
    j: int
    xi_profile: Profile1D
    mu_profile: Profile1D
    amplitude: float = 1.0
    shell: ShellFamily = "homogeneous"
    mu_family: MuFamily = "cumulative"
    resolution: int = 16

    def __post_init__(self) -> None:
        if self.resolution < 4:
            raise ConfigError("block resolution must be >= 4 nodes per piece", key="resolution")
        if not _pieces_within(self.xi_profile.pieces, shell_intervals(self.k, self.shell)):
            raise SupportError(f"xi support leaves shell k={self.k} ({self.shell})")
        if not _pieces_within(self.mu_profile.pieces, modulation_intervals(self.j, self.mu_family)):
            raise SupportError(f"mu support leaves modulation shell j={self.j} ({self.mu_family})")

    @property
    def support_box(self) -> tuple[float, float, float, float]:
        return (*self.xi_profile.support, *self.mu_profile.support)

    @property
    def is_indicator(self) -> bool:
        return self.xi_profile.kind == "indicator" and self.mu_profile.kind == "indicator"

    def evaluate(self, xi, mu) -> np.ndarray:
        return self.amplitude * self.xi_profile(xi) * self.mu_profile(mu)

    __call__ = evaluate

    @cached_property
    def _rules(self):
        return self.xi_profile.rule(self.resolution), self.mu_profile.rule(self.resolution)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tensor nodes (xi, mu) and weights over the support pieces."""
        (x, wx), (m, wm) = self._rules
        X, M = np.meshgrid(x, m, indexing="ij")
        return X.ravel(), M.ravel(), np.outer(wx, wm).ravel()

    def node_values(self) -> np.ndarray:
        (x, _), (m, _) = self._rules
        return self.amplitude * np.outer(self.xi_profile.fn(x), self.mu_profile.fn(m)).ravel()

    def l2_norm(self) -> float:
        return abs(self.amplitude) * float(np.sqrt(self.xi_profile.l2sq(self.resolution)
                                                   * self.mu_profile.l2sq(self.resolution)))


def make_block(k: int, j: int, profile: Literal["indicator", "smooth_eta", "custom"] = "indicator",
               resolution: int = 16, *, xi_profile: Profile1D | None = None,
               mu_profile: Profile1D | None = None, xi_range: tuple[float, float] | None = None,
               mu_range: tuple[float, float] | None = None, shell: ShellFamily = "tilde",
               mu_family: MuFamily = "slice", amplitude: float = 1.0) -> BlockFunction2D:
    """Block on the shell k and modulation shell j.

    ``indicator`` uses indicators of the shells (or of the given sub-ranges);
    ``smooth_eta`` uses eta_k(xi) eta_j(mu); ``custom`` takes explicit profiles.
    """
    if resolution < 16:
        raise ConfigError("make_block needs resolution >= 16", key="resolution")
    if profile == "indicator":
        xp = indicator_profile(xi_range) if xi_range else indicator_profile(*shell_intervals(k, shell))
        mp = indicator_profile(mu_range) if mu_range else indicator_profile(*modulation_intervals(j, mu_family))
    elif profile == "smooth_eta":
        xp = eta_profile(k)
        mp = eta_profile(j)
    elif profile == "custom":
        if xi_profile is None or mu_profile is None:
            raise ConfigError("custom blocks need xi_profile and mu_profile", key="profile")
        xp, mp = xi_profile, mu_profile
    else:
        raise ConfigError(f"unknown profile {profile!r}", key="profile")
    return BlockFunction2D(k, j, xp, mp, float(amplitude), shell, mu_family, resolution)


# ---------------------------------------------------------------------------
# modulation norms

@dataclass(frozen=True)
class SampledSpectrum:
    """Samples f(xi_m, tau_l) on a uniform tensor grid (xi and tau ascending)."""

    xi: np.ndarray
    tau: np.ndarray
    values: np.ndarray      # shape (len(xi), len(tau))

    @property
    def cell(self) -> float:
        return float((self.xi[1] - self.xi[0]) * (self.tau[1] - self.tau[0]))

    def to_csv(self, trailer: str | None = None) -> str:
        buf = io.StringIO()
        buf.write("xi,tau,re,im\n")
        for a, x in enumerate(self.xi):
            for b, t in enumerate(self.tau):
                v = self.values[a, b]
                buf.write(f"{float(x)!r},{float(t)!r},{float(v.real)!r},{float(v.imag)!r}\n")
        if trailer:
            buf.write(f"# {trailer}\n")
        return buf.getvalue()


def _modulation_slices(j_max: int) -> range:
    return range(0, j_max + 1)


def dyadic_modulation_norm(f: BlockFunction2D | SampledSpectrum, k: int,
                           kind: Literal["Xk", "Bk"] = "Xk", shell: ShellFamily = "tilde",
                           check_support: bool = True, support_tol: float = 1e-12) -> float:
    """sum_j 2^{j/2} [beta_{k,j}] ||eta_j(mu) f||_{L^2}.

    Bk uses the homogeneous shell I_k and no beta weight.  Slices are summed
    until eta_j no longer meets the support of f.
    """
    if kind not in ("Xk", "Bk"):
        raise ConfigError(f"unknown norm kind {kind!r}", key="kind")
    fam: ShellFamily = "homogeneous" if kind == "Bk" else shell
    shells = shell_intervals(k, fam)
    if isinstance(f, BlockFunction2D):
        if check_support and not _pieces_within(f.xi_profile.pieces, shells):
            raise SupportError(f"block is not supported in the shell k={k} ({fam})")
        xi_sq = f.xi_profile.l2sq(f.resolution)
        mu_lo, mu_hi = f.mu_profile.support
        top = max(abs(mu_lo), abs(mu_hi))
        j_max = max(0, int(np.ceil(np.log2(max(top, 1.0) / 0.625))) + 1)
        total = 0.0
        for j in _modulation_slices(j_max):
            breaks = [s * b for b in CUTOFFS.breakpoints(j, "eta") for s in (-1, 1)]
            m, w = f.mu_profile.rule(f.resolution, breaks)
            sq = np.sum(w * (CUTOFFS.eta(j, m) * f.mu_profile.fn(m)) ** 2)
            weight = 2.0 ** (j / 2) * (beta(k, j) if kind == "Xk" else 1.0)
            total += weight * abs(f.amplitude) * np.sqrt(xi_sq * sq)
        return float(total)
    # sampled data
    X, T = np.meshgrid(f.xi, f.tau, indexing="ij")
    vals = np.asarray(f.values)
    if check_support:
        scale = np.max(np.abs(vals)) if vals.size else 0.0
        outside = ~_inside(shells, X)
        if scale > 0 and np.max(np.abs(vals[outside]), initial=0.0) > support_tol * scale:
            raise SupportError(f"sampled data is not supported in the shell k={k} ({fam})")
    mu = T - omega(X)
    top = float(np.max(np.abs(mu))) if mu.size else 0.0
    j_max = max(0, int(np.ceil(np.log2(max(top, 1.0) / 0.625))) + 1)
    total = 0.0
    for j in _modulation_slices(j_max):
        sq = f.cell * np.sum(np.abs(CUTOFFS.eta(j, mu) * vals) ** 2)
        total += 2.0 ** (j / 2) * (beta(k, j) if kind == "Xk" else 1.0) * np.sqrt(sq)
    return float(total)


# ---------------------------------------------------------------------------
# the quadrilinear functional J

def j_functional(f1: BlockFunction2D, f2: BlockFunction2D, f3: BlockFunction2D,
                 f4: BlockFunction2D, method: Literal["auto", "tensor", "separable"] = "auto",
                 resolution: int | None = None) -> float:
    """|J(f1, f2, f3, f4)| with f4 evaluated at (xi1+xi2+xi3, mu1+mu2+mu3+Omega).

    ``tensor`` is a 6-D product rule over the blocks' own quadratures;
    ``separable`` (chosen automatically for indicator blocks) integrates the
    modulation variables in closed form and the frequencies piecewise.
    """
    blocks = (f1, f2, f3, f4)
    if method == "auto":
        method = "separable" if all(b.is_indicator for b in blocks) else "tensor"
    if method == "separable":
        return j_functional_separable(*blocks, resolution=resolution)
    if method != "tensor":
        raise ConfigError(f"unknown method {method!r}", key="method")
    q = [b.quadrature() for b in blocks[:3]]
    sizes = [len(x[0]) for x in q]
    if int(np.prod(sizes, dtype=float)) > MAX_TENSOR_NODES:
        raise CostGuardError(f"tensor rule needs {np.prod(sizes, dtype=float):.3g} nodes (limit 1e9)")
    vals = [b.node_values() * qq[2] for b, qq in zip(blocks[:3], q)]
    x2, m2 = q[1][0][:, None], q[1][1][:, None]
    x3, m3 = q[2][0][None, :], q[2][1][None, :]
    w23 = vals[1][:, None] * vals[2][None, :]
    nz1 = np.nonzero(vals[0])[0]
    total = 0.0
    for i in nz1:
        x1, m1 = q[0][0][i], q[0][1][i]
        s = x1 + x2 + x3
        om = omega(x1) + omega(x2) + omega(x3) - omega(s)
        total += vals[0][i] * np.sum(w23 * f4.evaluate(s, m1 + m2 + m3 + om))
    return float(abs(total))


def _seg(a, b, c, d):
    return np.maximum(0.0, np.minimum(b, d) - np.maximum(a, c))


class _ModulationKernel:
    """K(c) = |{mu in M1 x M2 x M3 : mu1 + mu2 + mu3 + c in M4}|.

    Written as int P12(nu) Q(nu + c) dnu with two trapezoids, integrated
    exactly by 2-point Gauss-Legendre between their joint breakpoints.  This
    avoids the cancellation of the truncated-power formula when the four
    interval widths differ by many orders of magnitude.
    """

    def __init__(self, M: Sequence[tuple[float, float]]):
        (c1, d1), (c2, d2), (c3, d3), (c4, d4) = M
        self.M = M
        self.p_breaks = np.array(sorted([c1 + c2, c1 + d2, d1 + c2, d1 + d2]))
        self.q_breaks = np.array(sorted([c4 - d3, c4 - c3, d4 - d3, d4 - c3]))
        self.kinks = np.unique((self.q_breaks[:, None] - self.p_breaks[None, :]).ravel())
        self.lo = self.kinks[0]
        self.hi = self.kinks[-1]

    def __call__(self, c: np.ndarray) -> np.ndarray:
        (c1, d1), (c2, d2), (c3, d3), (c4, d4) = self.M
        c = np.asarray(c, dtype=float)
        shape = c.shape
        c = c.ravel()
        pts = np.concatenate([np.broadcast_to(self.p_breaks, (len(c), 4)),
                              self.q_breaks[None, :] - c[:, None]], axis=1)
        pts = np.clip(np.sort(pts, axis=1), self.p_breaks[0], self.p_breaks[-1])
        lo, hi = pts[:, :-1], pts[:, 1:]
        z, w = gauss_legendre(2)
        nu = 0.5 * (lo + hi)[..., None] + 0.5 * (hi - lo)[..., None] * z
        p = _seg(c1, d1, nu - d2, nu - c2)
        y = nu + c[:, None, None]
        q = _seg(c3, d3, c4 - y, d4 - y)
        out = np.sum(p * q * w * 0.5 * (hi - lo)[..., None], axis=(1, 2))
        return out.reshape(shape)


def _quadratic_roots(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real roots of a x^2 + b x + c (NaN where absent); a may be 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = a == 0
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        qq = -0.5 * (b + np.copysign(sq, b))
        r1 = np.where(lin, -c / b, qq / a)
        r2 = np.where(lin, np.nan, c / qq)
    return r1, r2


def _inner_xi3(S: np.ndarray, C: np.ndarray, x3lo: np.ndarray, x3hi: np.ndarray,
               K: _ModulationKernel) -> np.ndarray:
    """int_{x3lo}^{x3hi} K(C + omega(x) - omega(S + x)) dx, exact piecewise."""
    n = len(S)
    valid = x3hi > x3lo
    out = np.zeros(n)
    if not valid.any():
        return out
    S, C, lo, hi = S[valid], C[valid], x3lo[valid], x3hi[valid]
    m = len(S)
    cuts = np.stack([lo, hi, np.clip(0.0, lo, hi), np.clip(-S, lo, hi)], axis=1)
    cuts = np.sort(cuts, axis=1)
    z4, w4 = gauss_legendre(4)
    total = np.zeros(m)
    for piece in range(3):
        a0, a1 = cuts[:, piece], cuts[:, piece + 1]
        mid = 0.5 * (a0 + a1)
        s3 = np.where(mid >= 0, 1.0, -1.0)
        s4 = np.where(S + mid >= 0, 1.0, -1.0)
        # Omega(x) = C + s4 S^2 + 2 s4 S x + (s4 - s3) x^2 on this piece
        qa = (s4 - s3)[:, None]
        qb = (2 * s4 * S)[:, None]
        qc = (C + s4 * S * S)[:, None] - K.kinks[None, :]
        with np.errstate(invalid="ignore"):
            r1, r2 = _quadratic_roots(np.broadcast_to(qa, qc.shape), np.broadcast_to(qb, qc.shape), qc)
        pts = np.concatenate([a0[:, None], a1[:, None], r1, r2], axis=1)
        pts = np.where(np.isfinite(pts), pts, a0[:, None])
        pts = np.sort(np.clip(pts, a0[:, None], a1[:, None]), axis=1)
        sl, sh = pts[:, :-1], pts[:, 1:]
        x = 0.5 * (sl + sh)[..., None] + 0.5 * (sh - sl)[..., None] * z4
        om = C[:, None, None] + omega(x) - omega(S[:, None, None] + x)
        total += np.sum(K(om) * w4 * 0.5 * (sh - sl)[..., None], axis=(1, 2))
    out[valid] = total
    return out


def _single_interval(p: Profile1D) -> list[tuple[float, float]]:
    return [(lo, hi) for lo, hi in p.pieces if hi > lo]


def j_functional_separable(f1: BlockFunction2D, f2: BlockFunction2D, f3: BlockFunction2D,
                           f4: BlockFunction2D, resolution: int | None = None,
                           chunk: int = 256) -> float:
    """J for indicator blocks (unions of intervals are handled piece by piece)."""
    blocks = (f1, f2, f3, f4)
    if not all(b.is_indicator for b in blocks):
        raise ConfigError("separable J needs indicator blocks; use method='tensor'", key="method")
    n = int(resolution or min(b.resolution for b in blocks))
    amp = float(np.prod([b.amplitude for b in blocks]))
    if amp == 0.0:
        return 0.0
    total = 0.0
    xi_sets = [_single_interval(b.xi_profile) for b in blocks]
    mu_sets = [_single_interval(b.mu_profile) for b in blocks]
    for M in itertools.product(*mu_sets):
        K = _ModulationKernel(M)
        for X in itertools.product(*xi_sets):
            total += _j_boxes(X, K, n, chunk)
    return float(abs(amp * total))


def _range_on(fn, lo: np.ndarray, hi: np.ndarray, cands: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """min/max of a piecewise quadratic whose pieces and vertices are all in cands."""
    pts = np.stack([lo, hi, *[np.clip(c, lo, hi) for c in cands]], axis=-1)
    v = fn(pts)
    return v.min(axis=-1), v.max(axis=-1)


def _c_range(S, lo, hi):
    # C(x1) = omega(x1) + omega(S - x1): pieces split at 0 and S, vertex at S/2
    f = lambda x: omega(x) + omega(S[..., None] - x)
    return _range_on(f, lo, hi, (np.zeros_like(S), S, 0.5 * S))


def _d_range(S, lo, hi):
    # D(x3) = omega(x3) - omega(S + x3): pieces split at 0 and -S, vertex at -S/2
    f = lambda x: omega(x) - omega(S[..., None] + x)
    return _range_on(f, lo, hi, (np.zeros_like(S), -S, -0.5 * S))


def _support_cuts(f, lo: float, hi: float, samples: int = 4097) -> list[float]:
    """Sign changes of f on [lo, hi], located by bisection on a sampled grid."""
    x = np.linspace(lo, hi, samples)
    v = f(x)
    out = []
    for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        out.append(optimize.brentq(lambda t: float(f(np.array([t]))[0]), x[i], x[i + 1], xtol=1e-13 * max(1.0, abs(x[i]))))
    return out


def _c_level_roots(S: np.ndarray, target: np.ndarray) -> list[np.ndarray]:
    """Solutions x1 of omega(x1) + omega(S - x1) = target, per sign pattern."""
    out = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            # -s1 x^2 - s2 (S - x)^2 = target
            r1, r2 = _quadratic_roots(np.full_like(S, -(s1 + s2)), 2 * s2 * S, -s2 * S * S - target)
            for r in (r1, r2):
                ok = np.isfinite(r) & (np.sign(r) != -s1) & (np.sign(S - r) != -s2)
                out.append(np.where(ok, r, np.nan))
    return out


def _j_boxes(X: Sequence[tuple[float, float]], K: _ModulationKernel, n: int, chunk: int) -> float:
    (a1, b1), (a2, b2), (a3, b3), (a4, b4) = X
    s_lo = max(a1 + a2, a4 - b3)
    s_hi = min(b1 + b2, b4 - a3)
    if s_hi <= s_lo:
        return 0.0

    # Omega = C(x1) + D(x3) for fixed S; the integrand vanishes unless its
    # range meets the kernel support (K.lo, K.hi)
    def omega_range(S):
        S = np.asarray(S, dtype=float)
        c = _c_range(S, np.maximum(a1, S - b2), np.minimum(b1, S - a2))
        d = _d_range(S, np.maximum(a3, a4 - S), np.minimum(b3, b4 - S))
        return c[0] + d[0], c[1] + d[1]

    cand = [a1 + a2, a1 + b2, b1 + a2, b1 + b2, a4 - b3, a4 - a3, b4 - b3, b4 - a3,
            -a3, -b3, a4, b4, a1, b1, a2, b2, 2 * a1, 2 * b1, 2 * a2, 2 * b2, 0.0]
    cand += _support_cuts(lambda S: omega_range(S)[1] - K.lo, s_lo, s_hi)
    cand += _support_cuts(lambda S: omega_range(S)[0] - K.hi, s_lo, s_hi)
    breaks = np.array(sorted({s_lo, s_hi, *[c for c in cand if s_lo < c < s_hi]}))
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    lo_m, hi_m = omega_range(mids)
    live = (hi_m > K.lo) & (lo_m < K.hi)
    if not live.any():
        return 0.0
    z, w = gauss_legendre(n)
    pl, ph = breaks[:-1][live], breaks[1:][live]
    S = (0.5 * (pl + ph)[:, None] + 0.5 * (ph - pl)[:, None] * z).ravel()
    wS = (0.5 * (ph - pl)[:, None] * w).ravel()
    x1lo = np.maximum(a1, S - b2)
    x1hi = np.maximum(np.minimum(b1, S - a2), x1lo)
    x3lo = np.maximum(a3, a4 - S)
    x3hi = np.minimum(b3, b4 - S)
    dmin, dmax = _d_range(S, x3lo, np.maximum(x3hi, x3lo))
    extra = _c_level_roots(S, K.lo - dmax) + _c_level_roots(S, K.hi - dmin)
    cuts = np.stack([x1lo, x1hi, np.clip(0.0, x1lo, x1hi), np.clip(S, x1lo, x1hi),
                     np.clip(0.5 * S, x1lo, x1hi)]
                    + [np.clip(np.where(np.isfinite(r), r, x1lo), x1lo, x1hi) for r in extra], axis=1)
    cuts = np.sort(cuts, axis=1)
    lo, hi = cuts[:, :-1], cuts[:, 1:]
    # drop x1 panels on which C + [dmin, dmax] misses the kernel support
    cmid = omega(0.5 * (lo + hi)) + omega(S[:, None] - 0.5 * (lo + hi))
    dead = (cmid + dmax[:, None] <= K.lo) | (cmid + dmin[:, None] >= K.hi)
    X1 = 0.5 * (lo + hi)[..., None] + 0.5 * (hi - lo)[..., None] * z
    W = np.where(dead[..., None], 0.0, wS[:, None, None] * 0.5 * (hi - lo)[..., None] * w)
    Sb = np.broadcast_to(S[:, None, None], X1.shape)
    flatS, flatX1 = Sb.ravel(), X1.ravel()
    flatW = W.ravel()
    keep = flatW > 0
    flatS, flatX1, flatW = flatS[keep], flatX1[keep], flatW[keep]
    lo3 = np.broadcast_to(x3lo[:, None, None], X1.shape).ravel()[keep]
    hi3 = np.broadcast_to(x3hi[:, None, None], X1.shape).ravel()[keep]
    C = omega(flatX1) + omega(flatS - flatX1)
    acc = 0.0
    for i in range(0, len(flatS), chunk):
        sl = slice(i, i + chunk)
        acc += float(np.sum(flatW[sl] * _inner_xi3(flatS[sl], C[sl], lo3[sl], hi3[sl], K)))
    return acc


# ---------------------------------------------------------------------------
# space-time spectra

def _window(kind: str, m: int) -> np.ndarray:
    if kind == "hann":
        return np.hanning(m)
    if kind == "eta0":
        s = np.linspace(-1.0, 1.0, m)
        return CUTOFFS.eta0(1.6 * s)
    raise ConfigError(f"unknown window {kind!r}", key="window")


def spacetime_spectrum(tr: Trajectory, window: Literal["hann", "eta0"] = "hann") -> SampledSpectrum:
    """Windowed transform int int e^{-ix xi - it tau} w(t) u(x, t) dx dt on the snapshot lattice.

    Parseval: dx dt sum |w u|^2 = (1/L)(1/(M dt)) sum |F|^2 exactly.
    """
    times = np.asarray(tr.times)
    m = len(times)
    if m < 64:
        raise ConfigError(f"space-time spectrum needs >= 64 snapshots, got {m}", key="snapshot_stride")
    dts = np.diff(times)
    dt = float(dts[0])
    if np.max(np.abs(dts - dt)) > 1e-9 * dt:
        raise ConfigError("snapshot times must be uniform", key="snapshot_stride")
    w = _window(window, m)
    spec = np.stack([to_spectrum(u).coeffs for u in tr.states])            # (m, n): over xi
    data = spec * w[:, None]
    ft = np.fft.fft(data, axis=0) * dt
    tau = 2 * np.pi * np.fft.fftfreq(m, d=dt)
    ft *= np.exp(-1j * tau * times[0])[:, None]
    order = np.argsort(tau, kind="stable")
    return SampledSpectrum(tr.grid.xi.copy(), tau[order], ft[order].T.copy())


def windowed_l2sq(tr: Trajectory, window: Literal["hann", "eta0"] = "hann") -> float:
    times = np.asarray(tr.times)
    w = _window(window, len(times))
    dt = float(times[1] - times[0])
    vals = np.stack([u.values for u in tr.states])
    return float(tr.grid.dx * dt * np.sum(np.abs(vals * w[:, None]) ** 2))
