"""Conserved quantities, drift monitoring and the E^{l,s} energy norm."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .reports import SweepReport, make_report
from .spectral_core import (Field, SpectralGrid, o_shell_indicator, padded_power,
                            spectrum_to_raw, to_spectrum)

if TYPE_CHECKING:
    from .mbo_solver import Trajectory

EPS_FLOOR = 1e-30


@dataclass(frozen=True)
class ConservedSnapshot:
    t: float
    mass: float | complex
    l2sq: float
    hamiltonian: float | None
    modified_e0: float | None = None
    modified_e01: float | None = None

    def with_energies(self, e0: float, e01: float) -> "ConservedSnapshot":
        return replace(self, modified_e0=e0, modified_e01=e01)


def snapshot_from_raw(grid: SpectralGrid, raw: np.ndarray, t: float, real: bool,
                      focusing: bool = False, quartic: bool = True) -> ConservedSnapshot:
    """Invariants from numpy.fft coefficients of the samples.

    With u_hat = dx * raw (up to a unimodular phase), every integral below is
    an exact Parseval sum; u^4 is integrated through the alias-free square.
    quartic=False gives the Hamiltonian of the linear flow.
    """
    dx, w = grid.dx, grid.freq_weight
    xi = grid.xi_fft
    mass = dx * raw[0]
    l2sq = w * dx**2 * float(np.sum(np.abs(raw) ** 2))
    ham = None
    if real:
        mass = float(mass.real)
        kinetic = 0.5 * w * dx**2 * float(np.sum(np.abs(xi) * np.abs(raw) ** 2))
        ham = kinetic
        if quartic:
            q4 = w * dx**2 * float(np.sum(np.abs(padded_power(raw, 2)) ** 2))
            ham += (q4 if focusing else -q4) / 12.0
    else:
        mass = complex(mass)
    return ConservedSnapshot(float(t), mass, l2sq, ham)


def snapshot(u: Field, t: float = 0.0, focusing: bool = False) -> ConservedSnapshot:
    """Mass, L^2 and (for real fields) the Hamiltonian 1/2 u H u_x -/+ u^4/12."""
    raw = spectrum_to_raw(to_spectrum(u))
    return snapshot_from_raw(u.grid, raw, t, u.reality_hint, focusing)


_QUANTITIES = ("mass", "l2sq", "hamiltonian", "modified_e0", "modified_e01")


def drift_report(tr: "Trajectory") -> SweepReport:
    log = tr.invariant_log
    if not log:
        raise ValueError("trajectory has an empty invariant log")
    rows = []
    max_drift: dict[str, float] = {}
    for q in _QUANTITIES:
        q0 = getattr(log[0], q)
        if q0 is None:
            continue
        denom = max(abs(q0), EPS_FLOOR)
        worst = 0.0
        for snap in log:
            v = getattr(snap, q)
            d = abs(v - q0) / denom
            worst = max(worst, d)
            rows.append((q, snap.t, abs(v) if isinstance(v, complex) else v, d))
        max_drift[q] = worst
    return make_report("drift", ("quantity", "t", "value", "rel_drift"), rows, max_drift=max_drift)


def els_norm(tr: "Trajectory", l: float, s: float) -> float:
    """E^{l,s} norm over the stored snapshots (sup over t in [0, T])."""
    g = tr.states[0].grid
    spectra = [to_spectrum(u).coeffs for u in tr.states]
    xi = g.xi
    w = g.freq_weight
    low = (np.abs(xi) < 1.5) & (xi != 0)
    c0 = spectra[0]
    total = w * float(np.sum(np.abs(xi[low]) ** (2 * l) * np.abs(c0[low]) ** 2))
    k = 1
    while 0.75 * 2.0**k <= g.nyquist:
        mask = o_shell_indicator(k, xi) > 0
        if mask.any():
            best = max(w * float(np.sum(np.abs(c[mask]) ** 2)) for c in spectra)
            total += 2.0 ** (2 * s * k) * best
        k += 1
    return float(np.sqrt(total))
