"""Tabular sweep results with deterministic CSV/JSON serialization."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats


def fmt(v: Any) -> str:
    """Stable text form: floats as shortest round-trip repr."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float
    n: int

    def as_dict(self) -> dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": self.n}


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Fit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return Fit(float("nan"), float("nan"), float("nan"), int(x.size))
    r = stats.linregress(x, y)
    return Fit(float(r.slope), float(r.intercept), float(r.rvalue**2), int(x.size))


@dataclass(frozen=True)
class SweepReport:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    fits: dict[str, Fit] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row {r!r} does not match columns {self.columns!r}")

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self, trailer: str | None = None) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(fmt(v) for v in r) + "\n")
        if trailer:
            buf.write(f"# {trailer}\n")
        return buf.getvalue()

    def summary_dict(self) -> dict[str, Any]:
        return jsonable({
            "name": self.name,
            "rows": len(self.rows),
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
            "summary": self.summary,
        })

    def to_json(self) -> str:
        return json.dumps(self.summary_dict(), indent=2, sort_keys=True) + "\n"


def make_report(name: str, columns: Iterable[str], rows: Iterable[Sequence],
                fits: dict[str, Fit] | None = None, **summary: Any) -> SweepReport:
    return SweepReport(name, tuple(columns), tuple(tuple(r) for r in rows), dict(fits or {}), dict(summary))
