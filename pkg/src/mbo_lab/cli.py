"""Batch entry point: validate a JSON config, run one experiment, write CSV + JSON.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 cost-guard refusal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .energy_method import cancellation_experiment, make_symbol, modified_energy, r4, r6
from .errors import ConfigError, CostGuardError, DivergenceError, MboLabError
from .estimates_lab import (ExperimentSpec, apriori_experiment, counterexample_trilinear,
                            counterexample_xsb, dispersive_sweep, scaling_check,
                            symmetric_estimate_sweep)
from .invariants import drift_report
from .mbo_solver import SolverConfig, picard_solve, solve, sup_l2_distance
from .reports import SweepReport, jsonable, make_report
from .spectral_core import field_from_function, to_spectrum

COMMANDS = ("simulate", "conservation", "picard", "modified-energy", "divergence", "xsb",
            "estimates", "dispersive", "apriori", "scaling")
SOLVER_COMMANDS = {"simulate", "conservation", "picard", "modified-energy", "apriori", "scaling"}

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_COST = 0, 2, 3, 4

PROFILES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gaussian": lambda x: np.exp(-x**2),
    "cos": np.cos,
    "sech": lambda x: 1.0 / np.cosh(x),
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_list = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        # solver
        "n": {"type": "integer", "minimum": 8},
        "period_scale": _pos,
        "dt": _pos,
        "T": _pos,
        "integrator": {"enum": ["etdrk4", "ifrk4"]},
        "dealias_pad": {"type": "number", "minimum": 2},
        "snapshot_stride": {"type": "integer", "minimum": 1},
        "focusing": {"type": "boolean"},
        # initial data
        "profile": {"enum": sorted(PROFILES)},
        "amplitude": _num,
        # experiments
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "iterations": {"type": "integer", "minimum": 2},
        "s": {"type": "number", "minimum": 0},
        "epsilon": _pos,
        "mode": {"enum": ["values", "cancellation"]},
        "quantities": {"type": "array", "items": {"enum": ["E0", "E1", "R4", "R6"]}, "minItems": 1},
        "amplitudes": _pos_list,
        "k_values": _int_list,
        "N_list": _int_list,
        "n_configs": {"type": "integer", "minimum": 1},
        "resolution": {"type": "integer", "minimum": 2},
        "part": {"enum": ["a", "b", "c", "d"]},
        "kind": {"enum": ["strichartz", "smoothing", "maximal"]},
        "lambda": _pos,
        "tolerance": _pos,
        "options": {"type": "object"},
    },
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "_solver": {"period_scale": 16.0, "integrator": "etdrk4", "dealias_pad": 2.0,
                "snapshot_stride": 10, "focusing": False, "profile": "gaussian", "amplitude": 0.5},
    "simulate": {},
    "conservation": {"tolerance": 1e-6},
    "picard": {"iterations": 6},
    "modified-energy": {"s": 0.3, "epsilon": 0.1, "mode": "values", "quantities": ["E0", "E1", "R4"],
                        "amplitudes": [0.1, 0.2, 0.4]},
    "divergence": {"k_values": list(range(6, 15)), "resolution": 6, "options": {}},
    "xsb": {"N_list": [64, 256, 1024], "resolution": 6, "options": {}},
    "estimates": {"part": "a", "k_values": [4, 6, 8, 10, 12], "n_configs": 50, "resolution": 8, "options": {}},
    "dispersive": {"kind": "smoothing", "k_values": list(range(2, 9)), "T": 1.0, "resolution": 6, "options": {}},
    "apriori": {"s": 0.3, "amplitudes": [0.1]},
    "scaling": {"lambda": 2.0},
}

REQUIRED = {c: ("n", "dt", "T") for c in SOLVER_COMMANDS}


def validate_config(command: str, raw: dict[str, Any]) -> dict[str, Any]:
    """Schema-check ``raw`` for ``command``; return it merged with defaults.

    All problems are collected before raising, so one run reports every bad key.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", key="<root>")
    errors: list[str] = []
    for err in sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.path)):
        where = ".".join(str(p) for p in err.path) or "<root>"
        errors.append(f"{where}: {err.message}")
    for key in REQUIRED.get(command, ()):
        if key not in raw:
            errors.append(f"{key}: required for '{command}'")
    n = raw.get("n")
    if isinstance(n, int) and not isinstance(n, bool) and (n < 1 or n & (n - 1)):
        errors.append(f"n: grid size must be a power of two (got {n})")
    if command in SOLVER_COMMANDS and isinstance(raw.get("dt"), (int, float)) and isinstance(raw.get("T"), (int, float)):
        if raw["dt"] > 0 and raw["T"] > 0:
            steps = raw["T"] / raw["dt"]
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                errors.append(f"dt: T/dt = {steps} is not an integer")
    if errors:
        keys = [e.split(":", 1)[0] for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors), key=",".join(keys))
    resolved: dict[str, Any] = {}
    if command in SOLVER_COMMANDS:
        resolved.update(DEFAULTS["_solver"])
    resolved.update(DEFAULTS[command])
    resolved.update(raw)
    resolved.pop("seed", None)
    return resolved


def _solver_config(c: dict[str, Any]) -> SolverConfig:
    names = {f.name for f in fields(SolverConfig)}
    return SolverConfig(**{k: v for k, v in c.items() if k in names})


def _initial(c: dict[str, Any], cfg: SolverConfig):
    fn = PROFILES[c["profile"]]
    amp = float(c["amplitude"])
    return field_from_function(cfg.grid, lambda x: amp * fn(x), real=True)


def _spec(name: str, c: dict[str, Any], seed: int, threads: int) -> ExperimentSpec:
    keys = {"k_values", "N_list", "amplitudes", "n_configs", "resolution", "s", "T"}
    return ExperimentSpec(name, seed=seed, threads=threads, options=dict(c.get("options", {})),
                          **{k: c[k] for k in keys if k in c})


# ---------------------------------------------------------------------------
# commands: each returns (csv body, report summary, checks)

def _run_simulate(c, seed, threads):
    cfg = _solver_config(c)
    tr = solve(_initial(c, cfg), cfg)
    rep = drift_report(tr)
    return tr.to_csv(), rep.summary_dict(), {}


def _run_conservation(c, seed, threads):
    cfg = _solver_config(c)
    rep = drift_report(solve(_initial(c, cfg), cfg))
    tol = float(c["tolerance"])
    checks = {f"{q}_drift_le_{tol:g}": d <= tol for q, d in rep.summary["max_drift"].items()}
    return rep.to_csv(), rep.summary_dict(), checks


def _run_picard(c, seed, threads):
    cfg = _solver_config(c)
    u0 = _initial(c, cfg)
    iterates, res = picard_solve(u0, cfg, int(c["iterations"]))
    gap = sup_l2_distance(iterates[-1], solve(u0, cfg))
    ratios = [float("nan")] + [b / a if a > 0 else 0.0 for a, b in zip(res, res[1:])]
    rows = [(i + 1, r, q) for i, (r, q) in enumerate(zip(res, ratios))]
    rep = make_report("picard", ("iteration", "residual_h_half", "ratio"), rows, gap_to_solve=gap)
    checks = {"residual_ratios_le_half": all(q <= 0.5 for q in ratios[1:]),
              "limit_matches_solve_1e-6": gap <= 1e-6}
    return rep.to_csv(), rep.summary_dict(), checks


def _run_modified_energy(c, seed, threads):
    cfg = _solver_config(c)
    sym = make_symbol(float(c["s"]), float(c["epsilon"]))
    if c["mode"] == "cancellation":
        er = cancellation_experiment(c["amplitudes"], cfg, sym, PROFILES[c["profile"]])
        rep = er.to_report()
        checks = {"slope_e0_4_pm_0.5": abs(er.slope_e0 - 4) <= 0.5,
                  "slope_e01_6_pm_0.5": abs(er.slope_e01 - 6) <= 0.5}
        return rep.to_csv(), rep.summary_dict(), checks
    sp = to_spectrum(_initial(c, cfg))
    fns = {"E0": lambda: modified_energy(sp, sym, "E0"),
           "E1": lambda: modified_energy(sp, sym, "E1", focusing=cfg.focusing),
           "R4": lambda: r4(sp, sym, focusing=cfg.focusing),
           "R6": lambda: r6(sp, sym)}
    rows = [(q, fns[q]()) for q in c["quantities"]]
    rep = make_report("modified-energy", ("quantity", "value"), rows)
    return rep.to_csv(), rep.summary_dict(), {}


def _sweep(fn) -> Callable:
    def run(c, seed, threads):
        rep: SweepReport = fn(c, seed, threads)
        return rep.to_csv(), rep.summary_dict(), {"passes": bool(rep.summary.get("passes", False))}
    return run


def _run_apriori(c, seed, threads):
    cfg = _solver_config(c)
    rep = apriori_experiment(float(c["s"]), c["amplitudes"], cfg, PROFILES[c["profile"]])
    return rep.to_csv(), rep.summary_dict(), {"C_emp_le_2": rep.summary["max_C_emp"] <= 2}


def _run_scaling(c, seed, threads):
    cfg = _solver_config(c)
    rep = scaling_check(float(c["lambda"]), cfg, _initial(c, cfg))
    checks = {"l2_invariant_1e-12": rep.summary["l2_rel_error"] <= 1e-12,
              "trajectory_discrepancy_le_1e-6": rep.summary["discrepancy"] <= 1e-6}
    return rep.to_csv(), rep.summary_dict(), checks


RUNNERS: dict[str, Callable] = {
    "simulate": _run_simulate,
    "conservation": _run_conservation,
    "picard": _run_picard,
    "modified-energy": _run_modified_energy,
    "divergence": _sweep(lambda c, seed, th: counterexample_trilinear(_spec("divergence", c, seed, th))),
    "xsb": _sweep(lambda c, seed, th: counterexample_xsb(_spec("xsb", c, seed, th))),
    "estimates": _sweep(lambda c, seed, th: symmetric_estimate_sweep(c["part"], _spec("estimates", c, seed, th))),
    "dispersive": _sweep(lambda c, seed, th: dispersive_sweep(c["kind"], _spec("dispersive", c, seed, th))),
    "apriori": _run_apriori,
    "scaling": _run_scaling,
}


def config_digest(command: str, resolved: dict[str, Any], seed: int) -> str:
    blob = json.dumps({"command": command, "config": jsonable(resolved), "seed": seed},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def dispatch(command: str, raw: dict[str, Any], out: Path, seed: int | None = None,
             threads: int = 1, quiet: bool = False) -> int:
    """Validate, run and write ``<command>.csv`` and ``<command>.summary.json``."""
    try:
        resolved = validate_config(command, raw)
        seed = int(raw.get("seed", 0) if seed is None else seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
        if threads < 1:
            raise ConfigError("threads must be >= 1", key="threads")
        if not quiet:
            print("resolved configuration:", json.dumps(jsonable(resolved), sort_keys=True), file=sys.stderr)
        body, summary, checks = RUNNERS[command](resolved, seed, threads)
    except DivergenceError as e:
        print(f"error: numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CostGuardError as e:
        print(f"error: refused by cost guard: {e}", file=sys.stderr)
        return EXIT_COST
    except (MboLabError, ValueError) as e:
        key = getattr(e, "key", None)
        print(f"error: {e}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return EXIT_CONFIG
    digest = config_digest(command, resolved, seed)
    out.mkdir(parents=True, exist_ok=True)
    csv = body + f"# mbo_lab {__version__} config={digest}\n"
    doc = {"command": command, "version": __version__, "seed": seed, "config": resolved,
           "config_sha256": digest, "report": summary, "checks": checks,
           "all_checks_pass": all(checks.values())}
    (out / f"{command}.csv").write_text(csv)
    (out / f"{command}.summary.json").write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")
    if not quiet:
        print(f"{command}: wrote {out / (command + '.csv')}")
        for name, ok in checks.items():
            print(f"  {'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("MBO_LAB_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MBO_LAB_THREADS must be an integer (got {env!r})", key="MBO_LAB_THREADS")
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbo-lab", description="Numerical experiments for u_t + H u_xx = u^2 u_x.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (created if absent)")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (default: $MBO_LAB_THREADS or 1)")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _threads(args.threads)
        raw: dict[str, Any] = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}", key="--config")
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}", key="--config")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return dispatch(args.command, raw, args.out, args.seed, threads, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
