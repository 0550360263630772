"""
Command-line entry point: ``mfglab --config run.cfg [--jobs N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure (the trace is
still written), 4 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diagnostics import diagnose, nonexistence_certificate
from .errors import SolverFailure
from .grid import Grid, read_field_csv, write_field_csv
from .hjb import lambda_upper_bound
from .mfg import MFGParams, fixed_point_solve
from .oracles import run_oracle_suite
from .riesz import RieszParams, hls_pairing

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ORACLE = 0, 2, 3, 4

log = logging.getLogger("mfglab")


def _setup_logging() -> None:
    level = os.environ.get("MFGLAB_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def _clean(obj):
    """Make a structure JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    # repr of a Python float is the shortest string that round-trips exactly
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def params_record(p: MFGParams) -> dict:
    return {
        "dim": p.dim, "gamma": p.gamma, "alpha": p.alpha, "mass": p.mass, "cv": p.cv, "b": p.b,
        "half_width": p.grid.half_width, "nodes": p.grid.nodes, "damping": p.damping,
        "schedule": list(p.schedule), "tol": p.tol, "max_iter": p.max_iter, "p_bar": p.p_bar,
        "coupling": p.coupling, "override": p.override, "regime": p.regime,
    }


def write_trace_csv(path: Path, trace: list[dict]) -> None:
    keys = sorted({k for row in trace for k in row})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in trace:
            w.writerow([_fmt(row.get(k)) for k in keys])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


# -- single solve -----------------------------------------------------------------


def solve_bundle(params: MFGParams, out: Path) -> dict:
    """Run one fixed-point solve and write its bundle; returns the summary row."""
    out.mkdir(parents=True, exist_ok=True)
    grid = params.grid
    V = params.potential()
    record = {"params": params_record(params)}
    try:
        sol = fixed_point_solve(params)
    except SolverFailure as exc:
        record.update(status="failed", failure=exc.label, message=str(exc), trace=exc.trace)
        if isinstance(exc.last, np.ndarray) and exc.last.shape == grid.shape:
            write_field_csv(out / "m_last.csv", grid, exc.last)
        write_trace_csv(out / "trace.csv", exc.trace)
        write_json(out / "report.json", record)
        last = exc.trace[-1] if exc.trace else {}
        return {"converged": False, "failure": exc.label, "lambda": last.get("lambda"),
                "E_kin": last.get("E_kin"), "iterations": len(exc.trace)}
    write_field_csv(out / "u.csv", grid, sol.u)
    write_field_csv(out / "m.csv", grid, sol.m)
    write_field_csv(out / "interaction.csv", grid, sol.interaction)
    write_trace_csv(out / "trace.csv", sol.trace)
    rep = diagnose(grid, sol.u, sol.m, sol.lam, params.gamma, params.alpha, params.mass, V,
                   E_kin=sol.E_kin, w=sol.w, interaction=sol.interaction)
    bound = lambda_upper_bound(grid, V, params.gamma)
    record.update(
        status="converged", **{"lambda": sol.lam}, E_kin=sol.E_kin, residual=sol.residual,
        iterations=sol.iterations, k=sol.k, lambda_upper_bound=bound,
        admissible=asdict(sol.admissible) if sol.admissible else None,
        diagnostics=rep.to_dict(), trace=sol.trace,
    )
    write_json(out / "report.json", record)
    return {"converged": True, "failure": "", "lambda": sol.lam, "E_kin": sol.E_kin,
            "iterations": sol.iterations, "residual": sol.residual, "id48": rep.id48,
            "id20": rep.id20, "energy_balance": rep.energy_balance, "certificate": rep.certificate}


# -- sweep --------------------------------------------------------------------------


def _sweep_worker(args):
    cfg, point, out = args
    params = cfg.params(point)
    row = solve_bundle(params, out)
    return {**point, **row, "bundle": out.name}


def mass_threshold(rows: list[dict]) -> dict:
    """Frontier summary of a sweep over the mass alone."""
    pts = sorted((r["mass"], bool(r["converged"])) for r in rows)
    flags = [c for _, c in pts]
    monotone = all(not (not a and b) for a, b in zip(flags, flags[1:]))  # no failure followed by success
    ok = [m for m, c in pts if c]
    bad = [m for m, c in pts if not c]
    rec = {"monotone": monotone, "largest_converged": max(ok) if ok else None,
           "smallest_failed": min(bad) if bad else None}
    if ok and bad and monotone:
        rec["threshold"] = 0.5 * (max(ok) + min(bad))
    else:
        rec["threshold"] = None
    return rec


def run_sweep(cfg: RunConfig, out: Path, jobs: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    points = cfg.sweep_points()
    tasks = [(cfg, p, out / f"point_{i:03d}") for i, p in enumerate(points)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_worker, tasks))
    else:
        rows = [_sweep_worker(t) for t in tasks]
    axes = list(cfg.sweep)
    cols = ["bundle"] + axes + ["converged", "failure", "lambda", "E_kin", "iterations", "residual",
                                "id48", "id20", "energy_balance", "certificate"]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
    summary = {"points": len(rows), "converged": sum(bool(r["converged"]) for r in rows)}
    if axes == ["mass"]:
        summary["mass_threshold"] = mass_threshold(rows)
        print(f"mass frontier: {summary['mass_threshold']}")
    write_json(out / "sweep.json", summary)
    return EXIT_OK


# -- verify / oracle / probe ------------------------------------------------------------


def verify_bundle(path: Path) -> dict:
    rep = json.loads((path / "report.json").read_text())
    if rep.get("status") != "converged":
        return {"bundle": str(path), "status": "skipped (not converged)"}
    p = rep["params"]
    grid_u, u = read_field_csv(path / "u.csv")
    grid_m, m = read_field_csv(path / "m.csv")
    grid = Grid(p["dim"], p["half_width"], p["nodes"])
    if grid_u.shape != grid.shape or grid_m.shape != grid.shape:
        raise ConfigError(f"{path}: fields do not match the recorded grid")
    interaction = None
    if (path / "interaction.csv").exists():
        interaction = read_field_csv(path / "interaction.csv")[1]
    V = p["cv"] * grid.radius ** p["b"] if p["cv"] else np.zeros(grid.shape)
    d = diagnose(grid, u, m, rep["lambda"], p["gamma"], p["alpha"], p["mass"], V, interaction=interaction)
    return {"bundle": str(path), "status": "checked", "diagnostics": d.to_dict()}


def run_verify(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for b in cfg.bundles:
        try:
            results.append(verify_bundle(b))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read bundle {b}: {exc}") from exc
    write_json(out / "verify.json", {"results": results})
    return EXIT_OK


def run_oracles(out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    results = run_oracle_suite()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (threshold {r.threshold:.1e}) {r.detail}")
    write_json(out / "oracle.json", {"results": [asdict(r) for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_ORACLE


def run_probe(cfg: RunConfig, out: Path) -> int:
    """V = 0 run in probing mode; reports the certificate on the final (or last) iterate."""
    params = cfg.params({"cv": 0.0, "override": True})
    out.mkdir(parents=True, exist_ok=True)
    row = solve_bundle(params, out)
    rep = json.loads((out / "report.json").read_text())
    trace = rep.get("trace") or []
    if not trace:
        return EXIT_SOLVER
    grid = params.grid
    if row["converged"]:
        m = read_field_csv(out / "m.csv")[1]
    else:
        m = read_field_csv(out / "m_last.csv")[1] if (out / "m_last.csv").exists() else None
    if m is None:
        return EXIT_SOLVER
    lam = trace[-1]["lambda"]
    D = hls_pairing(m, m, RieszParams(params.alpha, grid))
    cert = nonexistence_certificate(lam, D, params.dim, params.gamma, params.alpha, params.mass)
    rep["probe"] = {"lambda": lam, "D": D, "certificate": cert.status.value, "lhs": cert.lhs,
                    "rhs": cert.rhs, "residual": cert.residual, "converged": row["converged"]}
    write_json(out / "report.json", rep)
    print(f"certificate: {cert.status.value} (lambda={lam:.6g}, D={D:.6g}, converged={row['converged']})")
    return EXIT_OK


def run(cfg: RunConfig, out: Path | None = None, jobs: int = 1) -> int:
    out = out or cfg.output_dir
    if cfg.mode == "solve":
        row = solve_bundle(cfg.params(), out)
        print(f"{'converged' if row['converged'] else 'failed: ' + row['failure']}; lambda={row['lambda']}")
        return EXIT_OK if row["converged"] else EXIT_SOLVER
    if cfg.mode == "sweep":
        return run_sweep(cfg, out, jobs)
    if cfg.mode == "verify":
        return run_verify(cfg, out)
    if cfg.mode == "oracle":
        return run_oracles(out)
    return run_probe(cfg, out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfglab", description="Stationary MFG laboratory with Riesz aggregation.")
    ap.add_argument("--config", required=True, help="key = value run configuration")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent solves in sweep mode (default 1)")
    ap.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return run(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
