"""Command-line front end: run a configured solve and emit result files.

Every run writes ``results.json`` (validated by the published schema),
``trace.csv`` (one row per solver iteration of the winning ascent), the
effective configuration echo, and mode-specific extras (``sweep.csv``,
``bench.csv``, ``gaps.csv``).  Failures exit with a machine-readable error
record on stderr: 2 for configuration problems, 3 for solver
non-convergence, 4 for anything unexpected.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
import yaml

import jsonschema

from .config import RunConfig, validate_config
from .errors import ConfigError, NonConvergenceError, OracleBudgetError, OracleCycleError
from .game import GameDefinition
from .hne import check_consistency, nearest_hne, solve_hne
from .oracle import oracle_dse
from .partition import halve_gap
from .scenarios import build_scenario
from .solver import EquilibriumResult, SolverConfig, solve_dse


def load_results_schema() -> Dict:
    """The published schema that every emitted results.json satisfies."""
    from importlib.resources import files

    return json.loads(files("tristack").joinpath("schemas/results.schema.json").read_text())


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _equilibrium_payload(res: EquilibriumResult) -> Dict:
    per_theta = []
    for rec in res.per_theta or ():
        entry = dict(rec)
        entry["theta"] = np.asarray(rec["theta"], dtype=float).tolist()
        per_theta.append(entry)
    return {
        "kind": res.kind,
        "x_star": res.x_star,
        "y_star": res.y_star,
        "z_star": np.asarray(res.z_star, dtype=float).tolist(),
        "theta_star": np.asarray(res.theta_star, dtype=float).tolist(),
        "utility": res.utility,
        "iterations": len(res.trace),
        "flags": list(res.flags),
        "per_theta": per_theta,
    }


def _write_trace(path: Path, res: Optional[EquilibriumResult], n_attackers: int) -> None:
    header = (
        ["k", "x", "y"]
        + [f"z_{i + 1}" for i in range(n_attackers)]
        + [f"s_{i + 1}" for i in range(n_attackers)]
        + ["hypergrad", "utility", "alpha", "sigma"]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if res is None:
            return
        for pt in res.trace:
            writer.writerow(
                [pt.k, repr(pt.x), repr(pt.y)]
                + [repr(v) for v in pt.z]
                + [repr(v) for v in pt.s]
                + [repr(pt.hypergradient), repr(pt.utility), repr(pt.alpha), repr(pt.sigma)]
            )


def _hne_payload(points) -> List[Dict]:
    return [
        {
            "x": p.x, "y": p.y, "z": np.asarray(p.z, dtype=float).tolist(),
            "utility": p.utility, "residual": p.residual, "flags": list(p.flags),
        }
        for p in points
    ]


def _consistency_payload(rep) -> Dict:
    u_dse = rep.dse.utility
    near = rep.matched or nearest_hne(rep.hne, rep.dse.x_star)
    u_hne = near.utility if near is not None else None
    return {
        "dse": _equilibrium_payload(rep.dse),
        "hne": _hne_payload(rep.hne),
        "t1": rep.t1,
        "t2_left": rep.t2_left,
        "t2_right": rep.t2_right,
        "differentiable": rep.differentiable,
        "conditions": dict(rep.conditions),
        "predicted_consistent": rep.predicted_consistent,
        "direct_consistent": rep.direct_consistent,
        "is_consistent": rep.is_consistent,
        "u_dse": u_dse,
        "u_hne": u_hne,
        "gap": abs(u_dse - u_hne) if u_hne is not None else None,
        "notes": list(rep.notes),
        "iterations": len(rep.dse.trace),
    }


def _run_sweep(config: RunConfig, out_dir: Path, results: Dict) -> None:
    name1 = config.sweep["param1"]["name"]
    name2 = config.sweep["param2"]["name"]
    values1 = [float(v) for v in config.sweep["param1"]["values"]]
    values2 = [float(v) for v in config.sweep["param2"]["values"]]

    jobs = [(v1, v2) for v1 in values1 for v2 in values2]

    def cell(args):
        v1, v2 = args
        overrides = dict(config.scenario_params)
        overrides[name1] = v1
        overrides[name2] = v2
        game = build_scenario(config.scenario, overrides)
        rep = check_consistency(game, config.solver)
        near = rep.matched or nearest_hne(rep.hne, rep.dse.x_star)
        u_hne = near.utility if near is not None else None
        return {
            "param1": v1,
            "param2": v2,
            "u_dse": rep.dse.utility,
            "u_hne": u_hne,
            "gap": abs(rep.dse.utility - u_hne) if u_hne is not None else None,
            "is_consistent": rep.is_consistent,
            "predicted_consistent": rep.predicted_consistent,
            "verdicts_agree": (rep.predicted_consistent is None
                               or rep.predicted_consistent == rep.is_consistent),
        }

    workers = config.workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(cell, jobs))
    else:
        cells = [cell(j) for j in jobs]

    results["result"] = {"param1_name": name1, "param2_name": name2,
                         "cells": cells, "iterations": 0}
    with (out_dir / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param1", "param2", "u_dse", "u_hne", "gap", "is_consistent"])
        for c in cells:
            writer.writerow([
                repr(c["param1"]), repr(c["param2"]), repr(c["u_dse"]),
                "" if c["u_hne"] is None else repr(c["u_hne"]),
                "" if c["gap"] is None else repr(c["gap"]),
                "true" if c["is_consistent"] else "false",
            ])


def _run_bench(config: RunConfig, out_dir: Path, results: Dict) -> None:
    from .scenarios import build_random_microgrid

    sizes = [int(n) for n in config.bench["sizes"]]
    seed = int(config.bench["seed"])
    coupling = float(config.bench["coupling_scale"])

    rows = []
    seconds: Dict[str, float] = {}
    for n in sizes:
        t0 = time.perf_counter()
        game = build_random_microgrid(n, seed, coupling)
        res = solve_dse(game, config.solver)
        dt = time.perf_counter() - t0
        seconds[str(n)] = dt
        rows.append({
            "n": n,
            "utility": res.utility,
            "iterations": len(res.trace),
            "converged": "max_outer_reached" not in res.flags,
        })
    results["result"] = {"rows": rows, "iterations": 0}
    results["timing"]["bench_seconds"] = seconds
    with (out_dir / "bench.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "seconds"])
        for n in sizes:
            writer.writerow([n, repr(seconds[str(n)])])


def _run_eps(config: RunConfig, game: GameDefinition, out_dir: Path, results: Dict) -> EquilibriumResult:
    res = solve_dse(game, config.solver)
    results["result"] = _equilibrium_payload(res)

    rows = []
    if config.solver.gaps:
        oracle_res = oracle_dse(game, "weak", config.oracle)
        gaps = [tuple(g) for g in config.solver.gaps]
        res_h = res
        for h in range(config.gap_halvings + 1):
            if h > 0:
                gaps = [halve_gap(game, game.theta_set[0], g) for g in gaps]
                cfg_h = dataclasses.replace(config.solver, gaps=tuple(gaps))
                res_h = solve_dse(game, cfg_h)
            width = max(b - a for a, b in gaps)
            rows.append({
                "width": width,
                "utility": res_h.utility,
                "oracle_utility": oracle_res.utility,
                "utility_gap": abs(oracle_res.utility - res_h.utility),
            })
    else:
        rows.append({
            "width": 0.5 * config.solver.epsilon,
            "utility": res.utility,
            "oracle_utility": None,
            "utility_gap": None,
        })
    results["result"]["gap_rows"] = rows
    with (out_dir / "gaps.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["width", "utility", "oracle_utility", "utility_gap"])
        for r in rows:
            writer.writerow([
                repr(r["width"]), repr(r["utility"]),
                "" if r["oracle_utility"] is None else repr(r["oracle_utility"]),
                "" if r["utility_gap"] is None else repr(r["utility_gap"]),
            ])
    return res


def run(config: RunConfig) -> Path:
    """Execute one configured run; returns the output directory."""
    t0 = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: Dict = {
        "schema_version": 1,
        "mode": config.mode,
        "scenario": config.scenario,
        "config": config.effective(),
        "flags": [],
        "timing": {},
    }

    overrides = dict(config.scenario_params)
    if config.scenario == "random_microgrid":
        overrides.setdefault("seed", config.seed)
    game = build_scenario(config.scenario, overrides)
    trace_res: Optional[EquilibriumResult] = None

    if config.mode in ("wdse", "sdse"):
        res = solve_dse(game, config.solver)
        results["result"] = _equilibrium_payload(res)
        results["flags"] = list(res.flags)
        trace_res = res
    elif config.mode == "eps_wdse":
        res = _run_eps(config, game, out_dir, results)
        results["flags"] = list(res.flags)
        trace_res = res
    elif config.mode == "oracle":
        res = oracle_dse(game, config.solver.mode, config.oracle)
        results["result"] = _equilibrium_payload(res)
        results["flags"] = list(res.flags)
    elif config.mode == "hne":
        points = solve_hne(game, None, config.solver)
        results["result"] = {"equilibria": _hne_payload(points),
                             "count": len(points), "iterations": 0}
        results["flags"] = sorted({f for p in points for f in p.flags})
    elif config.mode == "consistency":
        rep = check_consistency(game, config.solver)
        results["result"] = _consistency_payload(rep)
        results["flags"] = list(rep.flags)
        trace_res = rep.dse
    elif config.mode == "sweep":
        _run_sweep(config, out_dir, results)
    elif config.mode == "bench":
        _run_bench(config, out_dir, results)
    else:  # pragma: no cover - schema rejects unknown modes
        raise ConfigError([f"unknown mode {config.mode!r}"])

    _write_trace(out_dir / "trace.csv", trace_res, game.n_attackers)
    if trace_res is not None and "iterations" not in results["result"]:
        results["result"]["iterations"] = len(trace_res.trace)

    results["timing"]["wall_seconds"] = time.perf_counter() - t0
    payload = _jsonify(results)
    jsonschema.validate(payload, load_results_schema())
    with (out_dir / "results.json").open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    with (out_dir / "config.effective.yaml").open("w") as fh:
        yaml.safe_dump(_jsonify(config.effective()), fh, sort_keys=True)
    return out_dir


def _apply_mode_override(config: RunConfig, mode: str) -> RunConfig:
    """Re-target a validated config at a different mode, re-checking the
    mode-specific requirements."""
    if mode == config.mode:
        return config
    solver = config.solver
    if mode == "eps_wdse" and solver.epsilon <= 0:
        raise ConfigError(["mode eps_wdse requires epsilon > 0"])
    if mode == "sweep" and config.sweep is None:
        raise ConfigError(["mode sweep requires a sweep section"])
    new_mode = {"sdse": "strong"}.get(mode, "weak")
    if mode != "eps_wdse" and (solver.epsilon > 0 or solver.gaps is not None):
        solver = dataclasses.replace(solver, epsilon=0.0, gaps=None, mode=new_mode)
    elif solver.mode != new_mode:
        solver = dataclasses.replace(solver, mode=new_mode)
    return dataclasses.replace(config, mode=mode, solver=solver)


def _fail(code: int, kind: str, message: str, errors: Optional[List[str]] = None) -> None:
    record = {"error": {"type": kind, "message": message}}
    if errors:
        record["error"]["errors"] = list(errors)
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Deception-game equilibrium solver."""


@main.command("solve")
@click.option("--config", "config_path", required=True,
              type=click.Path(dir_okay=False), help="YAML run configuration.")
@click.option("--mode", "mode", default=None,
              type=click.Choice(["wdse", "sdse", "eps_wdse", "hne", "consistency",
                                 "oracle", "sweep", "bench"]),
              help="Override the configured mode.")
@click.option("--out", "out", default=None, type=click.Path(file_okay=False),
              help="Override the output directory.")
@click.option("--seed", "seed", default=None, type=int, help="Override the seed.")
@click.option("--workers", "workers", default=None, type=int,
              help="Worker pool size for sweep/bench.")
def solve(config_path: str, mode: Optional[str], out: Optional[str],
          seed: Optional[int], workers: Optional[int]) -> None:
    """Run the solve described by a config file and write its outputs."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(2, "config_error", f"cannot read config: {exc}")
    try:
        rc = validate_config(text)
        if mode is not None:
            rc = _apply_mode_override(rc, mode)
    except ConfigError as exc:
        _fail(2, "config_error", str(exc), exc.errors)

    out = out or os.environ.get("TRISTACK_OUT") or rc.output_dir
    env_workers = os.environ.get("TRISTACK_WORKERS")
    if workers is None and env_workers is not None:
        try:
            workers = int(env_workers)
        except ValueError:
            _fail(2, "config_error", f"TRISTACK_WORKERS must be an integer, got {env_workers!r}")
    if workers is not None and workers < 1:
        _fail(2, "config_error", "workers must be at least 1")

    rc = dataclasses.replace(
        rc,
        output_dir=out,
        seed=rc.seed if seed is None else seed,
        workers=workers if workers is not None else rc.workers,
    )
    try:
        out_dir = run(rc)
    except ConfigError as exc:
        _fail(2, "config_error", str(exc), exc.errors)
    except (NonConvergenceError, OracleBudgetError, OracleCycleError) as exc:
        _fail(3, "non_convergence", str(exc))
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        _fail(4, "internal_error", f"{type(exc).__name__}: {exc}")
    click.echo(f"wrote {out_dir / 'results.json'}")


if __name__ == "__main__":
    main()
