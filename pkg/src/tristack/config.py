"""Run configuration: YAML ingestion, validation, and the effective echo.

A run is described by a single YAML document.  Validation is aggregated —
every structural problem, every semantic rule violation, and every unknown
key is reported at once, each anchored to the config line where the key
appears when that can be determined.  The validated result is a frozen
``RunConfig`` whose solver/oracle sections are fully defaulted, so the
effective configuration can be echoed back verbatim for reproducibility.
"""

from __future__ import annotations

import dataclasses
import re
from typing import Dict, List, Optional, Tuple

import jsonschema
import yaml

from .errors import ConfigError, DomainError
from .oracle import OracleGrid
from .scenarios import available_scenarios
from .solver import SolverConfig

MODES = ("wdse", "sdse", "eps_wdse", "hne", "consistency", "oracle", "sweep", "bench")

#: scenario parameter names accepted per scenario (None = any numeric field)
_SCENARIO_PARAMS: Dict[str, Tuple[str, ...]] = {
    "wireless": ("n", "h_rd0", "h_ed", "eta_noise", "d1", "d3", "d4", "d2",
                 "x_max", "y_min", "y_max", "z_max", "theta_set", "cert_x_lo",
                 "est_samples", "est_seed"),
    "microgrid": ("n", "big_l", "lambda_loss", "alpha_amp", "v_base", "beta",
                  "delta_cost", "g_off", "x_max", "y_min", "y_max", "z_max",
                  "theta_set"),
    "random_microgrid": ("n", "seed", "coupling_scale"),
    "robustness": (),
    "nonexistence": (),
}

_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_ORACLE_FIELDS = {f.name: f for f in dataclasses.fields(OracleGrid)}

_NUMBER = {"type": "number"}
_POS_NUMBER = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "mode"],
    "properties": {
        "scenario": {"type": "string"},
        "scenario_params": {"type": "object"},
        "mode": {"type": "string", "enum": list(MODES)},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"type": "string", "enum": ["weak", "strong"]},
                "alpha0": _POS_NUMBER,
                "p": _NUMBER,
                "sigma_c": _POS_NUMBER,
                "r": _POS_NUMBER,
                "max_outer": _POS_INT,
                "x_tol": _POS_NUMBER,
                "x_tol_window": _POS_INT,
                "x_inits": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "zero_width": _POS_NUMBER,
                "y_grid": {"type": "integer", "minimum": 2},
                "grid_m": {"type": "integer", "minimum": 2},
                "max_zeros": _POS_INT,
                "boundary_tol": _POS_NUMBER,
                "inner_cap": _POS_INT,
                "polish_iters": {"type": "integer", "minimum": 0},
                "rho": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_br_rounds": _POS_INT,
                "t1_tol": _POS_NUMBER,
                "diff_tol": _POS_NUMBER,
                "nbhd_fraction": _POS_NUMBER,
                "n_nbhd_samples": _POS_INT,
                "fd_step": _POS_NUMBER,
                "hne_match_tol": _POS_NUMBER,
                "hne_multistart": _POS_INT,
                "dev_grid": _POS_NUMBER,
                "dev_tol": _POS_NUMBER,
                "y_frozen": {"type": ["number", "null"]},
            },
        },
        "epsilon": {"type": "number", "minimum": 0},
        "gaps": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
            "minItems": 1,
        },
        "gap_halvings": {"type": "integer", "minimum": 0},
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer", "minimum": 2},
                "ny": {"type": "integer", "minimum": 2},
                "nz": {"type": "integer", "minimum": 2},
                "refine_rounds": {"type": "integer", "minimum": 0},
                "budget": _POS_INT,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["param1", "param2"],
            "properties": {
                "param1": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["name", "values"],
                    "properties": {
                        "name": {"type": "string"},
                        "values": {"type": "array", "items": _NUMBER, "minItems": 1},
                    },
                },
                "param2": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["name", "values"],
                    "properties": {
                        "name": {"type": "string"},
                        "values": {"type": "array", "items": _NUMBER, "minItems": 1},
                    },
                },
            },
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "seed": {"type": "integer"},
                "coupling_scale": {"type": "number", "minimum": 0},
            },
        },
        "out": {"type": "string"},
        "seed": {"type": "integer"},
        "workers": _POS_INT,
    },
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """One fully validated, fully defaulted run description."""

    scenario: str
    mode: str
    solver: SolverConfig
    oracle: OracleGrid
    scenario_params: Dict = dataclasses.field(default_factory=dict)
    gap_halvings: int = 3
    sweep: Optional[Dict] = None
    bench: Dict = dataclasses.field(default_factory=dict)
    output_dir: str = "./out"
    seed: int = 0
    workers: Optional[int] = None

    def effective(self) -> Dict:
        """The configuration with every default filled in, as plain data."""
        solver = dataclasses.asdict(self.solver)
        if solver["x_inits"] is not None:
            solver["x_inits"] = list(solver["x_inits"])
        if solver["gaps"] is not None:
            solver["gaps"] = [list(g) for g in solver["gaps"]]
        return {
            "scenario": self.scenario,
            "scenario_params": dict(self.scenario_params),
            "mode": self.mode,
            "solver": solver,
            "oracle": dataclasses.asdict(self.oracle),
            "gap_halvings": self.gap_halvings,
            "sweep": self.sweep,
            "bench": dict(self.bench),
            "out": self.output_dir,
            "seed": self.seed,
            "workers": self.workers,
        }


def _line_anchors(text: str) -> Dict[Tuple[str, ...], int]:
    """Map config key paths to 1-based line numbers (two nesting levels)."""
    anchors: Dict[Tuple[str, ...], int] = {}
    stack: List[Tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        m = re.match(r"^(\s*)([A-Za-z_][\w]*)\s*:", raw)
        if not m:
            continue
        indent = len(m.group(1))
        key = m.group(2)
        while stack and stack[-1][0] >= indent:
            stack.pop()
        stack.append((indent, key))
        anchors[tuple(k for _, k in stack)] = lineno
    return anchors


def _anchored(anchors: Dict[Tuple[str, ...], int], path: Tuple[str, ...], message: str) -> str:
    probe = tuple(str(p) for p in path if not isinstance(p, int))
    while probe:
        if probe in anchors:
            loc = ".".join(str(p) for p in path) if path else "config"
            return f"line {anchors[probe]}: {loc}: {message}"
        probe = probe[:-1]
    loc = ".".join(str(p) for p in path) if path else "config"
    return f"{loc}: {message}"


def validate_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration.

    All problems are collected and raised together as a ConfigError whose
    ``errors`` list holds one line-anchored message per problem.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{where}not parseable as YAML: {exc}"]) from exc
    if data is None:
        raise ConfigError(["the config document is empty"])
    if not isinstance(data, dict):
        raise ConfigError(["the config document must be a key-value mapping"])

    anchors = _line_anchors(text)
    errors: List[str] = []

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        path = tuple(err.absolute_path)
        message = err.message
        if err.validator == "required" and "mode" in message:
            message = "mode required"
        errors.append(_anchored(anchors, path, message))

    mode = data.get("mode")
    if "mode" in data and not mode:
        errors.append(_anchored(anchors, ("mode",), "mode required"))

    scenario = data.get("scenario")
    if isinstance(scenario, str) and scenario not in available_scenarios():
        errors.append(_anchored(
            anchors, ("scenario",),
            f"unknown scenario {scenario!r}; available: {', '.join(available_scenarios())}",
        ))

    params = data.get("scenario_params") or {}
    if isinstance(scenario, str) and isinstance(params, dict) and scenario in _SCENARIO_PARAMS:
        allowed = _SCENARIO_PARAMS[scenario]
        for key in params:
            if key not in allowed:
                hint = f"allowed: {', '.join(allowed)}" if allowed else "this scenario takes no overrides"
                errors.append(_anchored(anchors, ("scenario_params", key),
                                        f"unknown scenario parameter {key!r}; {hint}"))

    solver_in = data.get("solver") or {}
    if isinstance(solver_in, dict):
        p = solver_in.get("p", 0.6)
        if isinstance(p, (int, float)) and not (0.5 < p <= 1.0):
            errors.append(_anchored(anchors, ("solver", "p"),
                                    f"step exponent p must lie in (0.5, 1] for an admissible schedule, got {p}"))
        r = solver_in.get("r", 1.1)
        if isinstance(p, (int, float)) and isinstance(r, (int, float)) and p + r <= 1.0:
            errors.append(_anchored(anchors, ("solver", "r"),
                                    f"p + r must exceed 1 for an admissible schedule, got {p + r}"))

    epsilon = data.get("epsilon", 0.0)
    gaps = data.get("gaps")
    if mode == "eps_wdse":
        if not (isinstance(epsilon, (int, float)) and epsilon > 0):
            errors.append(_anchored(anchors, ("epsilon",),
                                    "mode eps_wdse requires epsilon > 0"))
    else:
        if isinstance(epsilon, (int, float)) and epsilon > 0:
            errors.append(_anchored(anchors, ("epsilon",),
                                    "epsilon is only meaningful with mode eps_wdse"))
        if gaps is not None:
            errors.append(_anchored(anchors, ("gaps",),
                                    "gaps are only meaningful with mode eps_wdse"))
    if gaps is not None and isinstance(gaps, list):
        for i, pair in enumerate(gaps):
            if isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, (int, float)) for v in pair):
                if not pair[0] < pair[1]:
                    errors.append(_anchored(anchors, ("gaps",),
                                            f"gap #{i + 1} must satisfy lo < hi, got {pair}"))

    if mode == "sweep" and not isinstance(data.get("sweep"), dict):
        errors.append(_anchored(anchors, ("sweep",), "mode sweep requires a sweep section"))
    sweep = data.get("sweep")
    if isinstance(sweep, dict) and isinstance(scenario, str) and scenario in _SCENARIO_PARAMS:
        allowed = _SCENARIO_PARAMS[scenario]
        for slot in ("param1", "param2"):
            spec = sweep.get(slot)
            if isinstance(spec, dict) and isinstance(spec.get("name"), str):
                if allowed and spec["name"] not in allowed:
                    errors.append(_anchored(anchors, ("sweep", slot, "name"),
                                            f"unknown sweep parameter {spec['name']!r} for scenario {scenario!r}"))

    if errors:
        raise ConfigError(sorted(set(errors)))

    solver_kwargs = dict(solver_in)
    solver_kwargs.setdefault("mode", {"sdse": "strong"}.get(mode, "weak"))
    if mode == "eps_wdse":
        solver_kwargs["epsilon"] = float(epsilon)
        if gaps is not None:
            solver_kwargs["gaps"] = tuple((float(a), float(b)) for a, b in gaps)
    if "x_inits" in solver_kwargs and solver_kwargs["x_inits"] is not None:
        solver_kwargs["x_inits"] = tuple(float(v) for v in solver_kwargs["x_inits"])
    try:
        solver = SolverConfig(**solver_kwargs)
    except DomainError as exc:
        raise ConfigError([_anchored(anchors, ("solver",), str(exc))]) from exc

    try:
        oracle = OracleGrid(**(data.get("oracle") or {}))
    except DomainError as exc:
        raise ConfigError([_anchored(anchors, ("oracle",), str(exc))]) from exc

    bench = dict(data.get("bench") or {})
    bench.setdefault("sizes", [50, 100, 150, 200, 250])
    bench.setdefault("seed", int(data.get("seed", 0)))
    bench.setdefault("coupling_scale", 0.2)

    return RunConfig(
        scenario=scenario,
        mode=mode,
        solver=solver,
        oracle=oracle,
        scenario_params=dict(params),
        gap_halvings=int(data.get("gap_halvings", 3)),
        sweep=sweep if isinstance(sweep, dict) else None,
        bench=bench,
        output_dir=str(data.get("out", "./out")),
        seed=int(data.get("seed", 0)),
        workers=int(data["workers"]) if "workers" in data else None,
    )


def load_config(path: str) -> RunConfig:
    """Read and validate the YAML config at ``path``."""
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(fh.read())
