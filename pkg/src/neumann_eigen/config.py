"""JSON problem documents: schema validation and construction of problem objects."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema

from .discretize import DiscreteProblem
from .eigen import EigenConfig
from .errors import ConfigurationError
from .geometry import Interval, RadialBall, Rectangle, build_grid
from .operators import (Bellman, Dirichlet, EllipticityBounds, Isaacs, Linear, PucciMinus, PucciPlus, Robin,
                        check_ellipticity)
from .solve import SolveConfig

__all__ = ["CONFIG_SCHEMA", "load_config", "validate_config", "config_hash", "build_problem",
           "solve_config", "eigen_config"]

_expr = {"type": ["string", "number"]}
_expr_list = {"oneOf": [_expr, {"type": "array", "items": _expr, "minItems": 1}]}
_positive = {"type": "number", "exclusiveMinimum": 0}

_family = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"diffusion": _expr_list, "drift": _expr_list, "zeroth": _expr},
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "grid", "operator"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["interval", "rectangle", "radial_ball"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: {"type": "number"} for k in ("x0", "x1", "y0", "y1", "R")}
                    | {"dim": {"type": "integer", "minimum": 1}},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n"],
            "properties": {"n": {"type": "integer", "minimum": 3}},
        },
        "operator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["pucci_plus", "pucci_minus", "linear", "bellman", "isaacs"]},
                "a": _positive,
                "A": _positive,
                "diffusion": _expr_list,
                "drift": _expr_list,
                "zeroth": _expr,
                "families": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"oneOf": [_family, {"type": "array", "items": _family, "minItems": 1}]},
                },
                "outer": {"enum": ["max", "min"]},
            },
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {"type": {"enum": ["robin", "dirichlet"]}, "gamma": _expr},
        },
        "rhs": _expr,
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "inner_tol": _positive,
                "outer_tol": _positive,
                "max_outer": {"type": "integer", "minimum": 1},
                "max_inner": {"type": "integer", "minimum": 1},
                "norm_cap": _positive,
                "method": {"enum": ["policy", "gauss_seidel"]},
            },
        },
        "eigen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bisect_tol": _positive,
                "eig_tol": _positive,
                "lambda_lo": {"type": "number"},
                "lambda_hi": {"type": "number"},
                "ladder_step": _positive,
                "probe_method": {"enum": ["policy", "iteration"]},
            },
        },
    },
}


def _describe(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        return f"unknown key(s) {', '.join(repr(k) for k in extra)} in {where}"
    return f"{where}: {err.message}"


def validate_config(doc: dict) -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigurationError("invalid config: " + "; ".join(_describe(e) for e in errors))
    return doc


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(doc)


def config_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _domain(spec: dict):
    params = spec.get("params", {})
    kind = spec["type"]
    try:
        if kind == "interval":
            return Interval(params.get("x0", 0.0), params.get("x1", 1.0))
        if kind == "rectangle":
            return Rectangle(params.get("x0", 0.0), params.get("x1", 1.0), params.get("y0", 0.0), params.get("y1", 1.0))
        return RadialBall(params.get("R", 1.0), params.get("dim", 2))
    except TypeError as exc:
        raise ConfigurationError(f"bad domain parameters: {exc}") from exc


def _linear(spec: dict) -> Linear:
    return Linear(spec.get("diffusion", ()), spec.get("drift", ()), spec.get("zeroth", 0.0))


def _operator(spec: dict):
    kind = spec["type"]
    drift, zeroth = spec.get("drift", ()), spec.get("zeroth", 0.0)
    if kind in ("pucci_plus", "pucci_minus"):
        if "a" not in spec or "A" not in spec:
            raise ConfigurationError(f"{kind} needs ellipticity constants 'a' and 'A'")
        cls = PucciPlus if kind == "pucci_plus" else PucciMinus
        return cls(EllipticityBounds(spec["a"], spec["A"]), drift, zeroth)
    if kind == "linear":
        return _linear(spec)
    fams = spec.get("families")
    if not fams:
        raise ConfigurationError(f"{kind} operator needs 'families'")
    if kind == "bellman":
        if any(isinstance(f, list) for f in fams):
            raise ConfigurationError("bellman families must be a flat list")
        return Bellman(tuple(_linear(f) for f in fams))
    groups = [f if isinstance(f, list) else [f] for f in fams]
    return Isaacs(tuple(tuple(_linear(f) for f in g) for g in groups), spec.get("outer", "max"))


def _boundary(spec: dict | None):
    if spec is None or spec["type"] == "robin":
        return Robin((spec or {}).get("gamma", 0.0))
    return Dirichlet()


def build_problem(doc: dict, lam: float = 0.0, rhs=None) -> DiscreteProblem:
    """Discrete problem described by a validated config document."""
    grid = build_grid(_domain(doc["domain"]), doc["grid"]["n"])
    op = _operator(doc["operator"])
    if doc["operator"]["type"] in ("pucci_plus", "pucci_minus"):
        check_ellipticity(op, grid.nodes)
    else:
        bounds = None
        if "a" in doc["operator"] and "A" in doc["operator"]:
            bounds = EllipticityBounds(doc["operator"]["a"], doc["operator"]["A"])
        check_ellipticity(op, grid.nodes, bounds)
    g = doc.get("rhs", 0.0) if rhs is None else rhs
    return DiscreteProblem(grid, op, _boundary(doc.get("boundary")), lam, g)


def solve_config(doc: dict) -> SolveConfig:
    return SolveConfig(**doc.get("solver", {}))


def eigen_config(doc: dict) -> EigenConfig:
    return EigenConfig(solve=solve_config(doc), **doc.get("eigen", {}))
