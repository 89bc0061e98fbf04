"""Experiment configuration: JSON document, schema-validated, defaults filled in."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import jsonschema

from .propagator import DEFAULT_MAX_DIM, HilbertSpaceSpec
from .spectral import (GappedDensity, OhmicDensity, SpectralDensity, TRAP_FIT,
                       default_range, discretize)
from .tcl2 import Tcl2Rates

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_angle_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "delta", "bath", "hilbert", "time"],
    "properties": {
        "model": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["density", "alpha", "omega_c"],
                    "properties": {
                        "density": {"const": "ohmic"},
                        "alpha": _nonneg,
                        "omega_c": _pos,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["density", "alpha"],
                    "properties": {
                        "density": {"const": "gapped"},
                        "alpha": _nonneg,
                        "a": _pos,
                        "b": _pos,
                        "c": _pos,
                        "omega_min": {"type": ["number", "null"], "exclusiveMinimum": 0},
                        "omega_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                        "unit": {"type": ["number", "null"], "exclusiveMinimum": 0},
                    },
                },
            ]
        },
        "delta": _pos,
        "bath": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_modes"],
            "properties": {
                "n_modes": {"type": "integer", "minimum": 1},
                "range": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
                    ]
                },
            },
        },
        "hilbert": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cutoff"],
            "properties": {
                "cutoff": {
                    "oneOf": [
                        {"type": "integer", "minimum": 2},
                        {"type": "array", "items": {"type": "integer", "minimum": 2}},
                    ]
                },
                "max_dim": {"type": "integer", "minimum": 2},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dt", "steps"],
            "properties": {
                "dt": _pos,
                "steps": {"type": "integer", "minimum": 0},
                "stride": {"type": "integer", "minimum": 1},
            },
        },
        "propagation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "krylov_dim": {"type": "integer", "minimum": 2},
                "tol": _pos,
                "checkpoint_every": {"type": "integer", "minimum": 0},
            },
        },
        "states": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"extra": {"type": "array", "items": _angle_pair}},
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "tol_stationary": _pos,
                "tol_zero": _pos,
                "bound_draws": {"type": "integer", "minimum": 0},
                "cutoff_threshold": _pos,
            },
        },
        "tcl2": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rates": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["gamma_xx", "gamma_x", "gamma_yy", "gamma_yz"],
                            "properties": {
                                k: {"type": "number"}
                                for k in ("gamma_xx", "gamma_x", "gamma_yy", "gamma_yz")
                            },
                        },
                    ]
                },
                "rtol": _pos,
                "atol": _pos,
            },
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULT_CONFIG: dict[str, Any] = {
    "model": {"density": "ohmic", "alpha": 0.2, "omega_c": 5.0},
    "delta": 1.0,
    "bath": {"n_modes": 4, "range": None},
    "hilbert": {"cutoff": 6, "max_dim": DEFAULT_MAX_DIM},
    "time": {"dt": 0.05, "steps": 400, "stride": 4},
    "propagation": {"krylov_dim": 30, "tol": 1e-12, "checkpoint_every": 0},
    "states": {"extra": [[1.0, 0.7]]},
    "analysis": {
        "window": None,
        "tol_stationary": 1e-3,
        "tol_zero": 1e-2,
        "bound_draws": 100,
        "cutoff_threshold": 1e-6,
    },
    "tcl2": {"rates": None, "rtol": 1e-10, "atol": 1e-10},
    "output": "out",
    "seed": 0,
}

GAPPED_DEFAULTS = {"a": TRAP_FIT[0], "b": TRAP_FIT[1], "c": TRAP_FIT[2],
                   "omega_min": None, "omega_max": None, "unit": None}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "model":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> dict:
    """Validate against the schema and fill defaults; raises ConfigError."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    full = _merge(DEFAULT_CONFIG, cfg)
    if full["model"]["density"] == "gapped":
        full["model"] = {**GAPPED_DEFAULTS, **full["model"]}
    try:
        jsonschema.validate(full, SCHEMA)
        build_density(full)
        lo_hi = full["bath"]["range"]
        if lo_hi is not None and not lo_hi[0] < lo_hi[1]:
            raise ConfigError("bath.range must satisfy lo < hi")
        cut = full["hilbert"]["cutoff"]
        if isinstance(cut, list) and len(cut) != full["bath"]["n_modes"]:
            raise ConfigError("hilbert.cutoff list must have one entry per bath mode")
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config error: {exc.message}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"config error: {exc}") from None
    return full


def load(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return validate(raw)


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def build_density(cfg: dict) -> SpectralDensity:
    m = cfg["model"]
    if m["density"] == "ohmic":
        return OhmicDensity(m["alpha"], m["omega_c"])
    kw = {k: m[k] for k in ("a", "b", "c", "omega_min", "omega_max") if m.get(k) is not None}
    if m.get("unit") is not None:
        return GappedDensity(m["alpha"], unit=m["unit"], **kw)
    return GappedDensity.spin_resonant(m["alpha"], cfg["delta"], **kw)


def bath_range(cfg: dict, density: SpectralDensity) -> tuple[float, float]:
    rng = cfg["bath"]["range"]
    return tuple(rng) if rng is not None else default_range(density, cfg["bath"]["n_modes"])


def build_bath(cfg: dict):
    density = build_density(cfg)
    rng = bath_range(cfg, density)
    return density, discretize(density, cfg["bath"]["n_modes"], rng), rng


def build_spec(cfg: dict, bath) -> HilbertSpaceSpec:
    cut = cfg["hilbert"]["cutoff"]
    cutoffs = tuple(cut) if isinstance(cut, list) else (cut,) * bath.n_modes
    return HilbertSpaceSpec(bath, cutoffs, cfg["hilbert"]["max_dim"])


def explicit_rates(cfg: dict) -> Tcl2Rates | None:
    r = cfg["tcl2"]["rates"]
    return None if r is None else Tcl2Rates(r["gamma_xx"], r["gamma_x"], r["gamma_yy"], r["gamma_yz"])
