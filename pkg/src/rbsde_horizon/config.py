"""Scenario files: JSON schema, validation, and expansion into model objects."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from rbsde_horizon.errors import ConfigurationError
from rbsde_horizon.estimates import DEFAULT_P_GRID
from rbsde_horizon.expr import compile_expression
from rbsde_horizon.random_time import (
    DensityKernel, anticipative_mix_kernel, cox_kernel,
)
from rbsde_horizon.rbsde_f import NO_BARRIER, DataTriplet
from rbsde_horizon.tree import MAX_DEPTH, TreeModel, build_tree

EXPERIMENTS = ("solve", "oracle_check", "identities", "apriori", "stability",
               "discounted", "limit_profile", "equivalent_check", "appendixA")
VERIFY_EXPERIMENTS = ("identities", "apriori", "stability", "discounted",
                      "limit_profile", "equivalent_check", "appendixA")

_PROCESS = {
    "oneOf": [
        {"type": "string"},
        {"type": "number"},
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    ]
}
_DATA = {
    "type": "object",
    "required": ["f", "h"],
    "additionalProperties": False,
    "properties": {
        "f": _PROCESS,
        "h": _PROCESS,
        "S": _PROCESS,
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rbsde-horizon scenario",
    "type": "object",
    "required": ["tree", "kernel", "data", "horizon"],
    "additionalProperties": False,
    "properties": {
        "tree": {
            "type": "object",
            "required": ["depth", "dt"],
            "additionalProperties": False,
            "properties": {
                "depth": {"type": "integer", "minimum": 1, "maximum": MAX_DEPTH},
                "dt": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "kernel": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["explicit", "cox", "anticipative-mix"]},
                "alpha": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "hazard": {"type": "string"},
                "mix": {"type": "number", "minimum": 0, "maximum": 1},
                "alpha0": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "finite_tau": {"type": "boolean"},
            },
        },
        "data": _DATA,
        "data2": _DATA,
        "horizon": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["bounded", "infinite"]},
                "T": {"type": "integer", "minimum": 0},
            },
        },
        "p_grid": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 1}},
        "experiments": {"type": "array", "uniqueItems": True,
                        "items": {"enum": list(EXPERIMENTS)}},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
}


@dataclass
class ScenarioConfig:
    tree: TreeModel
    kernel: DensityKernel
    data: DataTriplet
    data2: DataTriplet | None
    horizon_mode: str
    T: int
    p_grid: tuple
    experiments: tuple
    seed: int
    output_dir: str | None
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def infinite(self) -> bool:
        return self.horizon_mode == "infinite"


def parse_text(text: str, source: str = "<config>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _process(tree: TreeModel, spec, where: str) -> np.ndarray:
    """Expression string, constant, or per-level table -> flat adapted array."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(tree.size, float(spec))
    if isinstance(spec, str):
        try:
            expr = compile_expression(spec)
            return expr(n=tree.n_index.astype(float), t=tree.n_index * tree.dt, W=tree.W)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}: {exc}") from None
    levels = spec
    if len(levels) != tree.depth + 1:
        raise ConfigurationError(f"{where}: table needs {tree.depth + 1} levels, got {len(levels)}")
    for n, row in enumerate(levels):
        if len(row) != 1 << n:
            raise ConfigurationError(f"{where}: level {n} needs {1 << n} values, got {len(row)}")
    out = tree.from_levels([np.asarray(r, dtype=float) for r in levels])
    if not np.all(np.isfinite(out)):
        raise ConfigurationError(f"{where}: table has non-finite entries")
    return out


def _triplet(tree: TreeModel, block: dict, where: str) -> DataTriplet:
    f = _process(tree, block["f"], f"{where}.f")
    h = _process(tree, block["h"], f"{where}.h")
    S_spec = block.get("S", "none")
    S = NO_BARRIER if S_spec == "none" else _process(tree, S_spec, f"{where}.S")
    return DataTriplet(f, S, h)


def _kernel(tree: TreeModel, block: dict) -> DensityKernel:
    mode = block["mode"]
    finite = bool(block.get("finite_tau", False))
    alpha0 = float(block.get("alpha0", 0.0))
    if mode == "explicit":
        if "alpha" not in block:
            raise ConfigurationError("kernel.alpha is required in explicit mode")
        return DensityKernel(np.asarray(block["alpha"], dtype=float), finite_tau=finite)
    if "hazard" not in block:
        raise ConfigurationError(f"kernel.hazard is required in {mode} mode")
    if mode == "cox":
        expr = compile_expression(block["hazard"], ("n", "t", "W"))
        return cox_kernel(tree, lambda n, t, W: expr(n=float(n), t=t, W=W), alpha0, finite)
    expr = compile_expression(block["hazard"], ("n", "t", "W", "s"))
    if "mix" not in block:
        raise ConfigurationError("kernel.mix is required in anticipative-mix mode")
    return anticipative_mix_kernel(
        tree, lambda n, t, W, s: expr(n=float(n), t=t, W=W, s=s), float(block["mix"]),
        alpha0, finite)


def load_config(raw: dict, p_override=None) -> ScenarioConfig:
    raw = copy.deepcopy(raw)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config invalid at {path}: {exc.message}") from None
    tree = build_tree(raw["tree"]["depth"], float(raw["tree"]["dt"]))
    kernel = _kernel(tree, raw["kernel"])
    if kernel.depth != tree.depth:
        raise ConfigurationError(f"kernel depth {kernel.depth} differs from tree depth {tree.depth}")
    horizon = raw["horizon"]
    mode = horizon["mode"]
    if mode == "bounded":
        if "T" not in horizon:
            raise ConfigurationError("horizon.T is required in bounded mode")
        T = int(horizon["T"])
        if T > tree.depth:
            raise ConfigurationError(f"horizon.T = {T} exceeds tree depth {tree.depth}")
    else:
        if not kernel.finite_tau:
            raise ConfigurationError("infinite horizon needs kernel.finite_tau = true")
        T = tree.depth
    experiments = tuple(raw.get("experiments", ["solve"]))
    if "stability" in experiments and "data2" not in raw:
        raise ConfigurationError("experiment 'stability' requires a data2 block")
    if "limit_profile" in experiments and not kernel.finite_tau:
        raise ConfigurationError("experiment 'limit_profile' needs kernel.finite_tau = true")
    p_grid = tuple(p_override) if p_override else tuple(raw.get("p_grid", DEFAULT_P_GRID))
    if any(not p > 1 for p in p_grid):
        raise ConfigurationError("every p must exceed 1")
    data = _triplet(tree, raw["data"], "data")
    data2 = _triplet(tree, raw["data2"], "data2") if "data2" in raw else None
    return ScenarioConfig(tree, kernel, data, data2, mode, T, p_grid, experiments,
                          int(raw.get("seed", 0)), raw.get("output_dir"), raw)


def load_config_file(path, p_override=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    return load_config(parse_text(text, str(path)), p_override)
