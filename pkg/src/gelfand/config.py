"""Experiment configuration: schema, presets and command-line overrides."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .budget import GeometryConstants
from .projection import SolverConfig

EXIT_OK = 0
EXIT_EMPTY = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

MODES = ("preset", "reference-cascade")
PARTITION_STRATEGIES = ("greedy", "sparse")

DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "model": {"kind": "interval", "length": math.pi},
    "resolution": {},
    "J": 64,
    "delta": 0.0,
    "seed": 0,
    "eta": 0.2,
    "partition": "greedy",
    "mode": "preset",
    "output": "runs/experiment",
    "threads": None,
    "volume": {"Lambda": 1.0, "gamma": 0.5, "eps1": 0.03, "C0": 1.0, "C0p": 1e-7},
    "reconstruction": {"i0": 8.0, "L": 0, "D": None, "eps": None, "max_points": 200000},
    "solver": {},
    "evaluation": {"sample_spacing": 0.01, "gh_restarts": 8, "gh_sweeps": 4, "gh_max_points": 1500},
    "geometry": {},
    "cascade_max_J": 4096,
}

_MODEL_KEYS = {"interval": ("length",), "rectangle": ("Lx", "Ly"), "disk": ("R",)}
_RESOLUTION_KEYS = {
    "interval": ("interior_cells",),
    "rectangle": ("spacing", "boundary_spacing"),
    "disk": ("radial_cells", "angular_cells", "boundary_nodes"),
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    # frequently used views
    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def model(self) -> dict:
        return self.raw["model"]

    @property
    def resolution(self) -> dict:
        return self.raw["resolution"]

    @property
    def J(self) -> int:
        return self.raw["J"]

    @property
    def delta(self) -> float:
        return self.raw["delta"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def eta(self) -> float:
        return self.raw["eta"]

    @property
    def output(self) -> Path:
        return Path(self.raw["output"])

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig.from_dict(self.raw["solver"])

    @property
    def geometry(self) -> GeometryConstants:
        return GeometryConstants.from_dict(self.raw["geometry"])

    def threads(self) -> int:
        env = os.environ.get("GELFAND_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError("GELFAND_THREADS", f"not an integer: {env!r}") from None
            if value < 1:
                raise ConfigError("GELFAND_THREADS", "must be at least 1")
            return value
        t = self.raw["threads"]
        return t if t is not None else (os.cpu_count() or 1)

    def to_json(self) -> dict:
        return copy.deepcopy(self.raw)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(path: str, v: Any, *, integer: bool = False, allow_zero: bool = False) -> None:
    kind = int if integer else (int, float)
    if isinstance(v, bool) or not isinstance(v, kind) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite {'integer' if integer else 'number'}, got {v!r}")
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(path, f"must be {'nonnegative' if allow_zero else 'positive'}, got {v!r}")


def validate(raw: dict) -> ExperimentConfig:
    """Fill defaults and check every field; raises ConfigError naming the field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    cfg = _merge(DEFAULTS, raw)
    if "model" in raw:  # a model replaces the default one instead of merging into it
        cfg["model"] = copy.deepcopy(raw["model"])

    if not isinstance(cfg["name"], str) or not cfg["name"]:
        raise ConfigError("name", "must be a nonempty string")
    model = cfg["model"]
    kind = model.get("kind") if isinstance(model, dict) else None
    if kind not in _MODEL_KEYS:
        raise ConfigError("model.kind", f"must be one of {sorted(_MODEL_KEYS)}, got {kind!r}")
    for k in _MODEL_KEYS[kind]:
        if k not in model:
            raise ConfigError(f"model.{k}", "missing")
        _positive(f"model.{k}", model[k])
    extra = set(model) - set(_MODEL_KEYS[kind]) - {"kind"}
    if extra:
        raise ConfigError(f"model.{sorted(extra)[0]}", f"not a parameter of the {kind} model")
    for k, v in cfg["resolution"].items():
        if k not in _RESOLUTION_KEYS[kind]:
            raise ConfigError(f"resolution.{k}", f"not a resolution option of the {kind} model")
        if v is not None:
            _positive(f"resolution.{k}", v, integer=k.endswith(("cells", "nodes")))

    _positive("J", cfg["J"], integer=True)
    if cfg["J"] < 2:
        raise ConfigError("J", "need at least two modes")
    _positive("delta", cfg["delta"], allow_zero=True)
    if isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    _positive("eta", cfg["eta"])
    if cfg["partition"] not in PARTITION_STRATEGIES:
        raise ConfigError("partition", f"must be one of {PARTITION_STRATEGIES}")
    if cfg["mode"] not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}")
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        raise ConfigError("output", "must be a nonempty path string")
    if cfg["threads"] is not None:
        _positive("threads", cfg["threads"], integer=True)
    _positive("cascade_max_J", cfg["cascade_max_J"], integer=True)

    vol = cfg["volume"]
    for k in vol:
        if k not in DEFAULTS["volume"]:
            raise ConfigError(f"volume.{k}", "unknown volume parameter")
        _positive(f"volume.{k}", vol[k])

    rec = cfg["reconstruction"]
    for k in rec:
        if k not in DEFAULTS["reconstruction"]:
            raise ConfigError(f"reconstruction.{k}", "unknown reconstruction parameter")
    _positive("reconstruction.i0", rec["i0"])
    _positive("reconstruction.L", rec["L"], integer=True, allow_zero=True)
    _positive("reconstruction.max_points", rec["max_points"], integer=True)
    for k in ("D", "eps"):
        if rec[k] is not None:
            _positive(f"reconstruction.{k}", rec[k])

    ev = cfg["evaluation"]
    for k in ev:
        if k not in DEFAULTS["evaluation"]:
            raise ConfigError(f"evaluation.{k}", "unknown evaluation parameter")
    _positive("evaluation.sample_spacing", ev["sample_spacing"])
    for k in ("gh_restarts", "gh_sweeps", "gh_max_points"):
        _positive(f"evaluation.{k}", ev[k], integer=True)

    try:
        SolverConfig.from_dict(cfg["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from None
    try:
        GeometryConstants.from_dict(cfg["geometry"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("geometry", str(exc)) from None
    return ExperimentConfig(cfg)


# -- presets ------------------------------------------------------------------


def preset_names() -> list[str]:
    folder = resources.files("gelfand") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("gelfand") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError("config", f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_config_source(source: str) -> dict:
    """Read a config file path, or a preset name when no such file exists."""
    p = Path(source)
    if p.is_file():
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{source} is not valid JSON: {exc}") from None
    if p.suffix == ".json" or os.sep in source:
        raise ConfigError("config", f"file not found: {source}")
    return load_preset(source)


def parse_override(value: str) -> Any:
    """Interpret a command-line value as JSON when possible, else as a string."""
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def apply_overrides(raw: dict, overrides: list[tuple[str, str]]) -> dict:
    """Set dotted keys (``--volume.eps1 0.05``) on a copy of the raw config."""
    out = copy.deepcopy(raw)
    for key, value in overrides:
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(key, f"{p} is not a section")
            node = nxt
        node[parts[-1]] = parse_override(value)
    return out
