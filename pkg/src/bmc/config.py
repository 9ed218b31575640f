"""Experiment configuration: JSON file, CLI flag overrides, validation.

Precedence, highest first: CLI flag, BMC_SEED environment variable (seed
only), config file, built-in default.  Every resolved value is echoed into
the report so a run is replayable from its own output.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .branching import OffspringLawField, constant_mean_law, parse_law_field
from .kernel import Kernel, State, kernel_from_edge_list, origin, parse_state
from .presets import PRESETS, PresetInstance, preset
from .simulate import SimConfig

MODES = ("classify", "simulate", "rho", "certificate", "invariance", "cascade",
         "presets")


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


@dataclass
class ExperimentConfig:
    mode: str = "classify"
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    edge_list: str | None = None
    law: str | None = None
    law_overrides: dict = field(default_factory=dict)
    m: float | str | None = None          # number or "infinite"
    start: str | None = None
    target: str | None = None
    origin: str | None = None
    radius: int = 200
    n_max: int = 50
    k_max: int = 20
    shift: list = field(default_factory=list)
    horizon: int = 100
    particle_cap: int = 10 ** 6
    trials: int = 1000
    seed: int = 0
    visit_threshold: int = 10
    meta_trials: int = 100
    max_restarts: int = 20
    mc: bool = False
    star: bool = False
    strict: bool = False
    certificate_file: str | None = None
    level: float | None = None
    lambdas: list = field(default_factory=list)
    fit: bool = False
    slack: float = 0.0
    tol: float = 1e-9
    out: str | None = None
    csv: str | None = None

    def resolved(self) -> dict:
        """Plain-dict echo of every value the run will use."""
        return asdict(self)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def load_config(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    for key in data:
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config field {key!r}")
    return data


def build_config(file_values: dict | None, flag_values: dict) -> ExperimentConfig:
    """Merge config sources by precedence and validate the result."""
    merged: dict[str, Any] = {}
    merged.update(file_values or {})
    env_seed = os.environ.get("BMC_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"BMC_SEED must be an integer, got {env_seed!r}") from exc
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    unknown = set(merged) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
    cfg = ExperimentConfig(**merged)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: {cfg.mode!r} is not one of {MODES}")
    if cfg.mode != "presets":
        if cfg.preset is None and cfg.edge_list is None:
            raise ConfigError("preset: required (or provide edge_list)")
        if cfg.preset is not None and cfg.preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {cfg.preset!r}")
    if cfg.m is not None and not _is_infinite(cfg.m):
        try:
            value = float(cfg.m)
        except (TypeError, ValueError):
            raise ConfigError(f"m: expected a number or 'infinite', got {cfg.m!r}")
        if value <= 1.0:
            raise ConfigError(f"m: must exceed 1, got {value}")
    for name in ("radius", "horizon", "particle_cap", "trials", "visit_threshold",
                 "meta_trials", "k_max"):
        if getattr(cfg, name) < 1 and not (name == "radius" and cfg.radius >= 0):
            raise ConfigError(f"{name}: must be positive")
    if cfg.n_max < 0:
        raise ConfigError("n_max: must be nonnegative")
    if cfg.slack < 0:
        raise ConfigError("slack: must be nonnegative")
    if cfg.tol <= 0:
        raise ConfigError("tol: must be positive")


def _is_infinite(m) -> bool:
    return (isinstance(m, str) and m.lower() in ("infinite", "inf")) or (
        isinstance(m, float) and math.isinf(m))


def mean_value(cfg: ExperimentConfig) -> float:
    if cfg.m is None:
        raise ConfigError("m: required for this mode")
    if _is_infinite(cfg.m):
        return math.inf
    return float(cfg.m)


def resolve_kernel(cfg: ExperimentConfig) -> tuple[Kernel, PresetInstance | None]:
    if cfg.preset is not None:
        inst = preset(cfg.preset, **cfg.preset_params)
        return inst.kernel, inst
    if cfg.edge_list is None:
        raise ConfigError("preset: required (or provide edge_list)")
    with open(cfg.edge_list) as fh:
        return kernel_from_edge_list(fh, name=cfg.edge_list), None


def resolve_laws(cfg: ExperimentConfig) -> OffspringLawField:
    """Law field from --law/--law-overrides, or the minimal law matching --m."""
    if cfg.law is not None:
        try:
            return parse_law_field(cfg.law, cfg.law_overrides)
        except ValueError as exc:
            raise ConfigError(f"law: {exc}") from exc
    if cfg.m is not None and not _is_infinite(cfg.m):
        return OffspringLawField.constant(constant_mean_law(float(cfg.m)))
    raise ConfigError("law: required for this mode (or provide a finite m)")


def resolve_state(text: str | None, kernel: Kernel, fallback_origin: bool = True) -> State:
    if text is None:
        if fallback_origin and kernel.dimension is not None:
            return origin(kernel.dimension)
        raise ConfigError("start: required for this kernel")
    try:
        state = parse_state(text)
    except ValueError as exc:
        raise ConfigError(f"state {text!r}: {exc}") from exc
    if kernel.dimension is not None and len(state) != kernel.dimension:
        raise ConfigError(f"state {text!r}: dimension {len(state)} does not match "
                          f"kernel dimension {kernel.dimension}")
    return state


def sim_config(cfg: ExperimentConfig, trials: int | None = None) -> SimConfig:
    return SimConfig(horizon=cfg.horizon, particle_cap=cfg.particle_cap,
                     trials=trials if trials is not None else cfg.trials,
                     seed=cfg.seed, visit_threshold=cfg.visit_threshold)
