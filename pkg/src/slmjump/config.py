"""Run configuration: versioned JSON schema with field-level validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .filtration import LevelSet
from .market import RenewalSpec
from .stochastics import SdeModel, TimeGrid

SCHEMA_VERSION = 1


def _require(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"missing required field '{path}'")
    return mapping[key]


def _number(value, path, *, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{path}' must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"field '{path}' must be an integer, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"field '{path}' must be positive, got {value!r}")
    return int(value) if integer else float(value)


@dataclass
class EstimatorConfig:
    bucket_steps: int = 8
    eval_steps: int | None = None
    min_occupancy: int = 30
    noise_threshold: float = 0.5
    coupling: str = "auto"


@dataclass
class IntensityConfig:
    gap: float = 1.0
    t_alpha: float = 0.0
    window: tuple = (0.0, 3.0)
    grid_points: int = 61
    n_samples: int = 100_000
    sup_norm_tol: float = 0.05
    negative_control: bool = False


@dataclass
class MarketConfig:
    renewal: RenewalSpec = field(default_factory=lambda: RenewalSpec("exponential", rate=2.0))
    h_weight: float = 1.0
    y_bin: float = 0.25
    noise_threshold: float = 0.1
    min_occupancy: int = 100


@dataclass
class RunConfig:
    """Validated configuration of one CLI run."""

    seed: int
    out_dir: str
    model: SdeModel | None = None
    grid: TimeGrid | None = None
    levels: LevelSet | None = None
    n_paths: int = 0
    eval_times: tuple = ()
    bridge_correction: bool = True
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    intensity: IntensityConfig = field(default_factory=IntensityConfig)
    market: MarketConfig = field(default_factory=MarketConfig)
    workers: int = 1
    raw: dict = field(default_factory=dict)


def parse_model(spec, path="model") -> SdeModel:
    kind = _require(spec, "kind", f"{path}.kind")
    x0 = _number(spec.get("x0", 1.0), f"{path}.x0")
    drift = bool(spec.get("drift", False))
    if kind == "power":
        if "c" not in spec and "p" not in spec:
            raise ConfigError(f"missing required field '{path}.c'/'{path}.p' (power sigma spec)")
        c = _number(_require(spec, "c", f"{path}.c"), f"{path}.c")
        p = _number(_require(spec, "p", f"{path}.p"), f"{path}.p")
        try:
            return SdeModel.power(c, p, x0=x0, drift=drift)
        except Exception as exc:
            raise ConfigError(f"invalid '{path}': {exc}") from exc
    if kind == "table":
        xs = _require(spec, "x", f"{path}.x")
        sig = _require(spec, "sigma", f"{path}.sigma")
        try:
            return SdeModel.table(np.asarray(xs, float), np.asarray(sig, float), x0=x0, drift=drift)
        except Exception as exc:
            raise ConfigError(f"invalid '{path}.sigma' table: {exc}") from exc
    raise ConfigError(f"field '{path}.kind' must be 'power' or 'table', got {kind!r}")


def parse_grid(spec, path="grid") -> TimeGrid:
    horizon = _number(_require(spec, "horizon", f"{path}.horizon"), f"{path}.horizon")
    steps = _number(_require(spec, "steps", f"{path}.steps"), f"{path}.steps", integer=True)
    t_start = _number(spec.get("t_start", 0.0), f"{path}.t_start")
    try:
        return TimeGrid(horizon=horizon, steps=steps, t_start=t_start)
    except Exception as exc:
        raise ConfigError(f"invalid '{path}': {exc}") from exc


def parse_levels(spec, path="levels") -> LevelSet:
    values = _require(spec, "values", f"{path}.values")
    try:
        return LevelSet(
            np.asarray(values, dtype=float),
            accumulation=frozenset(spec.get("accumulation", [])),
            two_sided=bool(spec.get("two_sided", False)),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid '{path}.values': {exc}") from exc


def parse_renewal(spec, path="market.renewal") -> RenewalSpec:
    kind = _require(spec, "kind", f"{path}.kind")
    try:
        if kind == "exponential":
            return RenewalSpec("exponential", rate=_number(_require(spec, "rate", f"{path}.rate"), f"{path}.rate"))
        if kind == "fixed":
            return RenewalSpec("fixed", table=tuple(_require(spec, "table", f"{path}.table")))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid '{path}': {exc}") from exc
    raise ConfigError(f"field '{path}.kind' must be 'exponential' or 'fixed', got {kind!r}")


def load_config(path_or_dict, command: str) -> RunConfig:
    """Load and validate a config for one CLI command.

    Module preconditions referenced by the config are validated here, before
    any simulation starts; error messages name the offending field.
    """
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        with open(path_or_dict) as f:
            raw = json.load(f)
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version' must be {SCHEMA_VERSION}, got {version!r}")
    seed = _number(_require(raw, "seed", "seed"), "seed", integer=True)
    cfg = RunConfig(seed=seed, out_dir=str(raw.get("out_dir", "out")), raw=raw)

    needs_model = command in ("simulate", "project", "classify", "market")
    needs_grid = command in ("simulate", "project", "market")
    needs_levels = command in ("simulate", "project")

    if needs_model:
        cfg.model = parse_model(_require(raw, "model", "model"))
    if needs_grid:
        cfg.grid = parse_grid(_require(raw, "grid", "grid"))
        cfg.n_paths = _number(
            _require(raw, "n_paths", "n_paths"), "n_paths", positive=True, integer=True
        )
    if needs_levels:
        cfg.levels = parse_levels(_require(raw, "levels", "levels"))
        cfg.bridge_correction = bool(raw.get("bridge_correction", True))

    if command in ("project", "market"):
        times = raw.get("eval_times", [])
        if not isinstance(times, list) or not times:
            raise ConfigError("field 'eval_times' must be a non-empty list")
        cfg.eval_times = tuple(_number(t, "eval_times[]") for t in times)
        if any(t <= cfg.grid.t_start or t > cfg.grid.horizon for t in cfg.eval_times):
            raise ConfigError("field 'eval_times' must lie inside (t_start, horizon]")

    est = raw.get("estimator", {})
    cfg.estimator = EstimatorConfig(
        bucket_steps=_number(est.get("bucket_steps", 8), "estimator.bucket_steps", positive=True, integer=True),
        eval_steps=(
            _number(est["eval_steps"], "estimator.eval_steps", positive=True, integer=True)
            if "eval_steps" in est
            else None
        ),
        min_occupancy=_number(est.get("min_occupancy", 30), "estimator.min_occupancy", positive=True, integer=True),
        noise_threshold=_number(est.get("noise_threshold", 0.5), "estimator.noise_threshold", positive=True),
        coupling=str(est.get("coupling", "auto")),
    )

    if command == "intensity":
        spec = raw.get("intensity", {})
        window = spec.get("window", [0.0, 3.0])
        if not (isinstance(window, list) and len(window) == 2 and window[0] < window[1]):
            raise ConfigError("field 'intensity.window' must be [lo, hi] with lo < hi")
        cfg.intensity = IntensityConfig(
            gap=_number(spec.get("gap", 1.0), "intensity.gap", positive=True),
            t_alpha=_number(spec.get("t_alpha", 0.0), "intensity.t_alpha"),
            window=(float(window[0]), float(window[1])),
            grid_points=_number(spec.get("grid_points", 61), "intensity.grid_points", positive=True, integer=True),
            n_samples=_number(spec.get("n_samples", 100_000), "intensity.n_samples", positive=True, integer=True),
            sup_norm_tol=_number(spec.get("sup_norm_tol", 0.05), "intensity.sup_norm_tol", positive=True),
            negative_control=bool(spec.get("negative_control", False)),
        )

    if command == "market":
        spec = raw.get("market", {})
        cfg.market = MarketConfig(
            renewal=parse_renewal(_require(spec, "renewal", "market.renewal")),
            h_weight=_number(spec.get("h_weight", 1.0), "market.h_weight"),
            y_bin=_number(spec.get("y_bin", 0.25), "market.y_bin", positive=True),
            noise_threshold=_number(spec.get("noise_threshold", 0.1), "market.noise_threshold", positive=True),
            min_occupancy=_number(spec.get("min_occupancy", 100), "market.min_occupancy", positive=True, integer=True),
        )
    return cfg
