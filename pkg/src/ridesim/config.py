"""Run configuration: a YAML file mapped onto a tree of dataclasses.

Unknown keys are fatal and reported by their dotted path, so a typo in a
nested section fails loudly instead of silently running defaults. Command
line overrides (`section.key=value`) are applied to the raw mapping before
validation and therefore obey the same rules. A canonical hash of the fully
resolved configuration is stamped into every artifact header.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import yaml

from .agent import FeatureScales
from .ingest import TIME_FORMAT
from .ridegen import GridSpec
from .sim import PlatformParams
from .synth import SyntheticLogSpec, SyntheticPolicy
from .training import BcConfig, RlConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsSection:
    trip_log: str = ""
    out_dir: str = "out"


@dataclass
class GridSection:
    width_km: float = 10.0
    height_km: float = 10.0
    noise_epsilon_km: float = 0.25
    origin_lat: float = 0.0
    origin_lon: float = 0.0


@dataclass
class DemandSection:
    scale_factor: float = 35.0
    holdout_days: int = 7


@dataclass
class PlatformSection:
    fare_per_km: float = 100.0
    cost_per_km: float = 30.0
    peak_hours: list = field(default_factory=lambda: [[6, 8], [16, 19]])
    peak_fare_multiplier: float = 2.0
    weekly_reward_amount: float = 2000.0
    weekly_target_multiplier: float = 1.0
    fare_weight: float = 1.0
    cost_weight: float = 1.0
    idle_cost_weight: float = 1.0
    bonus_weight: float = 1.0
    idle_cost_per_minute: float = 1.0
    default_weekly_goal: int = 40


@dataclass
class SimSection:
    driver_count: int = 50
    weeks: int = 1
    max_offers: int = 5
    speed_kmh: float = 30.0
    start_dow: int = 0
    # None: drivers start the run at the platform default goal baseline.
    initial_weekly_trips: object = None


@dataclass
class AgentSection:
    hidden: list = field(default_factory=lambda: [64, 64])
    atom_count: int = 51
    gamma: float = 0.6
    epsilon: float = 0.05
    learning_rate: float = 1e-3
    sync_every: int = 100


@dataclass
class BcSection:
    iterations: int = 150
    buffer_trajectories: int = 1000
    batch_size: int = 64
    eval_fraction: float = 0.1


@dataclass
class RlSection:
    iterations: int = 50
    exploration: float = 0.05
    patience: int = 5
    batch_size: int = 64
    buffer_transitions: int = 50000


@dataclass
class EvaluateSection:
    replications: int = 20


@dataclass
class SynthSection:
    driver_count: int = 50
    days: int = 28
    start: str = "2026-02-02T00:00"
    offers_per_driver_day: float = 8.0
    weight_pickup_km: float = -1.5
    weight_trip_km: float = 4.0
    weight_minute_of_day: float = 0.0
    weight_trips_to_goal: float = 1.2
    weight_drop_center_km: float = -0.3
    weight_idle_minutes: float = -0.1
    bias: float = 1.1
    trip_km_log_mean: float = 1.2527629684953681
    trip_km_log_sigma: float = 0.45
    trip_km_min: float = 0.3
    trip_km_max: float = 25.0


@dataclass
class SweepSection:
    param: str = ""
    values: list = field(default_factory=list)


@dataclass
class Config:
    seed: int = 7
    paths: PathsSection = field(default_factory=PathsSection)
    grid: GridSection = field(default_factory=GridSection)
    demand: DemandSection = field(default_factory=DemandSection)
    platform: PlatformSection = field(default_factory=PlatformSection)
    sim: SimSection = field(default_factory=SimSection)
    agent: AgentSection = field(default_factory=AgentSection)
    bc: BcSection = field(default_factory=BcSection)
    rl: RlSection = field(default_factory=RlSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    synth: SynthSection = field(default_factory=SynthSection)
    sweep: SweepSection = field(default_factory=SweepSection)


_SECTION_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def _fill(target, data: dict, prefix: str):
    names = {f.name for f in dataclasses.fields(target)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key: {prefix}{key}")
        current = getattr(target, key)
        if isinstance(current, bool) or value is None:
            setattr(target, key, value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{prefix}{key} must be an integer")
            setattr(target, key, value)
        elif isinstance(current, float) and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            setattr(target, key, float(value))
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"{prefix}{key} must be a string")
            setattr(target, key, value)
        elif isinstance(current, list):
            if not isinstance(value, list):
                raise ConfigError(f"{prefix}{key} must be a list")
            setattr(target, key, value)
        else:
            setattr(target, key, value)


def config_from_dict(data: dict) -> Config:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    cfg = Config()
    for key, value in data.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("seed must be an integer")
            cfg.seed = value
        elif key in _SECTION_TYPES and key != "seed":
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"section {key} must be a mapping")
            _fill(getattr(cfg, key), value, f"{key}.")
        else:
            raise ConfigError(f"unknown key: {key}")
    validate_config(cfg)
    return cfg


def apply_override(data: dict, item: str):
    """Apply a `section.key=value` override to the raw mapping in place."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value: {item!r}")
    dotted, raw = item.split("=", 1)
    parts = dotted.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key: {dotted!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad override value {raw!r}: {exc}") from exc
    node = data
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r} descends into a scalar")
        node = nxt
    node[parts[-1]] = value


def load_config(path=None, overrides=()) -> Config:
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError("configuration root must be a mapping")
            data = loaded
    for item in overrides:
        apply_override(data, item)
    return config_from_dict(data)


def validate_config(cfg: Config):
    if cfg.platform.fare_per_km < 0:
        raise ConfigError("platform.fare_per_km must be non-negative")
    if cfg.platform.cost_per_km < 0:
        raise ConfigError("platform.cost_per_km must be non-negative")
    if cfg.demand.scale_factor <= 0:
        raise ConfigError("demand.scale_factor must be positive")
    if cfg.demand.holdout_days < 0:
        raise ConfigError("demand.holdout_days must be non-negative")
    if cfg.sim.driver_count < 1:
        raise ConfigError("sim.driver_count must be at least 1")
    if cfg.sim.weeks < 1:
        raise ConfigError("sim.weeks must be at least 1")
    if not 0 <= cfg.sim.start_dow <= 6:
        raise ConfigError("sim.start_dow must be in 0..6")
    if cfg.agent.atom_count < 2:
        raise ConfigError("agent.atom_count must be at least 2")
    if not 0.0 <= cfg.agent.gamma <= 1.0:
        raise ConfigError("agent.gamma must be in [0, 1]")
    if not 0.0 <= cfg.agent.epsilon <= 1.0:
        raise ConfigError("agent.epsilon must be in [0, 1]")
    if cfg.evaluate.replications < 1:
        raise ConfigError("evaluate.replications must be at least 1")
    init = cfg.sim.initial_weekly_trips
    if init is not None:
        ok_scalar = isinstance(init, int) and not isinstance(init, bool)
        ok_list = (isinstance(init, list) and init
                   and all(isinstance(v, int) and not isinstance(v, bool)
                           for v in init))
        if not (ok_scalar or ok_list):
            raise ConfigError(
                "sim.initial_weekly_trips must be an integer or integer list")


def config_to_dict(cfg: Config) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: Config) -> str:
    """Hash of the resolved configuration, stable across key order."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# builders from sections to domain objects

def build_grid(cfg: Config) -> GridSpec:
    g = cfg.grid
    return GridSpec(width_km=g.width_km, height_km=g.height_km,
                    noise_epsilon_km=g.noise_epsilon_km,
                    origin_lat=g.origin_lat, origin_lon=g.origin_lon)


def build_platform(cfg: Config) -> PlatformParams:
    p = cfg.platform
    try:
        peaks = tuple((int(a), int(b)) for a, b in p.peak_hours)
    except (TypeError, ValueError) as exc:
        raise ConfigError("platform.peak_hours must be [start, end] pairs") from exc
    params = PlatformParams(
        fare_per_km=p.fare_per_km, cost_per_km=p.cost_per_km,
        peak_hours=peaks, peak_fare_multiplier=p.peak_fare_multiplier,
        weekly_reward_amount=p.weekly_reward_amount,
        weekly_target_multiplier=p.weekly_target_multiplier,
        fare_weight=p.fare_weight, cost_weight=p.cost_weight,
        idle_cost_weight=p.idle_cost_weight, bonus_weight=p.bonus_weight,
        idle_cost_per_minute=p.idle_cost_per_minute,
        default_weekly_goal=p.default_weekly_goal)
    params.validate()
    return params


def build_scales(cfg: Config) -> FeatureScales:
    return FeatureScales.for_grid(build_grid(cfg))


def build_bc_config(cfg: Config) -> BcConfig:
    b = cfg.bc
    return BcConfig(iterations=b.iterations,
                    buffer_trajectories=b.buffer_trajectories,
                    batch_size=b.batch_size, eval_fraction=b.eval_fraction)


def build_rl_config(cfg: Config) -> RlConfig:
    r = cfg.rl
    return RlConfig(iterations=r.iterations, exploration=r.exploration,
                    patience=r.patience, batch_size=r.batch_size,
                    buffer_transitions=r.buffer_transitions)


def build_synth_spec(cfg: Config) -> SyntheticLogSpec:
    s = cfg.synth
    policy = SyntheticPolicy(
        weight_pickup_km=s.weight_pickup_km,
        weight_trip_km=s.weight_trip_km,
        weight_minute_of_day=s.weight_minute_of_day,
        weight_trips_to_goal=s.weight_trips_to_goal,
        weight_drop_center_km=s.weight_drop_center_km,
        weight_idle_minutes=s.weight_idle_minutes,
        bias=s.bias)
    try:
        start = datetime.strptime(s.start, TIME_FORMAT)
    except ValueError as exc:
        raise ConfigError(f"synth.start: {exc}") from exc
    return SyntheticLogSpec(
        grid=build_grid(cfg), params=build_platform(cfg), policy=policy,
        driver_count=s.driver_count, days=s.days, start=start,
        offers_per_driver_day=s.offers_per_driver_day,
        trip_km_log_mean=s.trip_km_log_mean,
        trip_km_log_sigma=s.trip_km_log_sigma,
        trip_km_min=s.trip_km_min, trip_km_max=s.trip_km_max,
        speed_kmh=cfg.sim.speed_kmh)
