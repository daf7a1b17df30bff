"""Dataclass configs and the sectioned TOML file that fills them.

Precedence, lowest to highest: dataclass defaults, config file, command-line flags.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .twin_sim import ConfigError, ScenarioConfig


@dataclass
class IngestConfig:
    bbox: tuple[float, float, float, float] = (28.456847, 40.103140, 29.388351, 40.318912)
    gap_threshold: float = 1800.0
    outlier_cutoff: float = 3.5
    start: str | None = None
    end: str | None = None
    strict: bool = False


@dataclass
class ClusterConfig:
    k: int = 10
    seed: int = 0
    cell_resolution: int = 4
    max_iter: int = 300
    tol: float = 1e-6
    n_init: int = 10
    som_lr0: float = 0.5
    som_sigma0: float = 0.1
    som_epochs: int = 100
    # which labelling feeds the POI table
    method: str = "kmeans"


@dataclass
class GeocodeConfig:
    url: str | None = None
    user_agent: str | None = None
    zoom: int = 18
    cache: str | None = None
    stub: str | None = None
    offline: bool = False
    min_interval: float = 1.0


@dataclass
class SweepConfig:
    deployments: list[str] = field(default_factory=lambda: ["physical", "edge", "cloud", "hybrid"])
    links: list[str] = field(default_factory=lambda: ["cellular", "wifi"])
    n_list: list[int] = field(default_factory=lambda: [40, 80, 120, 160, 200, 240, 300])
    workers: int = 1


@dataclass
class AppConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    geocode: GeocodeConfig = field(default_factory=GeocodeConfig)

    def digest(self) -> str:
        return config_hash(self)


def _coerce(section: str, name: str, default, value):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, (tuple, list)):
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {name} must be a list")
        return type(default)(value)
    return value


def apply_overrides(obj, section: str, values: dict):
    """Type-checked ``dataclasses.replace``; unknown keys are errors."""
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        updates[key] = _coerce(section, key, getattr(obj, key), value)
    try:
        return dataclasses.replace(obj, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, base: AppConfig | None = None) -> AppConfig:
    cfg = base or AppConfig()
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section, values in data.items():
        if section not in {f.name for f in fields(AppConfig)}:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        setattr(cfg, section, apply_overrides(getattr(cfg, section), section, values))
    return cfg


def to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    return obj


def config_hash(obj) -> str:
    blob = json.dumps(to_plain(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_toml() -> str:
    """A fully populated config file with every default written out."""
    lines = []
    for section, obj in to_plain(AppConfig()).items():
        lines.append(f"[{section}]")
        for k, v in obj.items():
            if v is None:
                lines.append(f"# {k} =")
            else:
                lines.append(f"{k} = {json.dumps(v)}")
        lines.append("")
    return "\n".join(lines)
