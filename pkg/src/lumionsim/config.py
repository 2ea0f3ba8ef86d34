"""Scenario configuration: schema, defaults, digest, run manifest.

Configs are JSON documents validated strictly: unknown keys are rejected
so typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from lumionsim.errors import ConfigError
from lumionsim.fabric import SPARE_OFFSETS, SliceDistribution, parse_shape

TOOL_VERSION = "0.1.0"

DEFAULT_SLICE_WEIGHTS = {
    "1x1x1": 1.0,
    "2x2x1": 1.0,
    "2x2x2": 1.0,
    "4x2x2": 1.0,
    "4x4x2": 1.0,
    "4x4x4": 1.0,
}

# Documented guess: the probability ranges swept by the spare-sizing
# command, ordered by midpoint.
DEFAULT_PROBABILITY_RANGES = [[0.001, 0.01], [0.01, 0.03], [0.03, 0.05]]


@dataclass
class TimelineSpec:
    t_detect: float = 0.0
    t_spare_search: float = 0.0
    t_reconfigure: float = 1.0
    t_software_restart: float = 0.0


@dataclass
class MeshSpec:
    rows: int = 256
    cols: int = 256
    merge: bool = True
    requests: int | list = 64  # a count of random port pairs, or explicit pairs


@dataclass
class ScenarioConfig:
    """Every knob of the planner and simulator, with documented defaults."""

    seed: int = 7
    racks: int = 1024
    slice_distribution: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SLICE_WEIGHTS)
    )
    failure_count_range: list[int] = field(default_factory=lambda: [1, 4])
    spare_placement: list[int] = field(default_factory=lambda: [0, -1, 1])
    policies: list[str] = field(
        default_factory=lambda: ["lumion", "tpu_migration", "kubernetes"]
    )
    slo_percent: float = 95.0
    srg_granularity: str = "tpu"
    probability_ranges: list[list[float]] = field(
        default_factory=lambda: [list(r) for r in DEFAULT_PROBABILITY_RANGES]
    )
    routing_k: list[int] = field(default_factory=lambda: [5, 10])
    max_path_hops: int = 6
    route_budget_ms: float = 500.0
    fiber_trials: int = 200
    placement_trials: int = 500
    link_bandwidth_gbps: float = 1.0
    fiber_budget: int = 4
    mesh: MeshSpec = field(default_factory=MeshSpec)
    timeline: TimelineSpec = field(default_factory=TimelineSpec)

    def distribution(self) -> SliceDistribution:
        return SliceDistribution.from_dict(self.slice_distribution)

    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.racks < 1:
            raise ConfigError("racks must be at least 1")
        try:
            for shape in self.slice_distribution:
                parse_shape(shape)
            self.distribution()
        except Exception as exc:
            raise ConfigError(f"bad slice_distribution: {exc}") from exc
        lo, hi = self.failure_count_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad failure_count_range {self.failure_count_range}")
        if tuple(self.spare_placement) not in SPARE_OFFSETS:
            raise ConfigError(
                f"spare_placement must be one of {list(SPARE_OFFSETS)}"
            )
        for p in self.policies:
            if p not in ("lumion", "tpu_migration", "kubernetes"):
                raise ConfigError(f"unknown policy {p!r}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        if not 0.0 < self.slo_percent <= 100.0:
            raise ConfigError("slo_percent must be in (0, 100]")
        if self.srg_granularity not in ("tpu", "server"):
            raise ConfigError("srg_granularity must be 'tpu' or 'server'")
        for r in self.probability_ranges:
            if len(r) != 2 or not (0.0 <= r[0] <= r[1] <= 1.0):
                raise ConfigError(f"bad probability range {r}")
        if not self.routing_k or any(k < 1 for k in self.routing_k):
            raise ConfigError("routing_k entries must be >= 1")
        if self.max_path_hops < 1:
            raise ConfigError("max_path_hops must be >= 1")
        if self.route_budget_ms <= 0:
            raise ConfigError("route_budget_ms must be positive")
        if self.fiber_trials < 1:
            raise ConfigError("fiber_trials must be >= 1")
        if self.placement_trials < 1:
            raise ConfigError("placement_trials must be >= 1")
        if self.link_bandwidth_gbps <= 0:
            raise ConfigError("link_bandwidth_gbps must be positive")
        if self.fiber_budget < 0:
            raise ConfigError("fiber_budget must be nonnegative")
        if self.mesh.rows < 1 or self.mesh.cols < 1:
            raise ConfigError("mesh dimensions must be at least 1x1")
        if isinstance(self.mesh.requests, int) and self.mesh.requests < 0:
            raise ConfigError("mesh.requests count must be nonnegative")
        for name in ("t_detect", "t_spare_search", "t_reconfigure", "t_software_restart"):
            if getattr(self.timeline, name) < 0:
                raise ConfigError(f"timeline.{name} must be nonnegative")


def _apply_section(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    raw = dict(raw)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "mesh" in raw:
        raw["mesh"] = _apply_section(MeshSpec, dict(raw["mesh"]), "mesh")
    if "timeline" in raw:
        raw["timeline"] = _apply_section(TimelineSpec, dict(raw["timeline"]), "timeline")
    try:
        config = ScenarioConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_digest(config: ScenarioConfig) -> str:
    """Stable digest of the full effective configuration."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    """Provenance record for a run; written next to the reports."""

    config_digest: str
    tool_version: str
    seed: int
    started_at: str
    finished_at: str = ""

    def to_json(self) -> dict:
        return asdict(self)
