"""Experiment configuration: typed blocks, bundled profiles, JSON round-trip.

A config file is JSON with up to four blocks (airspace, link, rl,
experiment) merged over a named profile; every key carries its unit in
its name where one applies. A manifest written by a CLI command wraps
the fully resolved config and can be passed back as --config to
reproduce the run byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .netmodel import LinkParams, RateTable
from .scenario import AirspaceSpec, spec_from_dict, spec_to_dict

PROFILES = ("desk", "paper")


class ConfigError(ValueError):
    """Configuration file or values are invalid."""


@dataclass(frozen=True)
class RLConfig:
    """Learning hyperparameters shared by both learned policies."""

    k_candidates: int = 10
    t_max: int = 50
    gamma: float = 1.0
    learning_rate: float = 1e-4
    tau: float = 1e-3
    batch_size: int = 32
    replay_capacity: int = 100_000
    eps_full_explore: int = 100
    eps_decay: int = 400
    eps_floor: float = 0.1
    fail_penalty_ms: float = 1000.0
    episodes: int = 3000
    dqn_hidden: tuple[int, ...] = (100, 100)
    dvn_hidden: tuple[int, ...] = (50, 50)

    def __post_init__(self):
        object.__setattr__(self, "dqn_hidden", tuple(self.dqn_hidden))
        object.__setattr__(self, "dvn_hidden", tuple(self.dvn_hidden))
        if self.k_candidates <= 0 or self.t_max <= 0 or self.episodes <= 0:
            raise ConfigError("k_candidates, t_max and episodes must be positive")
        if self.batch_size <= 0 or self.replay_capacity < self.batch_size:
            raise ConfigError("replay capacity must hold at least one batch")
        if not 0.0 <= self.eps_floor <= 1.0:
            raise ConfigError("eps_floor must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    airspace: AirspaceSpec = field(default_factory=AirspaceSpec)
    link: LinkParams = field(default_factory=LinkParams)
    rl: RLConfig = field(default_factory=RLConfig)
    policies: tuple[str, ...] = ("optimal", "gpsr", "dqn", "dvn")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    congested_fraction: float = 0.2
    congested_queue_ms: float = 50.0
    n_snapshots: int = 2000
    train_fraction: float = 0.5
    window_hours: float = 12.0
    dataset_seed: int = 0
    eval_episodes: int = 1000
    eval_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.policies:
            raise ConfigError("at least one policy required")
        unknown = set(self.policies) - {"optimal", "gpsr", "dqn", "dvn"}
        if unknown:
            raise ConfigError(f"unknown policies: {sorted(unknown)}")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if not 0.0 <= self.congested_fraction <= 1.0:
            raise ConfigError("congested_fraction must lie in [0, 1]")
        if self.congested_queue_ms < 0:
            raise ConfigError("congested_queue_ms must be non-negative")
        if self.eval_episodes <= 0 or self.n_snapshots < 2:
            raise ConfigError("eval_episodes and n_snapshots must be positive")

    @property
    def learned_policies(self) -> tuple[str, ...]:
        return tuple(p for p in self.policies if p in ("dqn", "dvn"))


def _link_to_dict(link: LinkParams) -> dict:
    return {
        "packet_size_kb": link.packet_size_kb,
        "speed_of_light_km_per_ms": link.speed_of_light_km_per_ms,
        "train_queue_delay_ms": link.train_queue_delay_ms,
        "effective_earth_factor": link.effective_earth_factor,
        "rate_table_km_mbps": [list(b) for b in link.rate_table.buckets],
    }


def _link_from_dict(d: dict) -> LinkParams:
    return LinkParams(
        packet_size_kb=d["packet_size_kb"],
        speed_of_light_km_per_ms=d["speed_of_light_km_per_ms"],
        train_queue_delay_ms=d["train_queue_delay_ms"],
        effective_earth_factor=d["effective_earth_factor"],
        rate_table=RateTable(tuple(tuple(b) for b in d["rate_table_km_mbps"])),
    )


def _rl_to_dict(rl: RLConfig) -> dict:
    return {
        "k_candidates": rl.k_candidates,
        "t_max": rl.t_max,
        "gamma": rl.gamma,
        "learning_rate": rl.learning_rate,
        "tau": rl.tau,
        "batch_size": rl.batch_size,
        "replay_capacity": rl.replay_capacity,
        "eps_full_explore": rl.eps_full_explore,
        "eps_decay": rl.eps_decay,
        "eps_floor": rl.eps_floor,
        "fail_penalty_ms": rl.fail_penalty_ms,
        "episodes": rl.episodes,
        "dqn_hidden": list(rl.dqn_hidden),
        "dvn_hidden": list(rl.dvn_hidden),
    }


def to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "airspace": spec_to_dict(cfg.airspace),
        "link": _link_to_dict(cfg.link),
        "rl": _rl_to_dict(cfg.rl),
        "experiment": {
            "policies": list(cfg.policies),
            "seeds": list(cfg.seeds),
            "congested_fraction": cfg.congested_fraction,
            "congested_queue_ms": cfg.congested_queue_ms,
            "n_snapshots": cfg.n_snapshots,
            "train_fraction": cfg.train_fraction,
            "window_hours": cfg.window_hours,
            "dataset_seed": cfg.dataset_seed,
            "eval_episodes": cfg.eval_episodes,
            "eval_seed": cfg.eval_seed,
        },
    }


def from_dict(d: dict) -> ExperimentConfig:
    blocks = set(d) - {"airspace", "link", "rl", "experiment"}
    if blocks:
        raise ConfigError(f"unknown config blocks: {sorted(blocks)}")
    try:
        airspace = spec_from_dict(d["airspace"])
        link = _link_from_dict(d["link"])
        rl = RLConfig(**d["rl"])
        return ExperimentConfig(airspace=airspace, link=link, rl=rl,
                                **d["experiment"])
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def default_config(profile: str = "desk") -> ExperimentConfig:
    """Bundled profiles: `desk` finishes on a laptop, `paper` is full scale."""
    if profile == "paper":
        return ExperimentConfig(
            airspace=AirspaceSpec(),
            rl=RLConfig(episodes=10_000),
            n_snapshots=2000,
        )
    if profile == "desk":
        return ExperimentConfig(
            airspace=AirspaceSpec(n_airplanes=50),
            rl=RLConfig(episodes=3000),
            n_snapshots=200,
        )
    raise ConfigError(f"unknown profile {profile!r} (choose from {PROFILES})")


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path, profile: str = "desk") -> ExperimentConfig:
    """Config file merged over the profile defaults; accepts manifests too."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "config" in data:  # manifest written by a previous run
        data = data["config"]
        return from_dict(data)
    profile = data.pop("profile", profile)
    base = to_dict(default_config(profile))
    return from_dict(_deep_merge(base, data))


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("ascii")).hexdigest()
