"""Experiment configuration: JSON schema, defaults, validation, round-trip.

The schema is closed: unknown keys are rejected so that config drift fails
loudly. An empty file yields the built-in defaults (four organizations, the
standard parameter distributions, exponential-saturation precision).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Config parse or validation failure; message names the offending field."""


@dataclass
class OrgParamSpec:
    """Distributions (mean, stddev) from which org economics are drawn."""

    profit_mean: float = 1000.0
    profit_std: float = 10.0
    energy_mean: float = 4.0
    energy_std: float = 0.2
    dataset_mean: float = 2000.0
    dataset_std: float = 50.0
    comm_mean: float = 0.5
    comm_std: float = 0.02


@dataclass
class AlphaConfig:
    alpha0: float = 5.0
    alpha_max: float | None = None  # defaults to 4 * alpha0
    mode: str = "adaptive_gain"

    def resolved_max(self) -> float:
        return 4.0 * self.alpha0 if self.alpha_max is None else self.alpha_max


@dataclass
class PrecisionSpec:
    kind: str = "exp_saturation"  # exp_saturation | log_saturation | micro_fl
    p_lo: float = 0.1
    p_hi: float = 0.95
    beta: float = 3.0
    # micro_fl only:
    feature_dim: int = 10
    class_separation: float = 4.0
    test_set_size: int = 2000
    local_epochs: int = 5
    learning_rate: float = 0.5


@dataclass
class TrainerSpec:
    episodes: int = 30
    batch_size: int = 64
    gamma: float = 0.95
    clip_eps: float = 0.2
    actor_lr: float = 0.3
    critic_lr: float = 0.01
    updates_per_batch: int = 4
    action_bins: int = 11
    reward_scale: float = 1e-3


@dataclass
class ExperimentConfig:
    num_orgs: int = 4
    slots_per_episode: int = 256
    window: int = 4
    grid_points: int = 21
    seed: int = 0
    org_params: OrgParamSpec = field(default_factory=OrgParamSpec)
    alpha: AlphaConfig = field(default_factory=AlphaConfig)
    precision: PrecisionSpec = field(default_factory=PrecisionSpec)
    trainer: TrainerSpec = field(default_factory=TrainerSpec)


_SECTIONS = {
    "org_params": OrgParamSpec,
    "alpha": AlphaConfig,
    "precision": PrecisionSpec,
    "trainer": TrainerSpec,
}


def _build_section(cls, data: dict, prefix: str):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {prefix}.{key}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    top_known = {f.name for f in fields(ExperimentConfig)}
    for key in data:
        if key not in top_known:
            raise ConfigError(f"unknown key {key}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    def need(cond: bool, name: str, what: str):
        if not cond:
            raise ConfigError(f"{name} {what}")

    need(cfg.num_orgs >= 2, "num_orgs", "must be >= 2 for game runs")
    need(cfg.slots_per_episode >= 1, "slots_per_episode", "must be >= 1")
    need(cfg.window >= 1, "window", "must be >= 1")
    need(cfg.grid_points >= 2, "grid_points", "must be >= 2")
    op = cfg.org_params
    for name in ("profit_std", "energy_std", "dataset_std", "comm_std"):
        need(getattr(op, name) >= 0, f"org_params.{name}", "must be >= 0")
    for name in ("profit_mean", "dataset_mean"):
        need(getattr(op, name) > 0, f"org_params.{name}", "must be > 0")
    for name in ("energy_mean", "comm_mean"):
        need(getattr(op, name) >= 0, f"org_params.{name}", "must be >= 0")
    need(cfg.alpha.alpha0 >= 0, "alpha.alpha0", "must be >= 0")
    need(cfg.alpha.resolved_max() >= cfg.alpha.alpha0,
         "alpha.alpha_max", "must be >= alpha0")
    need(cfg.alpha.mode in ("adaptive_gain", "constant"),
         "alpha.mode", "must be adaptive_gain or constant")
    pr = cfg.precision
    need(pr.kind in ("exp_saturation", "log_saturation", "micro_fl"),
         "precision.kind", "must be exp_saturation, log_saturation or micro_fl")
    if pr.kind != "micro_fl":
        need(0.0 <= pr.p_lo < pr.p_hi <= 1.0, "precision.p_lo/p_hi",
             "must satisfy 0 <= p_lo < p_hi <= 1")
        need(pr.beta > 0, "precision.beta", "must be > 0")
    else:
        need(pr.feature_dim >= 1, "precision.feature_dim", "must be >= 1")
        need(pr.class_separation > 0, "precision.class_separation", "must be > 0")
        need(pr.test_set_size >= 1, "precision.test_set_size", "must be >= 1")
        need(pr.local_epochs >= 1, "precision.local_epochs", "must be >= 1")
        need(pr.learning_rate > 0, "precision.learning_rate", "must be > 0")
    tr = cfg.trainer
    for name in ("episodes", "batch_size", "updates_per_batch"):
        need(getattr(tr, name) >= 1, f"trainer.{name}", "must be >= 1")
    need(0.0 <= tr.gamma <= 1.0, "trainer.gamma", "must lie in [0, 1]")
    need(tr.clip_eps > 0, "trainer.clip_eps", "must be > 0")
    need(tr.actor_lr > 0, "trainer.actor_lr", "must be > 0")
    need(tr.critic_lr > 0, "trainer.critic_lr", "must be > 0")
    need(tr.action_bins >= 2, "trainer.action_bins", "must be >= 2")
    need(tr.reward_scale > 0, "trainer.reward_scale", "must be > 0")
    need(tr.batch_size <= cfg.slots_per_episode, "trainer.batch_size",
         "must not exceed slots_per_episode")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file; empty file means all defaults."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return ExperimentConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(dump_config(cfg), indent=2, sort_keys=True)
