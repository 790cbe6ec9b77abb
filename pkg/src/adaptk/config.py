"""One declarative config drives every pipeline stage.

Plain-text ``key = value`` sections, parsed strictly: unknown sections or
keys are rejected so a typo cannot silently fall back to a default.  The
same file guarantees that window width, template count, and action-space
size stay consistent across artifacts produced by different stages.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .ppo import PpoConfig
from .rlenv import EnvConfig


class ConfigError(Exception):
    pass


@dataclass
class ParserConfig:
    similarity_threshold: float = 0.5
    depth: int = 4
    format_preset: str = "hdfs"
    id_pattern: str = r"blk_-?\d+"


@dataclass
class PartitionConfig:
    mode: str = "session"  # session | sliding
    window_logs: int = 100
    step_logs: int = 20
    window: int = 6  # W, the prediction history width

    def __post_init__(self):
        if self.mode not in ("session", "sliding"):
            raise ConfigError(f"unknown partition mode {self.mode!r}")


@dataclass
class ModelConfig:
    alpha: float = 1.0


@dataclass
class SplitConfig:
    train_ratio: float = 0.8
    # Share of training sequences reserved for fitting the count model;
    # the agent trains on the rest so the ranks it sees reflect the
    # model's behavior on data it has not memorized.
    model_fit_ratio: float = 0.5
    seed: int = 7

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("train_ratio must be in (0, 1)")
        if not 0.0 < self.model_fit_ratio < 1.0:
            raise ConfigError("model_fit_ratio must be in (0, 1)")


@dataclass
class WorkloadConfig:
    n_templates: int = 48
    n_sequences: int = 5000
    cycle_size: int = 24
    noise_size: int = 8
    rank_gap: int = 8
    anomaly_rate: float = 0.08
    seq_len_min: int = 14
    seq_len_max: int = 20
    anomaly_kind: str = "event-substitution"
    seed: int = 0


@dataclass
class TrainConfig:
    max_env_steps: int = 300_000
    plateau_patience: int = 0  # 0 disables the plateau stop
    plateau_delta: float = 0.01


@dataclass
class PathsConfig:
    out_dir: str = "out"
    raw_log: str = ""  # defaults under out_dir when empty
    truth_sequences: str = ""
    truth_templates: str = ""
    labels: str = ""
    templates: str = ""
    structured: str = ""
    sequences: str = ""
    train_sequences: str = ""
    agent_sequences: str = ""
    test_sequences: str = ""
    model: str = ""
    sweep: str = ""
    policy: str = ""
    curve: str = ""
    metrics: str = ""

    _DEFAULTS = {
        "raw_log": "raw.log",
        "truth_sequences": "truth_sequences.tsv",
        "truth_templates": "truth_templates.tsv",
        "labels": "labels.tsv",
        "templates": "templates.tsv",
        "structured": "structured.tsv",
        "sequences": "sequences.tsv",
        "train_sequences": "train_sequences.tsv",
        "agent_sequences": "agent_sequences.tsv",
        "test_sequences": "test_sequences.tsv",
        "model": "count_model.txt",
        "sweep": "sweep.tsv",
        "policy": "policy.bin",
        "curve": "curve.tsv",
        "metrics": "metrics.txt",
    }

    def resolve(self, name: str) -> Path:
        explicit = getattr(self, name)
        if explicit:
            return Path(explicit)
        return Path(self.out_dir) / self._DEFAULTS[name]


@dataclass
class RunConfig:
    parser: ParserConfig = field(default_factory=ParserConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTIONS = {
    "parser": ParserConfig,
    "partition": PartitionConfig,
    "model": ModelConfig,
    "split": SplitConfig,
    "workload": WorkloadConfig,
    "env": EnvConfig,
    "ppo": PpoConfig,
    "train": TrainConfig,
    "paths": PathsConfig,
}


def _convert(raw: str, target_type, key: str):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw.strip()
    if target_type == Optional[float] or target_type == "Optional[float]":
        stripped = raw.strip().lower()
        return None if stripped in ("", "none") else float(raw)
    if target_type == tuple[int, int] or target_type == "tuple[int, int]":
        parts = [int(p) for p in raw.replace(",", " ").split()]
        if len(parts) != 2:
            raise ConfigError(f"{key}: expected two integers")
        return (parts[0], parts[1])
    raise ConfigError(f"{key}: unsupported config field type {target_type!r}")


def load_config(path, overrides: Optional[dict[str, dict[str, str]]] = None) -> RunConfig:
    """Parse and validate an INI run config; raises ConfigError on junk."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    sections: dict[str, object] = {}
    data: dict[str, dict[str, str]] = {
        name: dict(parser.items(name)) for name in parser.sections()
    }
    if overrides:
        for section, values in overrides.items():
            data.setdefault(section, {}).update(values)
    for name, raw_values in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        cls = _SECTIONS[name]
        fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
        kwargs = {}
        for key, raw in raw_values.items():
            if key not in fields or key.startswith("_"):
                raise ConfigError(f"unknown key {key!r} in section [{name}]")
            ftype = fields[key].type
            if isinstance(ftype, str):
                ftype = {
                    "bool": bool, "int": int, "float": float, "str": str,
                    "Optional[float]": Optional[float],
                    "tuple[int, int]": tuple[int, int],
                }.get(ftype, ftype)
            try:
                kwargs[key] = _convert(raw, ftype, f"[{name}] {key}")
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
        try:
            sections[name] = cls(**kwargs)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    return RunConfig(**sections)
