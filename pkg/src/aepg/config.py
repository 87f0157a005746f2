"""Experiment configuration: nested dataclasses mirrored by a flat-sectioned JSON file."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import losses, schedules


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str = "blobs"  # blobs | idx | csv
    n_classes: int = 20
    dim: int = 32
    n_per_class: int = 300
    spread: float = 1.0
    margin: float = 3.0
    informative_dim: int | None = 8
    pretext_classes: int = 10
    seed: int | None = None  # None: derive from the run seed
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: int = -1


@dataclass
class SplitConfig:
    n_tasks: int = 5


@dataclass
class ModelConfig:
    depth: int = 2
    width: int = 128
    rank: int = 0
    pretrain: bool = True
    pretrain_epochs: int = 20
    head_std: float = 0.001


@dataclass
class LossConfig:
    kind: str = "aEPG"
    gamma: float | None = None
    beta: float | None = None
    n_samples: int = 1

    def spec(self) -> losses.LossSpec:
        return losses.LossSpec(self.kind, self.gamma, self.beta, self.n_samples)


@dataclass
class ScheduleConfig:
    kind: str = "sigmoid"
    tau: float = 6.0
    scope: str = "per-task"
    alpha: float = 1.0  # constant schedule value


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # adam | sgd
    lr: float = 5e-4
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eta: float = 0.0
    epochs: int = 20
    batch_size: int = 64
    freeze_frac: float = 0.6
    train_mask: str = "task"  # task: softmax over the current task's classes; seen: all seen classes
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str | None = None

    def validate(self) -> ExperimentConfig:
        try:
            self.loss.spec()
            schedules.AnnealState(self.schedule.kind, self.schedule.tau, scope=self.schedule.scope,
                                  value=self.schedule.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.data.kind in ("blobs", "idx", "csv"), f"unknown data.kind {self.data.kind!r}"),
            (self.optimizer.kind in ("adam", "sgd"), f"unknown optimizer.kind {self.optimizer.kind!r}"),
            (bool(self.seeds), "seeds must be non-empty"),
            (0.0 <= self.eta <= 1.0, "eta must lie in [0, 1]"),
            (self.epochs >= 1 and self.batch_size >= 1, "epochs and batch_size must be positive"),
            (0.0 <= self.freeze_frac <= 1.0, "freeze_frac must lie in [0, 1]"),
            (self.train_mask in ("task", "seen"), f"unknown train_mask {self.train_mask!r}"),
            (self.split.n_tasks >= 1, "split.n_tasks must be positive"),
            (self.optimizer.lr >= 0, "optimizer.lr must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def replace(self, key: str, value) -> ExperimentConfig:
        """Copy with one dotted key (``"schedule.tau"``) set."""
        d = self.to_dict()
        target = d
        *parents, leaf = key.split(".")
        for p in parents:
            if p not in target or not isinstance(target[p], dict):
                raise ConfigError(f"unknown config key {key!r}")
            target = target[p]
        if leaf not in target:
            raise ConfigError(f"unknown config key {key!r}")
        target[leaf] = value
        return from_dict(d)


_SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "schedule": ScheduleConfig,
    "optimizer": OptimizerConfig,
}


def from_dict(d: dict[str, Any]) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in d.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - fields
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    if "seeds" in kwargs:
        kwargs["seeds"] = [int(s) for s in kwargs["seeds"]]
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    try:
        return from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
