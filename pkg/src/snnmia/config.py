"""Experiment configuration: a strict, versioned JSON document."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "blobs"
    n_per_class: int = 200
    classes: int = 10
    dim: int = 20
    separation: float = 3.0
    images: str | None = None
    labels: str | None = None
    path: str | None = None
    limit: int | None = None

    def __post_init__(self):
        if self.kind not in ("blobs", "idx", "csv"):
            raise ValueError(f"dataset kind must be blobs, idx or csv, not {self.kind!r}")
        if self.kind == "idx" and not (self.images and self.labels):
            raise ValueError("idx datasets need 'images' and 'labels' paths")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv datasets need a 'path'")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "snn"
    hidden: tuple[int, ...] = (64,)
    latencies: tuple[int, ...] = (1,)
    decay: float = 1.0
    threshold: float = 1.0
    u_reset: float = 0.0
    init_gain: float = 1.0
    reference_kind: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "latencies", tuple(self.latencies))
        if self.kind not in ("snn", "ann"):
            raise ValueError(f"model kind must be snn or ann, not {self.kind!r}")
        if self.reference_kind not in (None, "snn", "ann"):
            raise ValueError(f"reference_kind must be snn or ann, not {self.reference_kind!r}")
        if not self.latencies or any(int(t) != t or t < 1 for t in self.latencies):
            raise ValueError("latencies must be a non-empty list of positive integers")
        if len(set(self.latencies)) != len(self.latencies):
            raise ValueError("latencies must be distinct")


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 10
    batch_size: int = 50
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 0.0
    optimizer: str = "sgd"
    surrogate_width: float = 1.0
    overfit: bool = False
    sequential: bool = False


@dataclass(frozen=True)
class DropoutSection:
    enabled: bool = False
    attack: str = "rmia"
    p_grid: tuple[float, ...] = (0.05, 0.1, 0.2)
    n_grid: tuple[int, ...] = (4, 8, 16)

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(self.p_grid))
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        if not self.p_grid or not self.n_grid:
            raise ValueError("dropout grids must be non-empty")


ATTACK_NAMES = ("attack_p", "attack_p_orig", "attack_r", "rmia")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    n_pairs: int = 4
    attacks: tuple[str, ...] = ATTACK_NAMES
    dropout: DropoutSection = field(default_factory=DropoutSection)
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "attacks", tuple(self.attacks))
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        bad = [a for a in self.attacks if a not in ATTACK_NAMES]
        if bad or not self.attacks:
            raise ValueError(f"attacks must be a non-empty subset of {ATTACK_NAMES}; got {bad}")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "schema_version" not in data:
            raise ConfigError("missing schema_version")
        sections = {"dataset": DatasetSpec, "model": ModelConfig,
                    "train": TrainSection, "dropout": DropoutSection}
        for key, sub in sections.items():
            if key in data:
                data[key] = _strict(sub, data[key], key)
        return _strict(cls, data, "config")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self, *, exclude: tuple[str, ...] = ()) -> str:
        d = self.to_dict()
        for key in exclude:
            d.pop(key, None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def config_hash(self) -> str:
        return self.digest(exclude=("output_dir",))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
