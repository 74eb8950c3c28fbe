"""Experiment configuration: one strict JSON document.

Unknown keys anywhere are rejected and ``schema_version`` must match.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1


def _strict(cls, data, where):
    if data is None:
        return cls()
    if isinstance(data, cls):
        # section omitted from the JSON: the dataclass default is already in place
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    return cls(**data)


@dataclass
class GeneratorSpec:
    recipes: object = "default"
    samples_per_class: int = 25
    k_points: int = 256
    profile: str = "clean"
    seed: int = 0


@dataclass
class DataSource:
    path: str | None = None
    generator: GeneratorSpec | None = None

    @classmethod
    def from_dict(cls, data, where):
        if data is None:
            return None
        src = _strict(cls, data, where)
        if (src.path is None) == (src.generator is None):
            raise ConfigError(f"{where}: give exactly one of 'path' or 'generator'")
        if src.generator is not None:
            src.generator = _strict(GeneratorSpec, src.generator, f"{where}.generator")
        return src


@dataclass
class DataConfig:
    source: DataSource | None = None
    extra_unlabeled: DataSource | None = None
    target: DataSource | None = None
    # target class name -> source class name, for label spaces that only partly overlap
    class_map: dict | None = None

    @classmethod
    def from_dict(cls, data):
        d = _strict(cls, data, "data")
        d.source = DataSource.from_dict(d.source, "data.source")
        d.extra_unlabeled = DataSource.from_dict(d.extra_unlabeled, "data.extra_unlabeled")
        d.target = DataSource.from_dict(d.target, "data.target")
        if d.source is None:
            raise ConfigError("data.source is required")
        return d


@dataclass
class ScenarioConfig:
    kind: str = "SD"
    labeled_fraction: float = 1.0
    tl_union: bool = False
    test_fraction: float = 0.2


@dataclass
class ModelConfig:
    per_point_mlp_widths: list = field(default_factory=lambda: [64, 64, 64, 128, 1024])
    head_widths_classification: list = field(default_factory=lambda: [512, 256])
    head_widths_per_point: list = field(default_factory=lambda: [512, 256, 128])
    dropout_rate: float = 0.3
    local_feature_layer: int = 1
    batch_norm: bool = False


@dataclass
class TrainSection:
    alpha: float = 0.6
    puzzle_l: int = 3
    batch_size: int = 64
    epochs: int = 60
    optimizer: str = "adam"
    decay_every: int = 20
    augment_jitter: bool = True
    augment_rotate: bool = True
    jitter_sigma: float = 0.01
    jitter_clip: float = 0.05


@dataclass
class SweepConfig:
    alphas: list = field(default_factory=lambda: [0.4, 0.6, 0.8])
    ls: list = field(default_factory=lambda: [2, 3, 4])
    repeats: int = 3
    include_baseline: bool = True


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    task: str = "classification"
    output_dir: str = "runs/experiment"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
        cfg = _strict(cls, data, "config")
        cfg.scenario = _strict(ScenarioConfig, cfg.scenario, "scenario")
        cfg.data = DataConfig.from_dict(cfg.data)
        cfg.model = _strict(ModelConfig, cfg.model, "model")
        cfg.train = _strict(TrainSection, cfg.train, "train")
        cfg.sweep = _strict(SweepConfig, cfg.sweep, "sweep")
        return cfg

    def to_dict(self):
        return asdict(self)


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return ExperimentConfig.from_dict(data)
