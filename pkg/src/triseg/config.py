"""RunConfig: every knob of the pipeline in one JSON document.

The document carries a schema_version and one section per subsystem; missing
sections or keys fall back to defaults, unknown keys are rejected so typos
cannot silently deactivate an option. ``save_run_config`` writes the fully
resolved form (the "config echo" every output directory receives).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .inference import InferenceConfig
from .model import AsppConfig, BackboneConfig, ModelConfig
from .phantom import PhantomConfig
from .preprocess import AugmentSpec, WindowSpec
from .train import TrainConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    train_seeds: tuple[int, int] = (0, 44)   # inclusive ranges, mirroring a 45/20 split
    test_seeds: tuple[int, int] = (45, 64)
    data_dir: str = "data"

    def __post_init__(self):
        for name, (lo, hi) in (("train_seeds", self.train_seeds), ("test_seeds", self.test_seeds)):
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} range ({lo}, {hi}) is invalid")
        t0, t1 = self.train_seeds
        e0, e1 = self.test_seeds
        if max(t0, e0) <= min(t1, e1):
            raise ValueError("train and test seed ranges overlap")

    def train_list(self) -> list[int]:
        return list(range(self.train_seeds[0], self.train_seeds[1] + 1))

    def test_list(self) -> list[int]:
        return list(range(self.test_seeds[0], self.test_seeds[1] + 1))


@dataclass(frozen=True)
class ModelSection:
    use_attention: bool = True
    decoder_channels: int | None = None
    init_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    window: WindowSpec = field(default_factory=WindowSpec)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    aspp: AsppConfig = field(default_factory=AsppConfig)
    model: ModelSection = field(default_factory=ModelSection)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)

    def model_config(self) -> ModelConfig:
        return ModelConfig(backbone=self.backbone, aspp=self.aspp,
                           use_attention=self.model.use_attention,
                           decoder_channels=self.model.decoder_channels)


# Fields that are tuples in the dataclasses but lists in JSON.
_TUPLE_FIELDS = {
    "train_scales", "stage_channels", "blocks_per_stage", "rates", "scales",
    "class_weights", "train_seeds", "test_seeds", "dims", "n_foci",
    "focus_radius_vox", "focus_intensity_hu", "bone_ring_count",
    "bone_intensity_hu", "vessel_tube_count", "vessel_intensity_hu",
}


def _parse_section(cls, doc: dict, section: str):
    if not isinstance(doc, dict):
        raise ValueError(f"config section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ValueError(f"unknown keys in config section {section!r}: {unknown}")
    kwargs = {}
    for key, value in doc.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


_SECTIONS = {
    "window": WindowSpec,
    "augment": AugmentSpec,
    "backbone": BackboneConfig,
    "aspp": AsppConfig,
    "model": ModelSection,
    "inference": InferenceConfig,
    "train": TrainConfig,
    "dataset": DatasetSpec,
    "phantom": PhantomConfig,
}


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValueError("run config must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"schema_version"})
    if unknown:
        raise ValueError(f"unknown top-level config keys: {unknown}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"config schema_version {version} not understood (expected {SCHEMA_VERSION})")
    sections = {name: _parse_section(cls, doc.get(name, {}), name)
                for name, cls in _SECTIONS.items()}
    return RunConfig(schema_version=version, **sections)


def run_config_to_dict(cfg: RunConfig) -> dict:
    def plain(value):
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {f.name: plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        return value

    doc = {"schema_version": cfg.schema_version}
    for name in _SECTIONS:
        doc[name] = plain(getattr(cfg, name))
    return doc


def load_run_config(path) -> RunConfig:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    return run_config_from_dict(doc)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(run_config_to_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
