"""Dataclass configs for data generation, augmentation, model and training.

Resolution order used by the CLI: dataclass defaults < config file (YAML)
< environment variables (POSEFACTOR_<SECTION>_<FIELD>) < command-line flags.
The fully resolved config is echoed to the run directory before any work
starts, so every run can be reproduced from its echo alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError


@dataclass
class AugConfig:
    """Stochastic augmentation pipeline. Order is fixed: crop-resize ->
    color jitter -> blur -> Sobel. Horizontal flips are deliberately
    excluded: flipping is reserved for pose augmentation, so these ops
    never change the binary pose label."""

    crop: bool = True
    crop_min_side: float = 0.75     # crop window side, fraction of image
    crop_max_side: float = 1.0
    jitter: bool = True
    jitter_prob: float = 0.8
    brightness: float = 0.15        # additive, on [0,1] pixels
    contrast: float = 0.2           # multiplicative around per-image mean
    saturation: float = 0.3         # blend toward grayscale
    blur: bool = True
    blur_prob: float = 0.5
    blur_min_sigma: float = 0.2
    blur_max_sigma: float = 1.2
    sobel: bool = False             # edge-map view; off by default
    sobel_prob: float = 0.2

    def validate(self) -> "AugConfig":
        if not (0.0 < self.crop_min_side <= self.crop_max_side <= 1.0):
            raise ValidationError(
                f"crop side range must satisfy 0 < min <= max <= 1, "
                f"got [{self.crop_min_side}, {self.crop_max_side}]")
        for name in ("jitter_prob", "blur_prob", "sobel_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must be in [0,1], got {p}")
        if self.blur_min_sigma <= 0 or self.blur_max_sigma < self.blur_min_sigma:
            raise ValidationError("blur sigma range invalid")
        return self


@dataclass
class ModelConfig:
    """Encoder/decoder dimensions. ``feature_dim`` is the width of all
    three feature heads; ``backbone_depth`` counts conv layers in the
    backbone (stem + 2 per residual block + feature head)."""

    feature_dim: int = 2048
    backbone_depth: int = 16
    base_channels: int = 64
    decoder_blocks: int = 6
    decoder_base_channels: int = 512
    image_size: int = 64
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.feature_dim <= 0:
            raise ValidationError(f"feature_dim must be > 0, got {self.feature_dim}")
        if self.backbone_depth < 4 or self.backbone_depth % 2 != 0:
            raise ValidationError(
                f"backbone_depth must be even and >= 4, got {self.backbone_depth}")
        if self.decoder_blocks < 1:
            raise ValidationError("decoder_blocks must be >= 1")
        if self.image_size < 16:
            raise ValidationError(f"image_size must be >= 16, got {self.image_size}")
        return self


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 256
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    temperature: float = 0.07       # tau for both contrastive losses
    num_pose_negatives: int = 1     # M
    seed: int = 0
    preset: str = "paper"           # {"paper", "toy"}
    # loss toggles for ablations; face contrastive learning is always on
    use_dis: bool = True
    use_orth: bool = True
    use_pose: bool = True
    use_dwa: bool = True
    # numerics / logging
    deterministic: bool = True
    dwa_temperature: float = 2.0
    orth_normalize: bool = True     # L2-normalize rows before the dot product
    pose_include_positive: bool = False  # add the positive term to the Eq-style denominator
    probe_epochs: int = 300
    log_every: int = 1

    def validate(self) -> "TrainConfig":
        positive = {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "lr0": self.lr0, "temperature": self.temperature,
            "num_pose_negatives": self.num_pose_negatives,
            "dwa_temperature": self.dwa_temperature,
            "probe_epochs": self.probe_epochs,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValidationError(f"{name} must be in [0,1), got {b}")
        if self.preset not in ("paper", "toy"):
            raise ValidationError(f"unknown preset {self.preset!r}")
        return self


@dataclass
class DataConfig:
    n_images: int = 2000
    seed: int = 0
    num_identities: int = 16
    num_expressions: int = 4
    min_abs_yaw: float = 0.15       # yaw = 0 is excluded so sign(yaw) stays defined
    test_fraction: float = 0.2

    def validate(self) -> "DataConfig":
        if self.n_images < 1:
            raise ValidationError(f"n_images must be >= 1, got {self.n_images}")
        if self.num_identities < 2 or self.num_expressions < 2:
            raise ValidationError("need at least 2 identities and 2 expressions")
        if not 0.0 < self.min_abs_yaw < 1.0:
            raise ValidationError("min_abs_yaw must be in (0,1)")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must be in (0,1)")
        return self


def toy_model_config(seed: int = 0) -> ModelConfig:
    """Reduced preset sized so the whole suite runs on a desktop CPU."""
    return ModelConfig(feature_dim=128, backbone_depth=8, base_channels=24,
                       decoder_base_channels=128, seed=seed)


def toy_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(epochs=30, batch_size=32, seed=seed, preset="toy")


def model_config_for_preset(preset: str, seed: int = 0) -> ModelConfig:
    if preset == "toy":
        return toy_model_config(seed)
    return ModelConfig(seed=seed)


def train_config_for_preset(preset: str, seed: int = 0) -> TrainConfig:
    if preset == "toy":
        return toy_train_config(seed)
    return TrainConfig(seed=seed, preset="paper")


@dataclass
class RunConfig:
    """Merged view of everything one command needs."""

    data: DataConfig = field(default_factory=DataConfig)
    aug: AugConfig = field(default_factory=AugConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        self.data.validate()
        self.aug.validate()
        self.model.validate()
        self.train.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


ENV_PREFIX = "POSEFACTOR"

_SECTIONS = {"data": DataConfig, "aug": AugConfig, "model": ModelConfig,
             "train": TrainConfig}


def _coerce(raw: str, target_type: type) -> Any:
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"cannot parse boolean from {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def env_overrides(environ=None) -> dict:
    """Collect POSEFACTOR_<SECTION>_<FIELD> variables into a nested dict."""
    environ = os.environ if environ is None else environ
    result: dict = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            key = f"{ENV_PREFIX}_{section.upper()}_{f.name.upper()}"
            if key in environ:
                result.setdefault(section, {})[f.name] = _coerce(
                    environ[key], f.type if isinstance(f.type, type) else type(f.default))
    return result


def _apply_overrides(cfg: RunConfig, overrides: dict, source: str) -> None:
    for section, values in overrides.items():
        if section not in _SECTIONS:
            raise ValidationError(f"unknown config section {section!r} (from {source})")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for name, value in values.items():
            if name not in known:
                raise ValidationError(
                    f"unknown config key {section}.{name} (from {source})")
            current = getattr(target, name)
            if isinstance(value, str) and not isinstance(current, str):
                value = _coerce(value, type(current))
            setattr(target, name, value)


def resolve_run_config(config_file: str | os.PathLike | None = None,
                       env: dict | None = None,
                       flag_overrides: dict | None = None,
                       preset: str | None = None) -> RunConfig:
    """Build the final RunConfig: defaults < preset < file < env < flags."""
    cfg = RunConfig()
    if preset:
        cfg.model = model_config_for_preset(preset)
        cfg.train = train_config_for_preset(preset)
    if config_file is not None:
        loaded = yaml.safe_load(Path(config_file).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValidationError(f"config file {config_file} must hold a mapping")
        _apply_overrides(cfg, loaded, f"file {config_file}")
    _apply_overrides(cfg, env_overrides(env), "environment")
    if flag_overrides:
        _apply_overrides(cfg, flag_overrides, "flags")
    return cfg.validate()


def echo_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    """Write the resolved config to ``path`` (YAML, stable key order)."""
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def load_echoed_config(path: str | os.PathLike) -> RunConfig:
    cfg = RunConfig()
    _apply_overrides(cfg, yaml.safe_load(Path(path).read_text()), f"echo {path}")
    return cfg.validate()


def config_fingerprint(model: ModelConfig, train: TrainConfig) -> str:
    """Stable hash of the configs that define a training run."""
    payload = json.dumps(
        {"model": dataclasses.asdict(model), "train": dataclasses.asdict(train)},
        sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
