"""Configuration dataclasses, the flat key-value config file, and hashing.

The config file is a single flat JSON object. Keys are the dataclass field
names prefixed by section, e.g. ``ulc.width_multiplier``,
``ulc_train.epochs``, ``gag.base_channels``, ``gag_train.lambda_tp``.
Layering order: built-in defaults, then the config file (``--config`` or
the FREENET_CONFIG environment variable), then CLI flag overrides.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from reenact.errors import ConfigurationError

CONFIG_ENV_VAR = "FREENET_CONFIG"


@dataclass
class UlcModelConfig:
    """Landmark converter architecture knobs.

    The default multiplier 1.75 puts the trainable parameter count of the
    converter at ~4.6M.
    """

    width_multiplier: float = 1.75
    encoder_widths: tuple[int, int, int] = (512, 512, 256)  # pre-multiplier
    decoder_widths: tuple[int, int] = (512, 512)  # pre-multiplier
    leaky_slope: float = 0.2
    # Landmark coordinates sit near 0.5 and face-to-face variation is a few
    # percent of that; centering/scaling the inputs and scaling the raw shift
    # keeps the optimization well conditioned.
    input_scale: float = 8.0
    shift_scale: float = 0.05
    # Discriminators get a fraction of the converter's widths; full-width
    # discriminators overpower the converter on small datasets.
    disc_width_factor: float = 0.5

    def scaled_encoder_widths(self) -> tuple[int, ...]:
        return tuple(max(8, round(w * self.width_multiplier)) for w in self.encoder_widths)

    def scaled_decoder_widths(self) -> tuple[int, ...]:
        return tuple(max(8, round(w * self.width_multiplier)) for w in self.decoder_widths)


@dataclass
class GagModelConfig:
    """Geometry-aware generator architecture knobs.

    base_channels=76 puts the generator at ~16.8M trainable parameters.
    """

    base_channels: int = 76
    resblocks_per_stage: int = 3
    stages: int = 3
    landmark_resolution: int = 64
    disc_base_channels: int = 64
    conditional_disc: bool = False  # condition the image discriminator on the landmark image


@dataclass
class UlcLossWeights:
    lambda1: float = 100.0  # point-wise L1
    lambda2: float = 10.0  # cycle consistency
    lambda3: float = 0.1  # adversarial (sum of both discriminator terms)
    weight_d_s: float = 1.0  # relative weight of the pair-similarity term inside lambda3

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigurationError("loss weights must be non-negative")


@dataclass
class GagLossWeights:
    lambda_pix: float = 100.0
    lambda_adv: float = 1.0
    lambda_tp: float = 0.1

    def __post_init__(self):
        if min(self.lambda_pix, self.lambda_adv, self.lambda_tp) < 0:
            raise ConfigurationError("loss weights must be non-negative")


@dataclass
class UlcTrainConfig:
    epochs: int = 1000
    batch_size: int = 16
    lr: float = 3e-4
    betas: tuple[float, float] = (0.99, 0.999)
    decay_every: int = 300  # divide lr by ten every this many epochs
    weights: UlcLossWeights = field(default_factory=UlcLossWeights)
    use_cycle: bool = True
    use_adversarial: bool = True
    # Stratified record tiers (per expression): held-out evaluation records,
    # records visible only as cycle back-conversion targets, and records
    # visible only to the discriminators as real exemplars. Zeros mean the
    # tier is empty and everything else is supervised.
    eval_per_expression: int = 1
    cycle_tier_per_expression: int = 0
    disc_tier_per_expression: int = 0
    split_seed: int = 0
    batches_per_epoch: int = 0  # 0: one pass over the conversion-combo universe
    tail_window: int = 20  # epochs averaged for the reported held-out ACE
    checkpoint_every: int = 0  # 0: only final; N: also every N epochs
    grad_clip: float = 0.0  # 0 disables clipping
    seed: int = 0


@dataclass
class GagTrainConfig:
    epochs: int = 400
    batch_size: int = 4
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    decay_every: int = 120
    weights: GagLossWeights = field(default_factory=GagLossWeights)
    margin: float = 0.3
    triplets_per_step: int = 1
    extractor: str = "pixel"  # 'pixel', 'pixel-scaled', or a path to an extractor weight file
    checkpoint_every: int = 0
    grad_clip: float = 0.0
    seed: int = 0


@dataclass
class ToolkitConfig:
    """Top-level configuration: one section per subsystem."""

    ulc: UlcModelConfig = field(default_factory=UlcModelConfig)
    gag: GagModelConfig = field(default_factory=GagModelConfig)
    ulc_train: UlcTrainConfig = field(default_factory=UlcTrainConfig)
    gag_train: GagTrainConfig = field(default_factory=GagTrainConfig)


_SECTIONS = ("ulc", "gag", "ulc_train", "gag_train")
_WEIGHT_FIELDS = {"weights"}


def _coerce(value, target):
    """Coerce a JSON value onto the type of an existing default value."""
    if isinstance(target, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        raise ConfigurationError(f"expected a boolean, got {value!r}")
    if isinstance(target, int) and not isinstance(target, bool):
        return int(value)
    if isinstance(target, float):
        return float(value)
    if isinstance(target, tuple):
        seq = value
        if isinstance(value, str):
            seq = [v for v in value.replace(",", " ").split() if v]
        seq = tuple(type(target[0])(v) for v in seq)
        if len(seq) != len(target):
            raise ConfigurationError(f"expected {len(target)} values, got {len(seq)}")
        return seq
    if isinstance(target, str):
        return str(value)
    raise ConfigurationError(f"unsupported config value type for {value!r}")


def apply_overrides(config: ToolkitConfig, overrides: dict[str, object]) -> ToolkitConfig:
    """Apply flat ``section.field`` overrides; unknown keys are errors."""
    for key, value in overrides.items():
        section_name, _, field_name = key.partition(".")
        if section_name not in _SECTIONS or not field_name:
            raise ConfigurationError(f"unknown config key: {key!r}")
        section = getattr(config, section_name)
        # Loss weights live one level deeper (ulc_train.lambda1 etc.).
        holder = section
        if not hasattr(section, field_name) and hasattr(section, "weights"):
            if hasattr(section.weights, field_name):
                holder = section.weights
        if not hasattr(holder, field_name):
            raise ConfigurationError(f"unknown config key: {key!r}")
        current = getattr(holder, field_name)
        if dataclasses.is_dataclass(current):
            raise ConfigurationError(f"config key {key!r} is a section, not a value")
        setattr(holder, field_name, _coerce(value, current))
    return config


def load_config(
    path: str | Path | None = None, overrides: dict[str, object] | None = None
) -> ToolkitConfig:
    """Build a config from defaults, an optional file, and overrides."""
    config = ToolkitConfig()
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        if env_path:
            path = env_path
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{p}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{p}: config must be a flat JSON object")
        apply_overrides(config, doc)
    if overrides:
        apply_overrides(config, overrides)
    return config


def config_to_flat_dict(config: ToolkitConfig) -> dict[str, object]:
    out: dict[str, object] = {}
    for section_name in _SECTIONS:
        section = getattr(config, section_name)
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            if dataclasses.is_dataclass(value):
                for wf in dataclasses.fields(value):
                    out[f"{section_name}.{wf.name}"] = getattr(value, wf.name)
            elif isinstance(value, tuple):
                out[f"{section_name}.{f.name}"] = list(value)
            else:
                out[f"{section_name}.{f.name}"] = value
    return out


def config_hash(config: ToolkitConfig) -> str:
    """Stable hash of the full configuration, stored in checkpoints."""
    doc = json.dumps(config_to_flat_dict(config), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()
