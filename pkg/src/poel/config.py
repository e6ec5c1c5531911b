"""Configuration objects shared across the codec, losses and training."""

import hashlib
import json
from dataclasses import asdict, dataclass, field

# Channel partition of the latent tensor into the five unevenly sized
# context groups, keyed by total latent channels.
GROUP_SIZES = {
    80: (8, 8, 16, 16, 32),
    320: (16, 16, 32, 64, 192),
}

# Rate presets exposed on the CLI. Values are target bits per pixel.
RATE_PRESETS = {
    "q075": 0.075,
    "q150": 0.15,
    "q300": 0.30,
}

# Lagrangian defaults for MSE pretraining, per rate preset. These only fix
# the initial operating point; the finetuning multiplexer does the steering.
PRETRAIN_LAMBDA = {
    "q075": 110.0,
    "q150": 225.0,
    "q300": 450.0,
}

# Reference settings used by full-scale training runs, kept for
# documentation. Desk-scale runs use TrainConfig defaults instead.
FULL_SCALE_REFERENCE = {
    "batch_size": 128,
    "base_lr": 8e-4,
    "epochs": 500,
    "lr_schedule": "cosine",
}


@dataclass(frozen=True)
class CodecConfig:
    """Channel widths of the transforms.

    latent_channels must admit the five-group partition in GROUP_SIZES
    (or an explicit partition passed to make_group_layout).
    """

    latent_channels: int = 80
    backbone_channels: int = 64
    hyper_channels: int = 48
    scale: str = "toy"
    res_blocks_per_stage: int = 1

    def __post_init__(self):
        if self.latent_channels <= 0 or self.backbone_channels <= 0 or self.hyper_channels <= 0:
            raise ValueError("channel counts must be positive")
        if self.scale not in ("toy", "full"):
            raise ValueError(f"unknown scale {self.scale!r}")

    @classmethod
    def toy(cls) -> "CodecConfig":
        return cls()

    @classmethod
    def full(cls) -> "CodecConfig":
        return cls(latent_channels=320, backbone_channels=192, hyper_channels=192,
                   scale="full", res_blocks_per_stage=3)

    @classmethod
    def from_scale(cls, scale: str) -> "CodecConfig":
        return cls.toy() if scale == "toy" else cls.full()

    @property
    def scale_id(self) -> int:
        return 0 if self.scale == "toy" else 1

    @classmethod
    def from_scale_id(cls, scale_id: int) -> "CodecConfig":
        if scale_id == 0:
            return cls.toy()
        if scale_id == 1:
            return cls.full()
        raise ValueError(f"unknown scale id {scale_id}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        return cls(**d)


@dataclass
class LossWeights:
    """Coefficients of the composite finetuning objective.

    rate_above applies when the batch bpp is at or above target_bpp,
    rate_below when it is under; rate_above > rate_below so overshooting
    the rate budget is penalized harder. Defaults are tuned for the toy
    scale: the style term is quartic in feature magnitude, so its weight
    must stay small for stable desk-scale finetuning.
    """

    perceptual: float = 40.0
    reconstruction: float = 5.0
    adversarial: float = 0.01
    style: float = 1e-4
    rate_above: float = 1.5
    rate_below: float = 0.1
    target_bpp: float = 0.30
    charbonnier_eps: float = 1e-6

    def __post_init__(self):
        for name in ("perceptual", "reconstruction", "adversarial", "style"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} weight must be nonnegative")
        if not self.rate_above > self.rate_below > 0:
            raise ValueError("require rate_above > rate_below > 0")
        if self.target_bpp <= 0:
            raise ValueError("target_bpp must be positive")


@dataclass
class TrainConfig:
    phase: str = "mse_pretrain"  # or "perceptual_finetune"
    epochs: int = 1
    steps_per_epoch: int = 100
    batch_size: int = 4
    base_lr: float = 8e-4
    lr_schedule: str = "cosine"  # cosine annealing to ~0 over all steps
    crop_size: int = 128
    seed: int = 0
    rate_target: float = 0.30
    mse_lambda: float = 520.0
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only

    def __post_init__(self):
        if self.phase not in ("mse_pretrain", "perceptual_finetune"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:8]
