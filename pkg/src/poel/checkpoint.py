"""Checkpoint container: one file holding codec (and optionally
discriminator) parameters under canonical state-dict names, plus the codec
config header and any training state needed to resume."""

from dataclasses import asdict

import torch

from .adversary import Discriminator, DiscriminatorConfig
from .config import CodecConfig
from .model import CodecModel

FORMAT = "poel-checkpoint-v1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: CodecModel, discriminator: Discriminator | None = None,
                    extra: dict | None = None):
    blob = {
        "format": FORMAT,
        "codec_config": model.cfg.to_dict(),
        "codec": model.state_dict(),
    }
    if discriminator is not None:
        blob["discriminator_config"] = asdict(discriminator.cfg)
        blob["discriminator"] = discriminator.state_dict()
    if extra:
        blob.update(extra)
    torch.save(blob, path)


def load_blob(path) -> dict:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    return blob


def load_model(path, blob: dict | None = None) -> CodecModel:
    blob = blob or load_blob(path)
    cfg = CodecConfig.from_dict(blob["codec_config"])
    model = CodecModel(cfg)
    model.load_state_dict(blob["codec"])
    model.eval()
    return model


def load_discriminator(path, latent_channels: int, blob: dict | None = None) -> Discriminator:
    blob = blob or load_blob(path)
    if "discriminator" not in blob:
        raise CheckpointError(f"{path} holds no discriminator weights")
    disc = Discriminator(latent_channels, DiscriminatorConfig(**blob["discriminator_config"]))
    disc.load_state_dict(blob["discriminator"])
    return disc
