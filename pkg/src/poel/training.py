"""Two-phase training: MSE pretraining, then perceptual finetuning with
alternating discriminator updates. Desk scale, CPU friendly.

Determinism: the global torch RNG is reseeded from (seed, epoch) at every
epoch start and crop sampling uses its own counter-based generator, so a
run resumed from an epoch checkpoint reproduces the original trajectory
exactly.
"""

import json
from pathlib import Path

import numpy as np
import torch

from .adversary import Discriminator, DiscriminatorConfig
from .checkpoint import load_blob, load_model, save_checkpoint
from .config import CodecConfig, LossWeights, TrainConfig
from .features import FeatureExtractor
from .losses import (LossReport, hinge_adversarial_d, total_objective)
from .model import CodecModel, build_model


class CropSampler:
    """Deterministic random crops from a directory of images.

    Images are decoded once and kept in memory (desk-scale corpora). Batch
    content depends only on (seed, epoch, step).
    """

    def __init__(self, image_dir, crop_size: int, seed: int):
        from .eval_io import list_images, load_image

        self.crop_size = crop_size
        self.seed = seed
        self.images = []
        for path in list_images(image_dir):
            img = load_image(path)
            if img.shape[1] < crop_size or img.shape[2] < crop_size:
                raise ValueError(f"{path} smaller than crop size {crop_size}")
            self.images.append(img)

    def batch(self, epoch: int, step: int, batch_size: int) -> torch.Tensor:
        rng = np.random.default_rng([self.seed, epoch, step])
        crops = []
        for _ in range(batch_size):
            img = self.images[int(rng.integers(len(self.images)))]
            i = int(rng.integers(img.shape[1] - self.crop_size + 1))
            j = int(rng.integers(img.shape[2] - self.crop_size + 1))
            crops.append(img[:, i:i + self.crop_size, j:j + self.crop_size])
        return torch.stack(crops)


def pretrain_step(batch: torch.Tensor, model: CodecModel,
                  optimizer: torch.optim.Optimizer, mse_lambda: float) -> LossReport:
    """One rate-distortion update: loss = bpp + lambda * MSE."""
    out = model(batch)
    mse = ((batch - out.x_hat) ** 2).mean()
    loss = out.bpp + mse_lambda * mse
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return LossReport(perceptual=None, reconstruction=mse.detach(), adversarial=None,
                      style=None, rate_bpp=out.bpp.detach(), rate_weight=mse_lambda,
                      total=loss.detach(), phase="mse_pretrain")


def finetune_step(batch: torch.Tensor, model: CodecModel, discriminator: Discriminator,
                  extractor: FeatureExtractor, optimizer_g: torch.optim.Optimizer,
                  optimizer_d: torch.optim.Optimizer, weights: LossWeights) -> LossReport:
    """One discriminator update (hinge) followed by one codec update.

    The discriminator trains on a detached reconstruction; during the codec
    update its parameters are frozen so the two optimizers touch disjoint
    weights.
    """
    out = model(batch)
    target_hw = batch.shape[-2:]

    cond = discriminator.prepare_condition(out.y_hat, target_hw)
    d_real = discriminator(batch, cond)
    d_fake = discriminator(out.x_hat.detach(), cond)
    loss_d = hinge_adversarial_d(d_real, d_fake)
    optimizer_d.zero_grad()
    loss_d.backward()
    optimizer_d.step()

    discriminator.requires_grad_(False)
    cond_g = discriminator.prepare_condition(out.y_hat, target_hw)
    fake_logits = discriminator(out.x_hat, cond_g)
    report = total_objective(batch, out.x_hat, out.y_hat, out.bpp, fake_logits,
                             extractor, weights)
    optimizer_g.zero_grad()
    report.total.backward()
    optimizer_g.step()
    discriminator.requires_grad_(True)

    report.discriminator = loss_d.detach()
    report.phase = "perceptual_finetune"
    return report.detach()


def _epoch_seed(seed: int, epoch: int) -> int:
    return (seed * 1_000_003 + epoch) % (2 ** 31)


def _make_scheduler(optimizer, cfg: TrainConfig):
    if cfg.lr_schedule == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=max(cfg.total_steps, 1), eta_min=0.0)
    return torch.optim.lr_scheduler.ConstantLR(optimizer, factor=1.0, total_iters=0)


def loss_weights_for(cfg: TrainConfig) -> LossWeights:
    return LossWeights(target_bpp=cfg.rate_target)


def run_training(train_cfg: TrainConfig, dataset_dir, out_dir,
                 codec_cfg: CodecConfig | None = None, init_checkpoint=None,
                 log_name: str = "train_log.jsonl"):
    """Run one training phase; returns the final checkpoint path.

    init_checkpoint resumes codec (and discriminator, if present) weights;
    finetuning normally starts from an MSE-pretrained checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    codec_cfg = codec_cfg or CodecConfig.toy()

    torch.manual_seed(train_cfg.seed)
    start_epoch = 0
    if init_checkpoint is not None:
        blob = load_blob(init_checkpoint)
        model = load_model(init_checkpoint, blob)
        if model.cfg != codec_cfg:
            raise ValueError(f"checkpoint codec config {model.cfg} does not match "
                             f"requested {codec_cfg}")
        model.train()
        start_epoch = int(blob.get("epoch", 0)) if blob.get("phase") == train_cfg.phase else 0
    else:
        model = build_model(codec_cfg, seed=train_cfg.seed)
        model.train()

    finetune = train_cfg.phase == "perceptual_finetune"
    discriminator = extractor = None
    weights = loss_weights_for(train_cfg)
    if finetune:
        discriminator = Discriminator(codec_cfg.latent_channels, DiscriminatorConfig())
        if init_checkpoint is not None and "discriminator" in blob:
            from .checkpoint import load_discriminator

            discriminator = load_discriminator(init_checkpoint, codec_cfg.latent_channels, blob)
        discriminator.train()
        extractor = FeatureExtractor()

    optimizer_g = torch.optim.Adam(model.parameters(), lr=train_cfg.base_lr)
    optimizer_d = (torch.optim.Adam(discriminator.parameters(), lr=train_cfg.base_lr)
                   if finetune else None)
    scheduler_g = _make_scheduler(optimizer_g, train_cfg)
    scheduler_d = _make_scheduler(optimizer_d, train_cfg) if finetune else None
    if init_checkpoint is not None and blob.get("phase") == train_cfg.phase and start_epoch:
        if "optimizer_g" in blob:
            optimizer_g.load_state_dict(blob["optimizer_g"])
            scheduler_g.load_state_dict(blob["scheduler_g"])
        if finetune and "optimizer_d" in blob:
            optimizer_d.load_state_dict(blob["optimizer_d"])
            scheduler_d.load_state_dict(blob["scheduler_d"])

    sampler = CropSampler(dataset_dir, train_cfg.crop_size, train_cfg.seed)
    log_path = out_dir / log_name

    def checkpoint(path, epoch):
        extra = {
            "phase": train_cfg.phase,
            "epoch": epoch,
            "train_config": train_cfg.to_dict(),
            "optimizer_g": optimizer_g.state_dict(),
            "scheduler_g": scheduler_g.state_dict(),
        }
        if finetune:
            extra["optimizer_d"] = optimizer_d.state_dict()
            extra["scheduler_d"] = scheduler_d.state_dict()
        save_checkpoint(path, model, discriminator, extra)

    if train_cfg.epochs == 0:
        initial = out_dir / f"initial_{train_cfg.config_hash()}.pt"
        checkpoint(initial, 0)
        return initial

    mode = "a" if start_epoch else "w"
    with open(log_path, mode) as log:
        for epoch in range(start_epoch, train_cfg.epochs):
            torch.manual_seed(_epoch_seed(train_cfg.seed, epoch))
            for step in range(train_cfg.steps_per_epoch):
                batch = sampler.batch(epoch, step, train_cfg.batch_size)
                if finetune:
                    report = finetune_step(batch, model, discriminator, extractor,
                                           optimizer_g, optimizer_d, weights)
                    scheduler_d.step()
                else:
                    report = pretrain_step(batch, model, optimizer_g, train_cfg.mse_lambda)
                scheduler_g.step()
                report.step = epoch * train_cfg.steps_per_epoch + step
                log.write(report.to_json() + "\n")
            if train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
                checkpoint(out_dir / f"epoch_{epoch + 1:04d}.pt", epoch + 1)

    final = out_dir / f"final_{train_cfg.config_hash()}.pt"
    checkpoint(final, train_cfg.epochs)
    return final


def read_log(path) -> list:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
