"""Conditional patch discriminator with spectrally normalized convolutions.

The discriminator judges an image together with a condition derived from
the quantized latent (projected and nearest-neighbor upsampled back to
image resolution). The condition input is always gradient-detached, so no
discriminator signal can reach the codec through it.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .transforms import DOWNSAMPLE


@dataclass
class DiscriminatorConfig:
    base_channels: int = 64
    num_downsample_stages: int = 4
    condition_channels: int = 12
    sn_power_iterations: int = 1

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{name} must be positive")


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor | None = None,
                       n_power_iterations: int = 1, eps: float = 1e-12):
    """Divide a 2-D weight by its estimated top singular value.

    Power iteration refines ``u`` (left singular vector estimate); the
    estimate itself is treated as constant, so gradients only flow through
    the weight. Returns (normalized weight, updated u).
    """
    if weight.dim() != 2:
        raise ValueError("weight must be 2-D (out x rest)")
    if u is None:
        u = F.normalize(weight.new_ones(weight.shape[0]), dim=0, eps=eps)
    with torch.no_grad():
        v = F.normalize(weight.T @ u, dim=0, eps=eps)
        for _ in range(n_power_iterations):
            u = F.normalize(weight @ v, dim=0, eps=eps)
            v = F.normalize(weight.T @ u, dim=0, eps=eps)
    sigma = torch.dot(u, weight @ v)
    return weight / sigma, u


class SNConv2d(nn.Module):
    """Conv2d whose kernel is spectrally normalized at every forward.

    The persistent power-iteration vector is refined only in training mode,
    so evaluation forwards are pure.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, stride: int = 1,
                 padding: int = 0, n_power_iterations: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=padding)
        self.n_power_iterations = n_power_iterations
        u = F.normalize(torch.randn(out_ch), dim=0)
        self.register_buffer("u", u)

    def forward(self, x):
        w2d = self.conv.weight.view(self.conv.weight.shape[0], -1)
        iters = self.n_power_iterations if self.training else 0
        w_sn, u = spectral_normalize(w2d, self.u, n_power_iterations=iters)
        if self.training:
            self.u.copy_(u)
        return F.conv2d(x, w_sn.view_as(self.conv.weight), self.conv.bias,
                        stride=self.conv.stride, padding=self.conv.padding)


class Discriminator(nn.Module):
    """Strided conv stack over image + condition, emitting a spatial logits map."""

    def __init__(self, latent_channels: int, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        self.cfg = cfg or DiscriminatorConfig()
        self.latent_channels = latent_channels
        it = self.cfg.sn_power_iterations
        self.condition_proj = SNConv2d(latent_channels, self.cfg.condition_channels, 1,
                                       n_power_iterations=it)
        layers = []
        in_ch = 3 + self.cfg.condition_channels
        ch = self.cfg.base_channels
        for _ in range(self.cfg.num_downsample_stages):
            layers += [SNConv2d(in_ch, ch, 4, stride=2, padding=1, n_power_iterations=it),
                       nn.LeakyReLU(0.2, inplace=True)]
            in_ch, ch = ch, min(2 * ch, 8 * self.cfg.base_channels)
        self.body = nn.Sequential(*layers)
        self.head = SNConv2d(in_ch, 1, 1, n_power_iterations=it)

    def prepare_condition(self, y_hat: torch.Tensor, target_hw) -> torch.Tensor:
        """Project the (detached) quantized latent and upsample to image size."""
        squeeze = y_hat.dim() == 3
        if squeeze:
            y_hat = y_hat.unsqueeze(0)
        if y_hat.shape[1] != self.latent_channels:
            raise ValueError(f"latent has {y_hat.shape[1]} channels, "
                             f"expected {self.latent_channels}")
        th, tw = target_hw
        cond = self.condition_proj(y_hat.detach())
        cond = F.interpolate(cond, scale_factor=DOWNSAMPLE, mode="nearest")
        if cond.shape[-2] < th or cond.shape[-1] < tw:
            raise ValueError(f"latent grid {tuple(y_hat.shape[-2:])} too small for "
                             f"target size {(th, tw)}")
        cond = cond[..., :th, :tw]
        return cond.squeeze(0) if squeeze else cond

    def forward(self, image: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        squeeze = image.dim() == 3
        if squeeze:
            image = image.unsqueeze(0)
            condition = condition.unsqueeze(0)
        if image.shape[-2:] != condition.shape[-2:]:
            raise ValueError(f"image {tuple(image.shape[-2:])} and condition "
                             f"{tuple(condition.shape[-2:])} not spatially aligned")
        logits = self.head(self.body(torch.cat([image, condition], dim=1)))
        return logits.squeeze(0) if squeeze else logits
