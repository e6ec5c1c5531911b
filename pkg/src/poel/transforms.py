"""Analysis/synthesis and hyper transforms plus quantization.

The main transforms use four stride-2 stages (16x total downsampling) with
residual bottleneck blocks between them; the hyper pair adds another 4x on
the latent grid. All modules accept [B, C, H, W] or [C, H, W] input and
return matching rank.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import CodecConfig

DOWNSAMPLE = 16  # image -> latent
HYPER_DOWNSAMPLE = 4  # latent -> hyper latent
PAD_MULTIPLE = DOWNSAMPLE * HYPER_DOWNSAMPLE


def conv(in_ch: int, out_ch: int, kernel_size: int = 5, stride: int = 2) -> nn.Module:
    return nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=kernel_size // 2)


def deconv(in_ch: int, out_ch: int, kernel_size: int = 5, stride: int = 2) -> nn.Module:
    return nn.ConvTranspose2d(in_ch, out_ch, kernel_size, stride=stride,
                              padding=kernel_size // 2, output_padding=stride - 1)


class ResidualBottleneck(nn.Module):
    """1x1 reduce, 3x3, 1x1 expand with a skip connection."""

    def __init__(self, ch: int, mid_ch: int | None = None):
        super().__init__()
        mid_ch = mid_ch or ch // 2
        self.block = nn.Sequential(
            nn.Conv2d(ch, mid_ch, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid_ch, mid_ch, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid_ch, ch, 1),
        )

    def forward(self, x):
        return x + self.block(x)


def _res_stack(ch: int, n: int) -> list[nn.Module]:
    return [ResidualBottleneck(ch) for _ in range(n)]


def _with_batch(fn, x):
    if x.dim() == 3:
        return fn(x.unsqueeze(0)).squeeze(0)
    if x.dim() == 4:
        return fn(x)
    raise ValueError(f"expected 3-D or 4-D tensor, got {x.dim()}-D")


class AnalysisTransform(nn.Module):
    """Image [3, H, W] -> latent [M, H/16, W/16]."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        n, m, r = cfg.backbone_channels, cfg.latent_channels, cfg.res_blocks_per_stage
        self.net = nn.Sequential(
            conv(3, n),
            *_res_stack(n, r),
            conv(n, n),
            *_res_stack(n, r),
            conv(n, n),
            *_res_stack(n, r),
            conv(n, m),
        )

    def forward(self, x):
        def run(xb):
            if xb.shape[1] != 3:
                raise ValueError(f"expected 3 input channels, got {xb.shape[1]}")
            if xb.shape[2] < 64 or xb.shape[3] < 64:
                raise ValueError(f"input spatial size {tuple(xb.shape[2:])} below 64x64")
            return self.net(xb)

        return _with_batch(run, x)


class SynthesisTransform(nn.Module):
    """Latent [M, h, w] -> image [3, 16h, 16w] (unclamped)."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        n, m, r = cfg.backbone_channels, cfg.latent_channels, cfg.res_blocks_per_stage
        self.latent_channels = m
        self.net = nn.Sequential(
            deconv(m, n),
            *_res_stack(n, r),
            deconv(n, n),
            *_res_stack(n, r),
            deconv(n, n),
            *_res_stack(n, r),
            deconv(n, 3),
        )

    def forward(self, y):
        def run(yb):
            if yb.shape[1] != self.latent_channels:
                raise ValueError(
                    f"latent has {yb.shape[1]} channels, config says {self.latent_channels}")
            return self.net(yb)

        return _with_batch(run, y)


class HyperAnalysis(nn.Module):
    """Latent [M, h, w] -> hyper latent [N', h/4, w/4]."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        m, n = cfg.latent_channels, cfg.hyper_channels
        self.net = nn.Sequential(
            conv(m, n, kernel_size=3, stride=1),
            nn.ReLU(inplace=True),
            conv(n, n),
            nn.ReLU(inplace=True),
            conv(n, n),
        )

    def forward(self, y):
        def run(yb):
            if yb.shape[2] % 4 or yb.shape[3] % 4:
                raise ValueError(f"latent grid {tuple(yb.shape[2:])} not divisible by 4")
            return self.net(yb)

        return _with_batch(run, y)


class HyperSynthesis(nn.Module):
    """Hyper latent [N', h/4, w/4] -> entropy context [2M, h, w]."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        m, n = cfg.latent_channels, cfg.hyper_channels
        self.net = nn.Sequential(
            deconv(n, n),
            nn.ReLU(inplace=True),
            deconv(n, m),
            nn.ReLU(inplace=True),
            conv(m, 2 * m, kernel_size=3, stride=1),
        )

    def forward(self, z):
        return _with_batch(self.net, z)


def quantize(values: torch.Tensor, mode: str, mean_offset: torch.Tensor | None = None):
    """Quantize to the integer grid shifted by ``mean_offset``.

    round: round(v - mu) + mu
    noise: v + u, u ~ Uniform(-0.5, 0.5), offset irrelevant
    ste:   values of round, gradients of identity (w.r.t. values)
    """
    if mean_offset is not None and mean_offset.shape != values.shape:
        raise ValueError("mean_offset shape must match values")
    if mode == "noise":
        return values + torch.empty_like(values).uniform_(-0.5, 0.5)
    delta = values if mean_offset is None else values - mean_offset
    rounded = torch.round(delta) if mean_offset is None else torch.round(delta) + mean_offset
    if mode == "round":
        return rounded
    if mode == "ste":
        # forward bit-identical to round; gradient of identity w.r.t. values
        return rounded.detach() + (values - values.detach())
    raise ValueError(f"unknown quantize mode {mode!r}")


def pad_image(x: torch.Tensor, multiple: int = PAD_MULTIPLE) -> torch.Tensor:
    """Replicate-pad H and W on the bottom/right up to the next multiple."""
    h, w = x.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return x
    return _with_batch(lambda xb: F.pad(xb, (0, pw, 0, ph), mode="replicate"), x)


def crop_image(x: torch.Tensor, height: int, width: int) -> torch.Tensor:
    return x[..., :height, :width]
