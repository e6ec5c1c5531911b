"""Space-channel context model.

Latent channels are split into five unevenly sized groups, decoded in
order; within a group, a checkerboard splits positions into an anchor pass
(hyper + channel context only) and a non-anchor pass (adds spatial context
from the group's decoded anchors via a parity-masked convolution).

Normative decoding order for the bitstream: groups 0..4; within each group
anchor pass then non-anchor pass; within a pass, channel-major raster order.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import GROUP_SIZES, CodecConfig
from .gaussian import SIGMA_MIN


@dataclass(frozen=True)
class GroupLayout:
    """Ordered partition of the latent channels into five context groups."""

    group_sizes: tuple

    def __post_init__(self):
        if len(self.group_sizes) != 5:
            raise ValueError("expected exactly 5 groups")
        if any(g <= 0 for g in self.group_sizes):
            raise ValueError("group sizes must be positive")

    @property
    def total_channels(self) -> int:
        return sum(self.group_sizes)

    @property
    def offsets(self) -> tuple:
        out, acc = [], 0
        for g in self.group_sizes:
            out.append(acc)
            acc += g
        return tuple(out)

    def slices(self) -> tuple:
        return tuple(slice(o, o + g) for o, g in zip(self.offsets, self.group_sizes))


def make_group_layout(latent_channels: int, sizes=None) -> GroupLayout:
    """Layout for a known channel count, or an explicit partition."""
    if sizes is None:
        if latent_channels not in GROUP_SIZES:
            raise ValueError(
                f"no predefined 5-group split for M={latent_channels}; pass sizes explicitly")
        sizes = GROUP_SIZES[latent_channels]
    layout = GroupLayout(tuple(int(s) for s in sizes))
    if layout.total_channels != latent_channels:
        raise ValueError(f"group sizes sum to {layout.total_channels}, expected {latent_channels}")
    return layout


def checkerboard_masks(h: int, w: int, device=None):
    """Complementary boolean masks [h, w]; (0, 0) is an anchor cell."""
    if h < 1 or w < 1:
        raise ValueError("grid dimensions must be >= 1")
    ii = torch.arange(h, device=device).view(-1, 1)
    jj = torch.arange(w, device=device).view(1, -1)
    anchor = (ii + jj) % 2 == 0
    return anchor, ~anchor


@dataclass
class EntropyParams:
    """Per-symbol Gaussian parameters; sigma is bounded below by SIGMA_MIN."""

    mu: torch.Tensor
    sigma: torch.Tensor


class CheckerboardConv(nn.Module):
    """5x5 conv whose kernel only taps cells of opposite parity.

    At a non-anchor output position every visible tap is an anchor cell, so
    non-anchor parameters depend on decoded anchors only.
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 5, padding=2)
        ii = torch.arange(5).view(-1, 1)
        jj = torch.arange(5).view(1, -1)
        self.register_buffer("mask", ((ii + jj) % 2 == 1).to(torch.float32).view(1, 1, 5, 5))

    def forward(self, x):
        weight = self.conv.weight * self.mask.to(x.dtype)
        return nn.functional.conv2d(x, weight, self.conv.bias, padding=2)


ANCHOR = "anchor"
NONANCHOR = "nonanchor"


class SpaceChannelContext(nn.Module):
    """Predicts per-group entropy parameters from hyper, channel and spatial context."""

    def __init__(self, cfg: CodecConfig, layout: GroupLayout | None = None):
        super().__init__()
        m = cfg.latent_channels
        feat = cfg.backbone_channels
        self.layout = layout or make_group_layout(m)
        self.feat = feat
        self.hyper_channels = 2 * m
        self.channel_nets = nn.ModuleDict()
        self.spatial_nets = nn.ModuleList()
        self.param_nets = nn.ModuleList()
        for k, g in enumerate(self.layout.group_sizes):
            prev = self.layout.offsets[k]
            if k > 0:
                self.channel_nets[str(k)] = nn.Sequential(
                    nn.Conv2d(prev, feat, 3, padding=1),
                    nn.ReLU(inplace=True),
                    nn.Conv2d(feat, feat, 3, padding=1),
                )
            self.spatial_nets.append(CheckerboardConv(g, feat))
            self.param_nets.append(nn.Sequential(
                nn.Conv2d(self.hyper_channels + 2 * feat, 2 * feat, 1),
                nn.ReLU(inplace=True),
                nn.Conv2d(2 * feat, feat, 1),
                nn.ReLU(inplace=True),
                nn.Conv2d(feat, 2 * g, 1),
            ))

    def entropy_params(self, prev_groups, spatial_known, hyper_ctx,
                       group_index: int, pass_: str) -> EntropyParams:
        """Gaussian parameters for one (group, pass).

        prev_groups: concatenated decoded latents of groups < group_index
        (None for group 0). spatial_known: decoded anchors of this group,
        ignored for the anchor pass. Only positions of the requested pass
        carry meaning in the result.
        """
        if not 0 <= group_index < 5:
            raise ValueError(f"group_index {group_index} out of [0, 5)")
        if pass_ not in (ANCHOR, NONANCHOR):
            raise ValueError(f"unknown pass {pass_!r}")
        squeeze = hyper_ctx.dim() == 3
        if squeeze:
            hyper_ctx = hyper_ctx.unsqueeze(0)
            prev_groups = None if prev_groups is None else prev_groups.unsqueeze(0)
            spatial_known = None if spatial_known is None else spatial_known.unsqueeze(0)
        if hyper_ctx.shape[1] != self.hyper_channels:
            raise ValueError(f"hyper context has {hyper_ctx.shape[1]} channels, "
                             f"expected {self.hyper_channels}")
        b, _, h, w = hyper_ctx.shape
        k = group_index
        g = self.layout.group_sizes[k]
        zeros = hyper_ctx.new_zeros((b, self.feat, h, w))

        if k == 0:
            ch_feat = zeros
        else:
            want = self.layout.offsets[k]
            if prev_groups is None or prev_groups.shape[1] != want:
                got = None if prev_groups is None else prev_groups.shape[1]
                raise ValueError(f"group {k} needs {want} previous channels, got {got}")
            ch_feat = self.channel_nets[str(k)](prev_groups)

        if pass_ == ANCHOR:
            sp_feat = zeros
        else:
            if spatial_known is None or spatial_known.shape[1] != g:
                got = None if spatial_known is None else spatial_known.shape[1]
                raise ValueError(f"group {k} spatial context needs {g} channels, got {got}")
            anchor, _ = checkerboard_masks(h, w, device=hyper_ctx.device)
            sp_feat = self.spatial_nets[k](spatial_known * anchor.to(spatial_known.dtype))

        out = self.param_nets[k](torch.cat([hyper_ctx, ch_feat, sp_feat], dim=1))
        mu, sigma_raw = out.chunk(2, dim=1)
        sigma = SIGMA_MIN + nn.functional.softplus(sigma_raw)
        if squeeze:
            mu, sigma = mu.squeeze(0), sigma.squeeze(0)
        return EntropyParams(mu=mu, sigma=sigma)

    def forward(self, y, hyper_ctx, quant_mode: str = "ste"):
        """Two-pass parameter prediction over all groups.

        Returns (y_hat, mu, sigma), each shaped like y. y_hat is quantized
        with the predicted means (mode ``quant_mode``) and is the tensor
        the synthesis transform and later groups condition on.
        """
        from .transforms import quantize

        squeeze = y.dim() == 3
        if squeeze:
            y, hyper_ctx = y.unsqueeze(0), hyper_ctx.unsqueeze(0)
        h, w = y.shape[-2:]
        anchor, nonanchor = checkerboard_masks(h, w, device=y.device)
        am = anchor.to(y.dtype)
        nm = nonanchor.to(y.dtype)
        decoded, mus, sigmas = [], [], []
        for k, sl in enumerate(self.layout.slices()):
            y_k = y[:, sl]
            prev = torch.cat(decoded, dim=1) if k > 0 else None
            pa = self.entropy_params(prev, None, hyper_ctx, k, ANCHOR)
            y_anchor = quantize(y_k, quant_mode, pa.mu) * am
            pn = self.entropy_params(prev, y_anchor, hyper_ctx, k, NONANCHOR)
            mus.append(pa.mu * am + pn.mu * nm)
            sigmas.append(pa.sigma * am + pn.sigma * nm)
            decoded.append(y_anchor + quantize(y_k, quant_mode, pn.mu) * nm)
        y_hat = torch.cat(decoded, dim=1)
        mu = torch.cat(mus, dim=1)
        sigma = torch.cat(sigmas, dim=1)
        if squeeze:
            y_hat, mu, sigma = y_hat.squeeze(0), mu.squeeze(0), sigma.squeeze(0)
        return y_hat, mu, sigma
