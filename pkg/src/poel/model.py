"""Full codec model: transforms, hyper path, context model and z prior."""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import CodecConfig
from .context import SpaceChannelContext, make_group_layout
from .gaussian import SIGMA_MIN, gaussian_likelihood, rate_bpp
from .transforms import (AnalysisTransform, HyperAnalysis, HyperSynthesis,
                         SynthesisTransform, quantize)

# Training likelihoods are floored so the rate term stays finite.
LIKELIHOOD_BOUND = 1e-9


class ChannelGaussianPrior(nn.Module):
    """Factorized per-channel Gaussian prior for the hyper latent."""

    def __init__(self, channels: int):
        super().__init__()
        self.mean = nn.Parameter(torch.zeros(channels))
        self.scale_raw = nn.Parameter(torch.zeros(channels))

    def params(self, like: torch.Tensor):
        shape = (1,) * (like.dim() - 3) + (-1, 1, 1)
        mu = self.mean.view(shape).expand_as(like).to(like.dtype)
        sigma = (SIGMA_MIN + nn.functional.softplus(self.scale_raw)).view(shape)
        return mu, sigma.expand_as(like).to(like.dtype)


@dataclass
class ForwardResult:
    x_hat: torch.Tensor
    y_hat: torch.Tensor
    bpp: torch.Tensor
    bpp_y: torch.Tensor
    bpp_z: torch.Tensor
    mu: torch.Tensor
    sigma: torch.Tensor


class CodecModel(nn.Module):
    def __init__(self, cfg: CodecConfig | None = None):
        super().__init__()
        self.cfg = cfg or CodecConfig.toy()
        self.layout = make_group_layout(self.cfg.latent_channels)
        self.analysis = AnalysisTransform(self.cfg)
        self.synthesis = SynthesisTransform(self.cfg)
        self.hyper_analysis = HyperAnalysis(self.cfg)
        self.hyper_synthesis = HyperSynthesis(self.cfg)
        self.context = SpaceChannelContext(self.cfg, self.layout)
        self.z_prior = ChannelGaussianPrior(self.cfg.hyper_channels)

    def forward(self, x: torch.Tensor) -> ForwardResult:
        """Training forward: STE quantization on the synthesis/context path,
        additive-noise quantization for the rate terms."""
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        num_pixels = x.shape[0] * x.shape[2] * x.shape[3]
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        mu_z, sigma_z = self.z_prior.params(z)
        z_hat = quantize(z, "ste", mu_z)
        hyper_ctx = self.hyper_synthesis(z_hat)
        y_hat, mu, sigma = self.context(y, hyper_ctx, quant_mode="ste")
        x_hat = self.synthesis(y_hat)

        lik_y = gaussian_likelihood(quantize(y, "noise"), mu, sigma, bound=LIKELIHOOD_BOUND)
        lik_z = gaussian_likelihood(quantize(z, "noise"), mu_z, sigma_z, bound=LIKELIHOOD_BOUND)
        bpp_y = rate_bpp(lik_y, None, num_pixels)
        bpp_z = rate_bpp(lik_z, None, num_pixels)
        if squeeze:
            x_hat, y_hat = x_hat.squeeze(0), y_hat.squeeze(0)
        return ForwardResult(x_hat=x_hat, y_hat=y_hat, bpp=bpp_y + bpp_z,
                             bpp_y=bpp_y, bpp_z=bpp_z, mu=mu, sigma=sigma)


def build_model(cfg: CodecConfig | None = None, seed: int | None = None) -> CodecModel:
    """Construct a model with seed-reproducible initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return CodecModel(cfg)
