"""Training objectives: reconstruction, adversarial, style, perceptual, rate."""

import json
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F

from .config import LossWeights
from .features import FeatureExtractor


def charbonnier(x: torch.Tensor, x_hat: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Smooth L1 surrogate: mean of sqrt((x - x_hat)^2 + eps^2)."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return torch.sqrt((x - x_hat) ** 2 + eps ** 2).mean()


def hinge_adversarial_g(fake_logits: torch.Tensor) -> torch.Tensor:
    return -fake_logits.mean()


def hinge_adversarial_d(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    return F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean()


def bce_adversarial_g(fake_probs: torch.Tensor) -> torch.Tensor:
    return -torch.log(fake_probs).mean()


def bce_adversarial_d(real_probs: torch.Tensor, fake_probs: torch.Tensor) -> torch.Tensor:
    return -torch.log(real_probs).mean() - torch.log(1.0 - fake_probs).mean()


def gram_matrix(feat: torch.Tensor, normalize: bool = True) -> torch.Tensor:
    """Channel inner products of a [C, h, w] map (or [B, C, h, w], batched)."""
    if feat.dim() == 3:
        c, h, w = feat.shape
        flat = feat.reshape(c, h * w)
        g = flat @ flat.T
    elif feat.dim() == 4:
        b, c, h, w = feat.shape
        flat = feat.reshape(b, c, h * w)
        g = flat @ flat.transpose(1, 2)
    else:
        raise ValueError(f"expected 3-D or 4-D feature map, got {feat.dim()}-D")
    return g / (h * w) if normalize else g


def _tiles(feat: torch.Tensor, size: int):
    h, w = feat.shape[-2:]
    for i in range(0, h, size):
        for j in range(0, w, size):
            yield feat[..., i:i + size, j:j + size]


def patched_style_loss(x: torch.Tensor, x_hat: torch.Tensor,
                       extractor: FeatureExtractor, patch_size: int = 16) -> torch.Tensor:
    """Texture-statistics loss on tiled feature maps.

    Feature maps are cut into patch_size x patch_size tiles (edge remainders
    kept, smaller); per tile the squared Frobenius distance between the
    area-normalized Gram matrices is taken, averaged over tiles, summed over
    layers.
    """
    feats_x = extractor(x)
    feats_y = extractor(x_hat)
    total = x_hat.new_zeros(())
    for fx, fy in zip(feats_x, feats_y):
        per_patch = []
        for tx, ty in zip(_tiles(fx, patch_size), _tiles(fy, patch_size)):
            d = gram_matrix(tx, normalize=True) - gram_matrix(ty, normalize=True)
            per_patch.append((d ** 2).sum(dim=(-2, -1)).mean())
        total = total + torch.stack(per_patch).mean()
    return total


def lpips_perceptual(x: torch.Tensor, x_hat: torch.Tensor,
                     extractor: FeatureExtractor) -> torch.Tensor:
    """Weighted squared distance between unit-normalized deep features."""
    feats_x = extractor(x)
    feats_y = extractor(x_hat)
    total = x_hat.new_zeros(())
    for fx, fy, w in zip(feats_x, feats_y, extractor.lpips_weights()):
        nx = fx / torch.sqrt((fx ** 2).sum(dim=1, keepdim=True) + 1e-10)
        ny = fy / torch.sqrt((fy ** 2).sum(dim=1, keepdim=True) + 1e-10)
        d = (nx - ny) ** 2
        total = total + (d * w.to(d.dtype).view(1, -1, 1, 1)).sum(dim=1).mean()
    return total


def lambda_multiplexer(rate_bpp, weights: LossWeights) -> float:
    """Rate weight conditioned on the target: heavy at or above it, light below.

    The comparison uses the instantaneous batch rate and carries no gradient.
    """
    if isinstance(rate_bpp, torch.Tensor):
        rate_bpp = rate_bpp.detach()
    return weights.rate_above if float(rate_bpp) >= weights.target_bpp else weights.rate_below


@dataclass
class LossReport:
    """Named scalar terms of one objective evaluation (tensors or floats)."""

    perceptual: object
    reconstruction: object
    adversarial: object
    style: object
    rate_bpp: object
    rate_weight: float
    total: object
    discriminator: object = None
    weights: LossWeights | None = None
    step: int | None = None
    phase: str | None = None

    def detach(self) -> "LossReport":
        """Report with all tensor fields detached (for logging)."""
        def d(v):
            return v.detach() if isinstance(v, torch.Tensor) else v

        return LossReport(perceptual=d(self.perceptual), reconstruction=d(self.reconstruction),
                          adversarial=d(self.adversarial), style=d(self.style),
                          rate_bpp=d(self.rate_bpp), rate_weight=self.rate_weight,
                          total=d(self.total), discriminator=d(self.discriminator),
                          weights=self.weights, step=self.step, phase=self.phase)

    def as_dict(self) -> dict:
        def scalar(v):
            if isinstance(v, torch.Tensor):
                return float(v.detach())
            return float(v) if v is not None else None

        out = {
            "perceptual": scalar(self.perceptual),
            "reconstruction": scalar(self.reconstruction),
            "adversarial": scalar(self.adversarial),
            "style": scalar(self.style),
            "discriminator": scalar(self.discriminator),
            "rate_bpp": scalar(self.rate_bpp),
            "rate_weight": float(self.rate_weight),
            "total": scalar(self.total),
        }
        if self.weights is not None:
            out["loss_weights"] = asdict(self.weights)
        if self.step is not None:
            out["step"] = self.step
        if self.phase is not None:
            out["phase"] = self.phase
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def total_objective(x, x_hat, y_hat, rate_bpp, fake_logits,
                    extractor: FeatureExtractor, weights: LossWeights) -> LossReport:
    """Composite objective: weighted distortion terms plus rate-steered bpp."""
    perc = lpips_perceptual(x, x_hat, extractor)
    recon = charbonnier(x, x_hat, weights.charbonnier_eps)
    adv = hinge_adversarial_g(fake_logits)
    sty = patched_style_loss(x, x_hat, extractor)
    lam = lambda_multiplexer(rate_bpp, weights)
    total = (weights.perceptual * perc + weights.reconstruction * recon
             + weights.adversarial * adv + weights.style * sty + lam * rate_bpp)
    return LossReport(perceptual=perc, reconstruction=recon, adversarial=adv,
                      style=sty, rate_bpp=rate_bpp, rate_weight=lam, total=total,
                      weights=weights)
