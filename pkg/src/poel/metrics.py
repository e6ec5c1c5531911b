"""Objective image quality metrics on [0, 1]-ranged tensors."""

import math

import torch
import torch.nn.functional as F

PSNR_CAP_DB = 99.0

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
# Deepest of the 5 scales divides each dimension by 16; the 11-tap window
# needs at least one valid position there.
MS_SSIM_MIN_DIM = (_WIN_SIZE - 1) * 2 ** 4  # input must be strictly larger


def psnr(x: torch.Tensor, x_hat: torch.Tensor) -> float:
    """10 log10(1 / MSE), clamped at 99 dB; exact equality reports the cap."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    mse = float(((x - x_hat) ** 2).double().mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(dtype, device):
    half = (_WIN_SIZE - 1) / 2.0
    coords = torch.arange(_WIN_SIZE, dtype=dtype, device=device) - half
    g = torch.exp(-(coords ** 2) / (2.0 * _WIN_SIGMA ** 2))
    g = g / g.sum()
    return (g.view(-1, 1) @ g.view(1, -1)).view(1, 1, _WIN_SIZE, _WIN_SIZE)


def _filter(x: torch.Tensor, window: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    return F.conv2d(x, window.expand(c, 1, -1, -1), groups=c)


def _ssim_per_channel(x: torch.Tensor, y: torch.Tensor, window: torch.Tensor):
    c1 = _K1 ** 2
    c2 = _K2 ** 2
    mu_x = _filter(x, window)
    mu_y = _filter(y, window)
    sxx = _filter(x * x, window) - mu_x ** 2
    syy = _filter(y * y, window) - mu_y ** 2
    sxy = _filter(x * y, window) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return (lum * cs).mean(dim=(-2, -1)), cs.mean(dim=(-2, -1))


def _downsample(x: torch.Tensor) -> torch.Tensor:
    ph, pw = x.shape[-2] % 2, x.shape[-1] % 2
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    return F.avg_pool2d(x, 2)


def ms_ssim(x: torch.Tensor, x_hat: torch.Tensor) -> float:
    """5-scale structural similarity with the standard scale exponents.

    Requires min(H, W) > 160 so the deepest scale still fits the window.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if x.dim() == 3:
        x, x_hat = x.unsqueeze(0), x_hat.unsqueeze(0)
    if min(x.shape[-2:]) <= MS_SSIM_MIN_DIM:
        raise ValueError(f"min dimension {min(x.shape[-2:])} too small; "
                         f"need more than {MS_SSIM_MIN_DIM} pixels")
    window = _gaussian_window(torch.float64, x.device)
    a, b = x.double(), x_hat.double()
    mcs = []
    for scale in range(len(MS_SSIM_WEIGHTS)):
        if scale > 0:
            a, b = _downsample(a), _downsample(b)
        ssim_c, cs_c = _ssim_per_channel(a, b, window)
        mcs.append(F.relu(ssim_c if scale == len(MS_SSIM_WEIGHTS) - 1 else cs_c))
    stacked = torch.stack(mcs, dim=-1)  # [B, C, scales]
    weights = stacked.new_tensor(MS_SSIM_WEIGHTS)
    value = (stacked ** weights).prod(dim=-1).mean()
    return float(value)
