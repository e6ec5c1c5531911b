"""Shared test utilities: synthetic images and corpora."""

import numpy as np
import torch
import torch.nn.functional as F


def synth_image(rng: np.random.Generator, size: int = 192) -> torch.Tensor:
    """Deterministic textured image: gradients + blobs + band-limited noise."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((3, size, size), dtype=np.float64)
    for c in range(3):
        img[c] = (rng.uniform(0.1, 0.9) + rng.uniform(-0.4, 0.4) * xx
                  + rng.uniform(-0.4, 0.4) * yy)
    for _ in range(6):
        cx, cy = rng.uniform(0, 1, 2)
        r = rng.uniform(0.05, 0.3)
        amp = rng.uniform(-0.5, 0.5)
        img[rng.integers(3)] += amp * np.exp(
            -(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r)))
    for scale in (8, 32):
        n = rng.standard_normal((3, scale, scale)) * rng.uniform(0.02, 0.12)
        img += F.interpolate(torch.from_numpy(n)[None], size=(size, size),
                             mode="bilinear").numpy()[0]
    return torch.from_numpy(np.clip(img, 0.0, 1.0)).float()


def make_corpus(directory, n: int, size: int = 192, seed: int = 42):
    """Write n synthetic PNGs into directory; returns the paths."""
    from poel.eval_io import save_image

    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        p = directory / f"img_{i:03d}.png"
        save_image(synth_image(rng, size), p)
        paths.append(p)
    return paths
