"""Image I/O and the metric harness producing per-image reports."""

import csv
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .codec import compress_image, decompress_image
from .features import FeatureExtractor
from .losses import lpips_perceptual
from .metrics import ms_ssim, psnr

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}
REPORT_FIELDS = ("filename", "bpp", "psnr_db", "ms_ssim", "lpips")

# Named-metric extension point: extra columns computed as fn(x, x_hat).
EXTRA_METRICS: dict = {}


def register_metric(name: str, fn):
    EXTRA_METRICS[name] = fn


def load_image(path) -> torch.Tensor:
    """8-bit image file -> float tensor [3, H, W] in [0, 1].

    Grayscale inputs are replicated to three channels; alpha is dropped.
    """
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def save_image(x: torch.Tensor, path):
    """Serialize via round(255 v) clamped to [0, 255]."""
    if x.dim() != 3 or x.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] tensor, got {tuple(x.shape)}")
    arr = torch.round(255.0 * x).clamp(0, 255).to(torch.uint8)
    Image.fromarray(arr.permute(1, 2, 0).numpy()).save(path)


def quantize_pixels(x: torch.Tensor) -> torch.Tensor:
    """Snap to the 8-bit grid (what save_image would store)."""
    return torch.round(255.0 * x).clamp(0, 255) / 255.0


def list_images(image_dir) -> list:
    d = Path(image_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"{image_dir} is not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise ValueError(f"no images found in {image_dir}")
    return files


def evaluate_image(x: torch.Tensor, model, extractor: FeatureExtractor) -> dict:
    bs = compress_image(x, model)
    x_hat = quantize_pixels(decompress_image(bs, model))
    row = {
        "bpp": bs.stats.measured_bits / (x.shape[1] * x.shape[2]),
        "psnr_db": psnr(x, x_hat),
        "ms_ssim": ms_ssim(x, x_hat),
        "lpips": float(lpips_perceptual(x, x_hat, extractor)),
    }
    for name, fn in EXTRA_METRICS.items():
        row[name] = float(fn(x, x_hat))
    return row


def evaluate_model(model, image_dir, extractor: FeatureExtractor | None = None,
                   out_csv=None) -> list:
    """Per-image bpp/PSNR/MS-SSIM/LPIPS rows plus a trailing mean row."""
    files = list_images(image_dir)
    extractor = extractor or FeatureExtractor()
    rows = []
    for path in files:
        row = {"filename": path.name}
        row.update(evaluate_image(load_image(path), model, extractor))
        rows.append(row)
    metric_names = [k for k in rows[0] if k != "filename"]
    mean_row = {"filename": "mean"}
    for name in metric_names:
        mean_row[name] = sum(r[name] for r in rows) / len(rows)
    rows.append(mean_row)
    if out_csv is not None:
        write_report_csv(rows, out_csv)
    return rows


def write_report_csv(rows, path):
    names = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=names)
        writer.writeheader()
        writer.writerows(rows)


def read_report_csv(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        for k, v in row.items():
            try:
                row[k] = float(v)
            except (TypeError, ValueError):
                pass
    return rows


def rd_plot_data(report_paths) -> list:
    """Rate-distortion curve points (one per report's mean row), sorted by bpp."""
    points = []
    for path in report_paths:
        rows = read_report_csv(path)
        mean = next((r for r in rows if r["filename"] == "mean"), None)
        if mean is None:
            raise ValueError(f"{path} has no mean row")
        point = {k: v for k, v in mean.items() if k != "filename"}
        point["report"] = str(path)
        points.append(point)
    return sorted(points, key=lambda p: p["bpp"])
