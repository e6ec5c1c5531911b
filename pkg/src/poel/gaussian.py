"""Discretized Gaussian entropy model: likelihoods, bpp, quantized CDF tables.

Coding convention: a value v with predicted mean mu is quantized to the
integer symbol s = round(v - mu), so the coding distribution is a zero-mean
Gaussian of scale sigma integrated over [s - 0.5, s + 0.5]. Tables therefore
depend on sigma only; sigma is snapped to a fixed log-spaced level set so a
single matrix of quantized CDFs serves every position.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import torch

SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
SIGMA_LEVELS = 64

# Symbol alphabet: integers in [SYMBOL_MIN, SYMBOL_MAX] plus one escape
# token for out-of-range values (coded raw as 4 bypass bytes).
SYMBOL_MIN = -127
SYMBOL_MAX = 128
ESCAPE = SYMBOL_MAX - SYMBOL_MIN + 1  # token index 256
ALPHABET = ESCAPE + 1  # 257 tokens per table row
CDF_PRECISION = 16
CDF_TOTAL = 1 << CDF_PRECISION


def _std_cdf(x: torch.Tensor) -> torch.Tensor:
    # 0.5 * erfc(-x / sqrt(2)); erfc keeps far tails accurate.
    return 0.5 * torch.erfc(x * (-0.5 ** 0.5))


def gaussian_likelihood(values, mu, sigma, bound=None):
    """Probability mass of the unit-width bin centered on ``values - mu``.

    Computed as Phi((0.5 - |d|) / sigma) - Phi((-0.5 - |d|) / sigma) with
    d = values - mu, which is exact for the symmetric integrand and avoids
    cancellation in the tails. ``bound`` optionally floors the result
    (used by training rate terms so log stays finite).
    """
    delta = (values - mu).abs()
    upper = _std_cdf((0.5 - delta) / sigma)
    lower = _std_cdf((-0.5 - delta) / sigma)
    p = upper - lower
    if bound is not None:
        p = torch.clamp(p, min=bound)
    return p


def rate_bpp(likelihoods_y, likelihoods_z, num_pixels: int):
    """Total information content in bits divided by the pixel count."""
    if num_pixels <= 0:
        raise ValueError("num_pixels must be positive")
    bits = -torch.log2(likelihoods_y).sum()
    if likelihoods_z is not None and likelihoods_z.numel() > 0:
        bits = bits - torch.log2(likelihoods_z).sum()
    return bits / num_pixels


def scale_table() -> np.ndarray:
    """Log-spaced sigma levels used for table indexing."""
    return np.exp(np.linspace(math.log(SIGMA_MIN), math.log(SIGMA_MAX), SIGMA_LEVELS))


def sigma_to_index(sigma: np.ndarray) -> np.ndarray:
    """Index of the smallest level >= sigma (clamped into the level range)."""
    table = scale_table()
    s = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
    return np.searchsorted(table, s - 1e-9).clip(0, SIGMA_LEVELS - 1).astype(np.int32)


def _quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """16-bit integer counts: sum == 2**16, every entry >= 1."""
    counts = np.maximum(1, np.round(pmf * CDF_TOTAL)).astype(np.int64)
    diff = CDF_TOTAL - int(counts.sum())
    if diff > 0:
        counts[int(np.argmax(counts))] += diff
    else:
        for _ in range(-diff):
            i = int(np.argmax(counts))
            counts[i] -= 1
    assert counts.min() >= 1 and counts.sum() == CDF_TOTAL
    return counts


def _level_pmf(sigma: float) -> np.ndarray:
    symbols = torch.arange(SYMBOL_MIN, SYMBOL_MAX + 1, dtype=torch.float64)
    p = gaussian_likelihood(symbols, torch.zeros(()), torch.tensor(sigma, dtype=torch.float64))
    p = p.numpy()
    escape = max(1.0 - p.sum(), 0.0)
    return np.concatenate([p, [escape]])


def _bypass_pmf() -> np.ndarray:
    # Near-uniform over the 256 byte values; the escape slot keeps the
    # row shape identical to the Gaussian rows (it is never coded).
    counts = np.full(ALPHABET, 255, dtype=np.int64)
    counts[ESCAPE] = CDF_TOTAL - 255 * (ALPHABET - 1)
    return counts


_CDF_MATRIX = None


def quantized_cdf_matrix() -> np.ndarray:
    """uint32 matrix [SIGMA_LEVELS + 1, ALPHABET + 1] of cumulative counts.

    Row i < SIGMA_LEVELS covers scale level i; the final row is the
    near-uniform bypass table used for escape payload bytes. Rows start at
    0, end at 2**16 and are strictly increasing.
    """
    global _CDF_MATRIX
    if _CDF_MATRIX is None:
        rows = []
        for sigma in scale_table():
            counts = _quantize_pmf(_level_pmf(float(sigma)))
            rows.append(np.concatenate([[0], np.cumsum(counts)]))
        rows.append(np.concatenate([[0], np.cumsum(_bypass_pmf())]))
        _CDF_MATRIX = np.asarray(rows, dtype=np.uint32)
        _CDF_MATRIX.setflags(write=False)
    return _CDF_MATRIX


BYPASS_ROW = SIGMA_LEVELS  # index of the bypass row in quantized_cdf_matrix()


@dataclass
class CdfTable:
    """Per-symbol coding tables: a shared CDF matrix plus a row index per symbol."""

    cdf: np.ndarray  # uint32 [rows, ALPHABET + 1]
    index: np.ndarray  # int32 [n], row per coded symbol
    bypass_row: int
    offset: int = SYMBOL_MIN

    def __post_init__(self):
        self.index = np.ascontiguousarray(self.index, dtype=np.int32)
        self.cdf = np.ascontiguousarray(self.cdf, dtype=np.uint32)
        if self.index.size and (self.index.min() < 0 or self.index.max() >= self.cdf.shape[0]):
            raise ValueError("table index out of range")

    def __len__(self) -> int:
        return int(self.index.size)


def build_cdf_table(mu, sigma) -> CdfTable:
    """Coding tables for symbols round(v - mu) under per-position scales.

    mu fixes the symbol mapping only; the quantized CDFs are selected by
    snapping sigma up to the nearest level.
    """
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if sigma.shape != mu.shape:
        raise ValueError("mu and sigma must have matching sizes")
    return CdfTable(cdf=quantized_cdf_matrix(), index=sigma_to_index(sigma),
                    bypass_row=BYPASS_ROW)


def table_bits(raw_symbols: np.ndarray, table: CdfTable) -> float:
    """Sum of -log2 p over the quantized tables for a raw symbol sequence.

    Escaped symbols account for the escape token plus their four bypass
    payload bytes, mirroring what the coder actually spends.
    """
    raw = np.asarray(raw_symbols, dtype=np.int64).reshape(-1)
    if raw.size != len(table):
        raise ValueError("symbol/table length mismatch")
    cdf = table.cdf.astype(np.int64)
    widths = cdf[:, 1:] - cdf[:, :-1]
    tok = np.where((raw >= SYMBOL_MIN) & (raw <= SYMBOL_MAX), raw - SYMBOL_MIN, ESCAPE)
    bits = -np.log2(widths[table.index, tok] / CDF_TOTAL).sum()
    for s in raw[tok == ESCAPE]:
        payload = np.frombuffer(np.int32(s).tobytes(), dtype=np.uint8)
        bits += -np.log2(widths[table.bypass_row, payload] / CDF_TOTAL).sum()
    return float(bits)
