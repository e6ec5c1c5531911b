"""Compressed file format and the compress/decompress pipelines.

Layout (all integers little-endian):

    magic   4 bytes  b"POEL"
    version u8       1
    width   u32      original image width in pixels
    height  u32      original image height in pixels
    scale   u8       codec scale id (0 = toy, 1 = full)
    z       u32 length + bytes      hyper-latent stream
    10 x    u32 length + bytes      latent streams, groups 0..4,
                                    anchor pass then non-anchor pass

Within a stream, symbols follow channel-major raster order over the cells
of that pass. Streams are independently flushed range-coder payloads, so
the non-anchor stream of a group can be decoded right after its anchors
without seeking.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import CodecConfig
from .context import ANCHOR, NONANCHOR, checkerboard_masks
from .gaussian import (BYPASS_ROW, CdfTable, quantized_cdf_matrix, scale_table,
                       sigma_to_index, table_bits)
from .model import CodecModel
from .rangecoder import SymbolDecoder, range_decode, range_encode
from .transforms import DOWNSAMPLE, HYPER_DOWNSAMPLE, PAD_MULTIPLE, crop_image, pad_image

MAGIC = b"POEL"
VERSION = 1
_HEADER = struct.Struct("<4sBIIB")


class BitstreamFormatError(ValueError):
    """Header or framing of a compressed payload is invalid."""


@dataclass
class EncodeStats:
    """Rate accounting produced while encoding."""

    measured_bits: int = 0
    table_bits: float = 0.0  # -log2 p summed over the quantized tables
    estimate_bits: float = 0.0  # -log2 p from the continuous model at snapped sigma
    num_pixels: int = 0

    @property
    def bpp(self) -> float:
        return self.measured_bits / self.num_pixels


@dataclass
class Bitstream:
    width: int
    height: int
    scale_id: int
    z_stream: bytes
    group_streams: list  # 10 payloads: (group, pass) in decoding order
    stats: EncodeStats | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.group_streams) != 10:
            raise BitstreamFormatError(f"expected 10 group streams, got {len(self.group_streams)}")

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, self.width, self.height, self.scale_id)]
        for payload in [self.z_stream, *self.group_streams]:
            parts.append(struct.pack("<I", len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < _HEADER.size:
            raise BitstreamFormatError("payload shorter than header")
        magic, version, width, height, scale_id = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise BitstreamFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BitstreamFormatError(f"unsupported version {version}")
        pos = _HEADER.size
        payloads = []
        for _ in range(11):
            if pos + 4 > len(data):
                raise BitstreamFormatError("stream table truncated")
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + length > len(data):
                raise BitstreamFormatError("stream payload truncated")
            payloads.append(data[pos:pos + length])
            pos += length
        if pos != len(data):
            raise BitstreamFormatError(f"{len(data) - pos} trailing bytes after streams")
        return cls(width=width, height=height, scale_id=scale_id,
                   z_stream=payloads[0], group_streams=payloads[1:])


def _pass_values(t: torch.Tensor, mask: torch.Tensor) -> np.ndarray:
    """Channel-major raster flattening of the masked cells of [C, h, w]."""
    return t[:, mask].detach().cpu().numpy().astype(np.float64).reshape(-1)


def _scatter_pass(t: torch.Tensor, mask: torch.Tensor, values: np.ndarray):
    t[:, mask] = torch.from_numpy(values.reshape(t.shape[0], -1)).to(t.dtype)


_SCALES = None


def _snapped_sigma(index: np.ndarray) -> np.ndarray:
    global _SCALES
    if _SCALES is None:
        _SCALES = scale_table()
    return _SCALES[index]


def _estimate_bits(symbols: np.ndarray, sigma_snapped: np.ndarray) -> float:
    from .gaussian import gaussian_likelihood

    p = gaussian_likelihood(torch.from_numpy(symbols.astype(np.float64)),
                            torch.zeros(()), torch.from_numpy(sigma_snapped),
                            bound=1e-30)
    return float(-torch.log2(p).sum())


def _encode_plane(values: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                  stats: EncodeStats) -> tuple[bytes, np.ndarray]:
    """Encode round(values - mu); returns (payload, quantized values)."""
    symbols = np.round(values - mu)
    if symbols.size and (np.abs(symbols) >= 2 ** 31).any():
        raise ValueError("latent values too large to code")
    symbols = symbols.astype(np.int64)
    table = CdfTable(cdf=quantized_cdf_matrix(), index=sigma_to_index(sigma),
                     bypass_row=BYPASS_ROW)
    payload = range_encode(symbols, table)
    stats.measured_bits += 8 * len(payload)
    stats.table_bits += table_bits(symbols, table)
    stats.estimate_bits += _estimate_bits(symbols, _snapped_sigma(table.index))
    return payload, symbols + mu


def _decode_plane(payload: bytes, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    table = CdfTable(cdf=quantized_cdf_matrix(), index=sigma_to_index(sigma),
                     bypass_row=BYPASS_ROW)
    symbols = range_decode(payload, table, mu.size)
    return symbols + mu


def padded_size(height: int, width: int) -> tuple[int, int]:
    pad = PAD_MULTIPLE
    return ((height + pad - 1) // pad * pad, (width + pad - 1) // pad * pad)


def _params_np(params, mask):
    mu = _pass_values(params.mu, mask)
    sigma = _pass_values(params.sigma, mask)
    return mu, sigma


def encode_latent(model: CodecModel, y: torch.Tensor, hyper_ctx: torch.Tensor,
                  stats: EncodeStats | None = None):
    """Encode a latent [M, h, w] into the 10 per-(group, pass) streams.

    Returns (streams, y_hat) where y_hat is the quantized latent the
    decoder will reproduce exactly.
    """
    stats = stats if stats is not None else EncodeStats(num_pixels=1)
    h, w = y.shape[-2:]
    anchor, nonanchor = checkerboard_masks(h, w)
    streams = []
    decoded = []
    with torch.no_grad():
        for k, sl in enumerate(model.layout.slices()):
            y_k = y[sl]
            prev = torch.cat(decoded, dim=0) if k > 0 else None
            y_hat_k = torch.zeros_like(y_k)
            for pass_, mask in ((ANCHOR, anchor), (NONANCHOR, nonanchor)):
                spatial = y_hat_k if pass_ == NONANCHOR else None
                params = model.context.entropy_params(prev, spatial, hyper_ctx, k, pass_)
                mu, sigma = _params_np(params, mask)
                payload, values = _encode_plane(_pass_values(y_k, mask), mu, sigma, stats)
                _scatter_pass(y_hat_k, mask, values)
                streams.append(payload)
            decoded.append(y_hat_k)
    return streams, torch.cat(decoded, dim=0)


def decode_latent_streams(model: CodecModel, streams, hyper_ctx: torch.Tensor,
                          grid_hw) -> torch.Tensor:
    """Parallel two-pass decoding of the 10 latent streams."""
    h, w = grid_hw
    anchor, nonanchor = checkerboard_masks(h, w)
    decoded = []
    with torch.no_grad():
        for k, sl in enumerate(model.layout.slices()):
            g = model.layout.group_sizes[k]
            prev = torch.cat(decoded, dim=0) if k > 0 else None
            y_hat_k = hyper_ctx.new_zeros((g, h, w))
            for j, (pass_, mask) in enumerate(((ANCHOR, anchor), (NONANCHOR, nonanchor))):
                spatial = y_hat_k if pass_ == NONANCHOR else None
                params = model.context.entropy_params(prev, spatial, hyper_ctx, k, pass_)
                mu, sigma = _params_np(params, mask)
                values = _decode_plane(streams[2 * k + j], mu, sigma)
                _scatter_pass(y_hat_k, mask, values)
            decoded.append(y_hat_k)
    return torch.cat(decoded, dim=0)


def decode_latent_streams_serial(model: CodecModel, streams, hyper_ctx: torch.Tensor,
                                 grid_hw) -> torch.Tensor:
    """Strict per-symbol reference decoder over the 10 latent streams.

    Follows the normative order and re-evaluates the parameter network
    after every symbol, conditioning on everything decoded so far. Serves
    as the equivalence oracle for decode_latent_streams.
    """
    h, w = grid_hw
    cdf = quantized_cdf_matrix()
    anchor, nonanchor = checkerboard_masks(h, w)
    decoded = []
    with torch.no_grad():
        for k, sl in enumerate(model.layout.slices()):
            g = model.layout.group_sizes[k]
            prev = torch.cat(decoded, dim=0) if k > 0 else None
            y_hat_k = hyper_ctx.new_zeros((g, h, w))
            for j, (pass_, mask) in enumerate(((ANCHOR, anchor), (NONANCHOR, nonanchor))):
                sd = SymbolDecoder(streams[2 * k + j], cdf, BYPASS_ROW)
                cells = mask.nonzero(as_tuple=False).tolist()
                for c in range(g):
                    for i, jw in cells:
                        spatial = y_hat_k if pass_ == NONANCHOR else None
                        params = model.context.entropy_params(
                            prev, spatial, hyper_ctx, k, pass_)
                        mu = float(params.mu[c, i, jw])
                        sigma = float(params.sigma[c, i, jw])
                        row = int(sigma_to_index(np.array([sigma]))[0])
                        symbol = sd.next_symbol(row)
                        y_hat_k[c, i, jw] = symbol + mu
            decoded.append(y_hat_k)
    return torch.cat(decoded, dim=0)


def compress_image(x: torch.Tensor, model: CodecModel,
                   return_latent: bool = False):
    """Encode an image tensor [3, H, W] in [0, 1] into a Bitstream.

    The encoder mirrors the decoder pass-for-pass so both sides condition
    on identical reconstructed latents. With ``return_latent`` the
    encoder-side quantized latent is returned alongside the Bitstream.
    """
    if x.dim() != 3 or x.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] image, got {tuple(x.shape)}")
    height, width = int(x.shape[1]), int(x.shape[2])
    stats = EncodeStats(num_pixels=height * width)
    with torch.no_grad():
        xp = pad_image(x)
        y = model.analysis(xp)
        z = model.hyper_analysis(y)
        mu_z, sigma_z = model.z_prior.params(z)
        z_payload, z_hat_flat = _encode_plane(
            z.flatten().cpu().numpy().astype(np.float64),
            mu_z.flatten().cpu().numpy().astype(np.float64),
            sigma_z.flatten().cpu().numpy().astype(np.float64), stats)
        z_hat = torch.from_numpy(z_hat_flat.reshape(z.shape)).to(z.dtype)
        hyper_ctx = model.hyper_synthesis(z_hat)
        streams, y_hat = encode_latent(model, y, hyper_ctx, stats)

    bs = Bitstream(width=width, height=height, scale_id=model.cfg.scale_id,
                   z_stream=z_payload, group_streams=streams, stats=stats)
    stats.measured_bits = 8 * len(bs.to_bytes())
    if return_latent:
        return bs, y_hat
    return bs


def _decode_hyper(bs: Bitstream, model: CodecModel):
    hp, wp = padded_size(bs.height, bs.width)
    h, w = hp // DOWNSAMPLE, wp // DOWNSAMPLE
    hz, wz = h // HYPER_DOWNSAMPLE, w // HYPER_DOWNSAMPLE
    ref = next(model.parameters())
    z_like = ref.new_zeros((model.cfg.hyper_channels, hz, wz))
    mu_z, sigma_z = model.z_prior.params(z_like)
    z_flat = _decode_plane(bs.z_stream, mu_z.flatten().cpu().numpy().astype(np.float64),
                           sigma_z.flatten().cpu().numpy().astype(np.float64))
    z_hat = torch.from_numpy(z_flat.reshape(z_like.shape)).to(ref.dtype)
    return model.hyper_synthesis(z_hat), h, w


def _check_model(bs: Bitstream, model: CodecModel):
    if bs.scale_id != model.cfg.scale_id:
        raise BitstreamFormatError(
            f"bitstream scale id {bs.scale_id} does not match model scale "
            f"id {model.cfg.scale_id}")


def decode_latent(bs: Bitstream, model: CodecModel) -> torch.Tensor:
    """Parallel two-pass decoding of the latent tensor [M, h, w]."""
    _check_model(bs, model)
    with torch.no_grad():
        hyper_ctx, h, w = _decode_hyper(bs, model)
        return decode_latent_streams(model, bs.group_streams, hyper_ctx, (h, w))


def decode_latent_serial(bs: Bitstream, model: CodecModel) -> torch.Tensor:
    """Per-symbol reference decoding of the latent tensor (equivalence oracle)."""
    _check_model(bs, model)
    with torch.no_grad():
        hyper_ctx, h, w = _decode_hyper(bs, model)
        return decode_latent_streams_serial(model, bs.group_streams, hyper_ctx, (h, w))


def decompress_image(bs: Bitstream | bytes, model: CodecModel) -> torch.Tensor:
    """Decode a Bitstream (or its serialized bytes) to an image [3, H, W] in [0, 1]."""
    if isinstance(bs, (bytes, bytearray)):
        bs = Bitstream.from_bytes(bytes(bs))
    y_hat = decode_latent(bs, model)
    with torch.no_grad():
        x_hat = model.synthesis(y_hat).clamp(0.0, 1.0)
    return crop_image(x_hat, bs.height, bs.width)
