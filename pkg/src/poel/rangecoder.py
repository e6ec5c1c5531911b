"""Public range coder API over the numba/interpreted kernels.

Backend selection happens once at import: numba unless POEL_NUMBA=0 (or
numba is unavailable). Both backends run the same kernel source and emit
byte-identical streams.
"""

import os
import warnings

import numpy as np

from . import _kernels
from .gaussian import CdfTable


class TruncatedStreamError(ValueError):
    """The byte stream ended before all requested symbols were decoded."""


class CorruptStreamError(ValueError):
    """The byte stream decoded to structurally impossible tokens."""


def _want_numba() -> bool:
    return os.environ.get("POEL_NUMBA", "1").lower() not in ("0", "false", "no")


def _build_backend():
    if _want_numba():
        try:
            import numba

            jit = numba.njit(cache=True)
            return "numba", {
                "encode_symbols": jit(_kernels.encode_symbols),
                "decode_symbols": jit(_kernels.decode_symbols),
                "decoder_init": jit(_kernels.decoder_init),
                "decode_one": jit(_kernels.decode_one),
            }
        except ImportError:
            warnings.warn("numba unavailable, falling back to interpreted range coder")
    return "python", {
        "encode_symbols": _kernels.encode_symbols,
        "decode_symbols": _kernels.decode_symbols,
        "decoder_init": _kernels.decoder_init,
        "decode_one": _kernels.decode_one,
    }


_BACKEND_NAME, _FNS = _build_backend()


def backend_name() -> str:
    return _BACKEND_NAME


def _as_symbols(symbols) -> np.ndarray:
    arr = np.ascontiguousarray(symbols, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < -(1 << 31) or arr.max() >= (1 << 31)):
        raise ValueError("symbols outside 32-bit range cannot be coded")
    return arr.astype(np.int32)


def range_encode(symbols, table: CdfTable) -> bytes:
    """Losslessly encode integer symbols under per-symbol CDF rows."""
    raw = _as_symbols(symbols)
    if raw.size != len(table):
        raise ValueError(f"got {raw.size} symbols for a table of length {len(table)}")
    n_escape = int(((raw < _kernels.SYMBOL_MIN) | (raw > _kernels.SYMBOL_MAX)).sum())
    cap = 2 * raw.size + 10 * n_escape + 16
    out = np.empty(cap, dtype=np.uint8)
    nbytes = _FNS["encode_symbols"](raw, table.index, table.cdf, table.bypass_row, out)
    assert nbytes >= 0, "encoder capacity estimate violated"
    return out[:nbytes].tobytes()


def range_decode(data: bytes, table: CdfTable, n: int) -> np.ndarray:
    """Decode ``n`` symbols; inverse of range_encode for the same table."""
    if n != len(table):
        raise ValueError(f"requested {n} symbols from a table of length {len(table)}")
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(n, dtype=np.int64)
    status = _FNS["decode_symbols"](buf, table.index, table.cdf, table.bypass_row, out)
    if status == _kernels.TRUNCATED:
        raise TruncatedStreamError(f"stream of {len(data)} bytes too short for {n} symbols")
    if status == _kernels.CORRUPT:
        raise CorruptStreamError("invalid escape payload token")
    return out


class SymbolDecoder:
    """Stateful one-symbol-at-a-time decoder (used by the serial reference path).

    The CDF row is chosen per call, so callers may derive it from context
    that only becomes available as symbols are decoded.
    """

    def __init__(self, data: bytes, cdf: np.ndarray, bypass_row: int):
        self._data = np.frombuffer(data, dtype=np.uint8)
        self._cdf = np.ascontiguousarray(cdf, dtype=np.uint32)
        self._bypass_row = int(bypass_row)
        self._state = np.zeros(3, dtype=np.int64)
        if _FNS["decoder_init"](self._data, self._state) != _kernels.OK:
            raise TruncatedStreamError("stream shorter than coder preamble")

    def next_symbol(self, row: int) -> int:
        tok = int(_FNS["decode_one"](self._data, self._state, self._cdf, int(row)))
        if tok < 0:
            raise TruncatedStreamError("stream ended mid-symbol")
        if tok == _kernels.ESCAPE:
            value = 0
            for b in range(4):
                byte = int(_FNS["decode_one"](self._data, self._state, self._cdf,
                                              self._bypass_row))
                if byte < 0:
                    raise TruncatedStreamError("stream ended inside escape payload")
                if byte > 0xFF:
                    raise CorruptStreamError("invalid escape payload token")
                value |= byte << (8 * b)
            if value > 0x7FFFFFFF:
                value -= 1 << 32
            return value
        return tok + _kernels.SYMBOL_MIN
