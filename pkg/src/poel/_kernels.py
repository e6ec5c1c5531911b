"""Range coder inner loops.

Plain-Python/numpy bodies; poel.rangecoder compiles them with numba when
available (POEL_NUMBA=0 forces the interpreted fallback). Keep every body
self-contained: no helper calls, int64 arithmetic with explicit 32-bit
masking so the compiled and interpreted paths are bit-identical.

Coder: byte-wise carry-propagating range coder, 32-bit range, 16-bit
frequency totals. Encoded streams carry exactly (renormalization bytes + 5)
bytes; the decoder consumes all of them, so any truncation is detectable.

Token layout per CDF row: 256 value bins, then one escape bin. An escaped
value is coded as the escape token followed by 4 bypass-row tokens holding
the raw 32-bit value, little-endian.
"""

import numpy as np

MASK32 = 0xFFFFFFFF
TOP = 1 << 24
TOTAL = 1 << 16
SYMBOL_MIN = -127
SYMBOL_MAX = 128
ESCAPE = 256

OK = 0
TRUNCATED = 1
CORRUPT = 2


def encode_symbols(raw, index, cdf, bypass_row, out):
    """Encode raw int32 symbols into ``out`` (uint8). Returns byte count, or -1 if out is full."""
    cap = out.shape[0]
    low = np.int64(0)
    rng = np.int64(MASK32)
    cache = np.int64(0)
    cache_size = np.int64(1)
    pos = np.int64(0)
    tok5 = np.empty(5, dtype=np.int64)
    row5 = np.empty(5, dtype=np.int64)
    n = raw.shape[0]
    for i in range(n):
        s = np.int64(raw[i])
        if SYMBOL_MIN <= s <= SYMBOL_MAX:
            ntok = 1
            tok5[0] = s - SYMBOL_MIN
            row5[0] = index[i]
        else:
            ntok = 5
            tok5[0] = ESCAPE
            row5[0] = index[i]
            u = s & MASK32
            for b in range(4):
                tok5[1 + b] = (u >> (8 * b)) & 0xFF
                row5[1 + b] = bypass_row
        for t in range(ntok):
            tok = tok5[t]
            row = row5[t]
            c = np.int64(cdf[row, tok])
            w = np.int64(cdf[row, tok + 1]) - c
            r = rng // TOTAL
            low = low + r * c
            rng = r * w
            while rng < TOP:
                rng = rng << 8
                if low < 0xFF000000 or low > MASK32:
                    carry = low >> 32
                    if pos + cache_size > cap:
                        return -1
                    out[pos] = (cache + carry) & 0xFF
                    pos += 1
                    while cache_size > 1:
                        out[pos] = (0xFF + carry) & 0xFF
                        pos += 1
                        cache_size -= 1
                    cache = (low >> 24) & 0xFF
                else:
                    cache_size += 1
                low = (low << 8) & MASK32
    for _ in range(5):
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            if pos + cache_size > cap:
                return -1
            out[pos] = (cache + carry) & 0xFF
            pos += 1
            while cache_size > 1:
                out[pos] = (0xFF + carry) & 0xFF
                pos += 1
                cache_size -= 1
            cache = (low >> 24) & 0xFF
        else:
            cache_size += 1
        low = (low << 8) & MASK32
    return pos


def decode_symbols(data, index, cdf, bypass_row, out):
    """Decode ``index.shape[0]`` raw symbols from ``data``. Returns a status code."""
    m = data.shape[0]
    if m < 5:
        return TRUNCATED
    code = np.int64(0)
    for i in range(1, 5):
        code = (code << 8) | np.int64(data[i])
    rng = np.int64(MASK32)
    pos = np.int64(5)
    n = index.shape[0]
    nbins = cdf.shape[1] - 1
    for i in range(n):
        raw_val = np.int64(0)
        ntok = 1
        t = 0
        while t < ntok:
            row = index[i] if t == 0 else bypass_row
            r = rng // TOTAL
            f = code // r
            if f > TOTAL - 1:
                f = np.int64(TOTAL - 1)
            lo = 0
            hi = nbins
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if np.int64(cdf[row, mid]) <= f:
                    lo = mid
                else:
                    hi = mid
            tok = lo
            c = np.int64(cdf[row, tok])
            w = np.int64(cdf[row, tok + 1]) - c
            code = (code - r * c) & MASK32
            rng = r * w
            while rng < TOP:
                if pos >= m:
                    return TRUNCATED
                code = ((code << 8) | np.int64(data[pos])) & MASK32
                pos += 1
                rng = rng << 8
            if t == 0:
                if tok == ESCAPE:
                    ntok = 5
                else:
                    raw_val = tok + SYMBOL_MIN
            else:
                if tok > 0xFF:
                    return CORRUPT
                raw_val = raw_val | (tok << (8 * (t - 1)))
            t += 1
        if ntok == 5 and raw_val > 0x7FFFFFFF:
            raw_val = raw_val - (1 << 32)
        out[i] = raw_val
    return OK


def decoder_init(data, state):
    """state = int64[3] holding (code, range, pos). Returns a status code."""
    if data.shape[0] < 5:
        return TRUNCATED
    code = np.int64(0)
    for i in range(1, 5):
        code = (code << 8) | np.int64(data[i])
    state[0] = code
    state[1] = np.int64(MASK32)
    state[2] = np.int64(5)
    return OK


def decode_one(data, state, cdf, row):
    """Decode a single token from ``row``. Returns token, or -1 on truncation."""
    m = data.shape[0]
    code = state[0]
    rng = state[1]
    pos = state[2]
    nbins = cdf.shape[1] - 1
    r = rng // TOTAL
    f = code // r
    if f > TOTAL - 1:
        f = np.int64(TOTAL - 1)
    lo = 0
    hi = nbins
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if np.int64(cdf[row, mid]) <= f:
            lo = mid
        else:
            hi = mid
    tok = lo
    c = np.int64(cdf[row, tok])
    w = np.int64(cdf[row, tok + 1]) - c
    code = (code - r * c) & MASK32
    rng = r * w
    while rng < TOP:
        if pos >= m:
            return -1
        code = ((code << 8) | np.int64(data[pos])) & MASK32
        pos += 1
        rng = rng << 8
    state[0] = code
    state[1] = rng
    state[2] = pos
    return tok
