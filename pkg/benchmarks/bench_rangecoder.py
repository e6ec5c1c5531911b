"""Range coder throughput: numba-compiled kernels vs the interpreted fallback.

Usage: python benchmarks/bench_rangecoder.py [n_symbols]

Both backends run the same kernel source (poel._kernels); this benchmark
compiles one copy with numba and times both on identical workloads,
checking the outputs are byte-identical. POEL_NUMBA=0 selects the
interpreted path inside the package itself; here we always compare both.
"""

import sys
import time

import numpy as np

from poel import _kernels
from poel.gaussian import build_cdf_table, table_bits


def make_workload(n, seed=0):
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(0.11, 30.0, n)
    symbols = np.round(rng.normal(0.0, sigma)).astype(np.int64)
    table = build_cdf_table(np.zeros(n), sigma)
    return symbols.astype(np.int32), table


def bench(label, encode, decode, symbols, table, repeats=3):
    cap = 2 * symbols.size + 10 * symbols.size + 16
    out = np.empty(cap, dtype=np.uint8)
    dec = np.empty(symbols.size, dtype=np.int64)

    nbytes = encode(symbols, table.index, table.cdf, table.bypass_row, out)
    payload = out[:nbytes].copy()
    status = decode(payload, table.index, table.cdf, table.bypass_row, dec)
    assert status == _kernels.OK and (dec == symbols).all()

    enc_t = min(_time(lambda: encode(symbols, table.index, table.cdf,
                                     table.bypass_row, out)) for _ in range(repeats))
    dec_t = min(_time(lambda: decode(payload, table.index, table.cdf,
                                     table.bypass_row, dec)) for _ in range(repeats))
    n = symbols.size
    print(f"{label:12s} encode {n / enc_t / 1e6:8.2f} Msym/s   "
          f"decode {n / dec_t / 1e6:8.2f} Msym/s   "
          f"({nbytes} bytes, {8 * nbytes / n:.2f} bits/sym)")
    return payload


def _time(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
    symbols, table = make_workload(n)
    ideal = table_bits(symbols, table)
    print(f"{n} symbols, table entropy {ideal / 8 / 1024:.1f} KiB")

    interpreted = (_kernels.encode_symbols, _kernels.decode_symbols)
    try:
        import numba

        jit = numba.njit(cache=True)
        compiled = (jit(_kernels.encode_symbols), jit(_kernels.decode_symbols))
        # trigger compilation outside the timed region
        warm_syms, warm_table = make_workload(256, seed=1)
        bench("numba(warm)", *compiled, warm_syms, warm_table, repeats=1)
        payload_nb = bench("numba", *compiled, symbols, table)
    except ImportError:
        compiled = None
        print("numba unavailable; interpreted path only")

    # the interpreted path is slow; scale the workload down and verify both
    # backends agree byte-for-byte on it
    small = min(n, 20_000)
    s_syms, s_table = make_workload(small, seed=2)
    payload_py = bench("python", *interpreted, s_syms, s_table, repeats=1)
    if compiled is not None:
        payload_nb_small = bench("numba", *compiled, s_syms, s_table, repeats=1)
        assert payload_py.tobytes() == payload_nb_small.tobytes(), "backend mismatch"
        print("backends byte-identical on shared workload")


if __name__ == "__main__":
    main()
