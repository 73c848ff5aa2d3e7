"""Compiled kernels vs the pure-Python fallback.

Times each hot kernel on both backends, then the typed round trip end to end,
with each backend running in its own interpreter because the communicator
binds its backend at import.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tmpc import _kernels

ROUND_TRIP = """
import json, sys
from tmpc import _kernels
from tmpc.harness.bench import run_bench
reports = run_bench(1000, 100, sizes=(4, 1024, 1024 * 1024))
print(json.dumps([_kernels.BACKEND] + [[r.payload_size, r.typed_median_ns, r.raw_median_ns] for r in reports]))
"""


def kernel_cases():
    header = (b"TMPC", 1, 0, 1, 2, 3, 0xDEADBEEF, 16, 64)
    packed = _kernels._pykernels.pack_header(*header)
    payload_1k = bytes(range(256)) * 4
    bools = (np.arange(4096) % 2).astype(np.uint8).tobytes()
    offsets = np.array([0, 3], np.uint32)
    dst = np.zeros(256, np.float32)
    return {
        "fnv1a64(64 B)": lambda k: k.fnv1a64(payload_1k[:64]),
        "repeat_count(1 KiB)": lambda k: k.repeat_count(payload_1k, payload_1k[:256]),
        "find_bad_bool(4 KiB)": lambda k: k.find_bad_bool(bools, 4, offsets),
        "pack_header": lambda k: k.pack_header(*header),
        "unpack_header": lambda k: k.unpack_header(packed),
        "copy_into(1 KiB)": lambda k: k.copy_into(dst, payload_1k),
    }


def bench_kernels(repeat):
    impls = _kernels.implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the fallback is available")
    names = sorted(impls)
    print(f"{'kernel':<24}" + "".join(f"{n + ' ns':>14}" for n in names) + f"{'speedup':>10}")
    for label, fn in kernel_cases().items():
        ns = {}
        for name in names:
            impl = impls[name]
            number = 2000
            best = min(timeit.repeat(lambda: fn(impl), number=number, repeat=repeat))
            ns[name] = best / number * 1e9
        speed = f"{ns['python'] / ns['cython']:.1f}x" if len(ns) == 2 else "-"
        print(f"{label:<24}" + "".join(f"{ns[n]:>14.0f}" for n in names) + f"{speed:>10}")


def bench_round_trip():
    print("\ntyped vs raw round trip (median ns, inproc, 1000 iterations)")
    import json
    for pure in ("0", "1"):
        env = {**os.environ, "TMPC_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", ROUND_TRIP], env=env,
                             capture_output=True, text=True, check=True)
        backend, *rows = json.loads(out.stdout)
        for size, typed, raw in rows:
            print(f"  {backend:<7} size={size:<8} typed={typed:>9.0f} raw={raw:>9.0f} "
                  f"overhead={(typed - raw) / raw * 100:6.2f}%")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-round-trip", action="store_true")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if not args.skip_round_trip:
        bench_round_trip()


if __name__ == "__main__":
    main()
