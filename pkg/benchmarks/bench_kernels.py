"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--duration 2]

Numba timings exclude the first (compiling) call.
"""

import argparse
import time
from contextlib import contextmanager

import numpy as np

from spandedup import _kernels_numpy, kernels
from spandedup.sim import reference_testbed, simulate
from spandedup.window import TimeWindow, WindowConfig, find_duplicates


def best_of(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


@contextmanager
def backend(impl):
    saved = {name: getattr(kernels, name) for name in ("ones_complement_sum", "first_mismatch", "scan_window",
                                                        "fifo_queue")}
    for name in saved:
        setattr(kernels, name, getattr(impl, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def cases(duration):
    rng = np.random.default_rng(0)
    header = rng.integers(0, 256, 1500, dtype=np.uint8)
    a = rng.integers(0, 256, 1472, dtype=np.uint8)
    b = a.copy()
    b[-1] ^= 1

    n = 4000
    keys = rng.integers(0, 2, n).astype(np.int64)
    avail = np.full(n, 64, np.int64)
    offs = np.arange(n, dtype=np.int64) * 64
    buf = rng.integers(0, 4, n * 64, dtype=np.uint8)

    enq = np.sort(rng.uniform(0, 1.0, 200_000))
    svc = np.full(enq.shape[0], 4.5e-6)

    trace = simulate(reference_testbed(125000, duration=duration, seed=1)).packets
    window = WindowConfig(TimeWindow(14.7648e-3))

    def scan(impl):
        hist = np.zeros(1 << 16, np.int64)
        return lambda: impl.scan_window(keys, offs, avail, buf, 0, n - 2, int(keys[-1]), int(offs[-1]), 64, hist)

    return {
        "ones_complement_sum (1500 B)": lambda impl: (lambda: impl.ones_complement_sum(header)),
        "first_mismatch (1472 B, equal prefix)": lambda impl: (lambda: impl.first_mismatch(a, b)),
        f"scan_window ({n} slots)": scan,
        f"fifo_queue ({enq.shape[0]} pkts, cap 40)": lambda impl: (lambda: impl.fifo_queue(enq, svc, 40)),
        f"fifo_queue ({enq.shape[0]} pkts, unbounded)": lambda impl: (lambda: impl.fifo_queue(enq, svc, 0)),
        f"end-to-end dedup ({len(trace)} pkts)": lambda impl: (lambda: find_duplicates(trace, window)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--duration", type=float, default=0.25, help="simulated seconds for the end-to-end trace")
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    impls = {"numpy": _kernels_numpy, "numba": kernels.numba_impl}
    print(f"{'case':44s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, make in cases(args.duration).items():
        times = {}
        for label, impl in impls.items():
            with backend(impl):
                times[label] = best_of(make(impl), args.repeat)
        print(f"{name:44s} {times['numpy'] * 1e3:10.3f}ms {times['numba'] * 1e3:10.3f}ms "
              f"{times['numpy'] / times['numba']:7.1f}x")


if __name__ == "__main__":
    main()
