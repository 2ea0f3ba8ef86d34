"""Benchmark the compiled kernels against the pure-Python fallbacks.

Times the two hot paths on representative workloads: filling the
failure-count distribution grid, and batch-routing connections across the
merged interposer mesh. Run with `python benchmarks/bench_kernels.py`.
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from lumionsim._kernels import _pure

try:
    from lumionsim._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fill_dp(backend, n):
    rng = np.random.default_rng(11)
    p = rng.uniform(0.0, 0.05, size=n)

    def run():
        rows = np.zeros((n + 1, n + 1))
        rows[0, 0] = 1.0
        backend.fill_dp(rows, p)

    return _time(run, repeats=1 if n >= 5000 else 3)


def bench_mesh_routing(backend, rows, cols, n_requests):
    mrows, mcols = rows, (cols + 1) // 2
    rng = random.Random(3)
    chosen = rng.sample(range(mrows), n_requests)
    requests = [((r, 0), (r, mcols - 1)) for r in chosen]

    def run():
        hblock = np.zeros((mrows, mcols - 1), dtype=np.uint8)
        vblock = np.zeros((mrows - 1, mcols), dtype=np.uint8)
        for src, dst in requests:
            path = backend.grid_bfs(
                mrows, mcols, hblock, vblock, src[0] * mcols + src[1], dst[0] * mcols + dst[1]
            )
            assert path is not None
            for a, b in zip(path, path[1:]):
                ra, ca = divmod(a, mcols)
                rb, cb = divmod(b, mcols)
                if ra == rb:
                    hblock[ra, min(ca, cb)] = 1
                else:
                    vblock[min(ra, rb), ca] = 1

    return _time(run)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    dp_sizes = [1000, 4000] if args.quick else [2000, 10000]
    mesh_dims = (64, 64, 16) if args.quick else (256, 256, 64)

    backends = [("python", _pure)]
    if _core is not None:
        backends.append(("compiled", _core))
    else:
        print("compiled kernels not built; timing the fallback only\n")

    print(f"{'workload':<36} " + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for n in dp_sizes:
        times = [bench_fill_dp(backend, n) for _, backend in backends]
        ratio = times[0] / times[-1] if len(times) > 1 else 1.0
        print(
            f"{'dp grid fill, N=' + str(n):<36} "
            + "".join(f"{t * 1000:>10.1f}ms" for t in times)
            + f"{ratio:>9.1f}x"
        )
    rows, cols, nreq = mesh_dims
    times = [bench_mesh_routing(backend, rows, cols, nreq) for _, backend in backends]
    ratio = times[0] / times[-1] if len(times) > 1 else 1.0
    print(
        f"{f'mesh routing {rows}x{cols}, {nreq} requests':<36} "
        + "".join(f"{t * 1000:>10.1f}ms" for t in times)
        + f"{ratio:>9.1f}x"
    )


if __name__ == "__main__":
    main()
