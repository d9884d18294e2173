"""Benchmark: compiled vs pure-Python closest-point kernel.

The sphere search dominates Monte Carlo runs on non-diagonal lattices
(dither sampling, moment estimation, block quantization), so this compares
both backends on batched workloads of increasing dimension.

Usage: python benchmarks/bench_kernels.py [--batch 20000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from latfun.kernels import _sphere_py, available_backends


def _prepare(gen, rng, batch):
    q, r = np.linalg.qr(gen)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    r = np.ascontiguousarray(s[:, None] * r)
    q = q * s[None, :]
    x = rng.normal(scale=2.0, size=(batch, gen.shape[0])) @ gen.T
    y = np.ascontiguousarray(x @ q)
    return r, y


def _time(impl, r, y, repeats):
    out = np.zeros(y.shape, dtype=np.longlong)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        impl.nearest_point_batch(r, y, out)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _conditioned(rng, n):
    while True:
        g = rng.normal(size=(n, n))
        if np.linalg.cond(g) < 6.0:
            return g


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {backends}")
    if "cython" in backends:
        from latfun.kernels import _sphere_cy
    else:
        _sphere_cy = None
        print("compiled kernel not built; timing the pure backend only\n")

    rng = np.random.default_rng(7)
    cases = [
        ("hexagonal n=2", np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])),
        ("random n=4", _conditioned(rng, 4)),
        ("random n=6", _conditioned(rng, 6)),
        ("random n=8", _conditioned(rng, 8)),
    ]

    header = f"{'case':<16}{'batch':>8}{'python':>12}{'cython':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, gen in cases:
        r, y = _prepare(gen, rng, args.batch)
        t_py, out_py = _time(_sphere_py, r, y, args.repeats)
        if _sphere_cy is not None:
            t_cy, out_cy = _time(_sphere_cy, r, y, args.repeats)
            assert np.array_equal(out_py, out_cy), "backend outputs disagree"
            print(f"{name:<16}{args.batch:>8}{t_py:>11.3f}s{t_cy:>11.4f}s"
                  f"{t_py / t_cy:>9.0f}x")
        else:
            print(f"{name:<16}{args.batch:>8}{t_py:>11.3f}s{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
