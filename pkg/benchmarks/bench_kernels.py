"""Time the numba and numpy versions of each kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

The first numba call is timed separately since it includes compilation
(or loading from the on-disk cache).
"""

import argparse
import time

import numpy as np

from fapl import kernels


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    feats = rng.normal(size=(2048, 64))
    centers = rng.normal(size=(32, 64))
    labels = rng.integers(0, 32, size=2048)
    relevance = rng.random((200, 2000)) < 0.02
    return {
        "cosine_matrix 2048x32x64": ("cosine_matrix", (feats, centers)),
        "center_delta 2048x64, K=32": ("center_delta", (feats, labels, centers)),
        "ranked_hits 200x2000": ("ranked_hits", (relevance,)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<30}{'first numba':>14}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, (kernel, inputs) in cases(rng).items():
        jit = getattr(kernels, kernel + "_numba")
        ref = getattr(kernels, kernel + "_numpy")
        t0 = time.perf_counter()
        out_jit = jit(*inputs)
        first = time.perf_counter() - t0
        out_ref = ref(*inputs)
        if not isinstance(out_jit, tuple):
            out_jit, out_ref = (out_jit,), (out_ref,)
        for a, b in zip(out_jit, out_ref):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        t_jit = best_of(jit, inputs, args.repeat)
        t_ref = best_of(ref, inputs, args.repeat)
        print(f"{name:<30}{first * 1e3:>12.2f}ms{t_jit * 1e3:>10.3f}ms{t_ref * 1e3:>10.3f}ms{t_ref / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
