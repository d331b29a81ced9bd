"""Compare the JIT and pure-numpy kernel backends.

Run as

    python benchmarks/bench_kernels.py [--dims 32 32 40] [--batch 20] [--reps 5]

Each hot kernel is timed on both backends with identical inputs; the
outputs are also cross-checked so a speedup never hides a numerical
divergence. The JIT path pays its compilation cost in a warmup pass
that is excluded from the timings.
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))


def load_backend(name):
    os.environ["RELEVIS_BACKEND"] = name
    import relevis.backend
    return importlib.reload(relevis.backend)


def timeit(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", nargs=3, type=int, default=(32, 32, 40))
    ap.add_argument("--batch", type=int, default=20)
    ap.add_argument("--channels", type=int, default=5)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    b, c, (x, y, z) = args.batch, args.channels, tuple(args.dims)
    vol = rng.standard_normal((b, 1, x, y, z)).astype(np.float32)
    feat = rng.standard_normal((b, c, x, y, z)).astype(np.float32)
    w1 = (0.1 * rng.standard_normal((c, 1, 3, 3, 3))).astype(np.float32)
    w2 = (0.1 * rng.standard_normal((c, c, 3, 3, 3))).astype(np.float32)
    bias = (0.1 * rng.standard_normal(c)).astype(np.float32)

    numpy_be = load_backend("numpy")
    cases = {
        "conv3d 1ch->5ch": lambda be: be.conv3d(vol, w1, bias),
        "conv3d 5ch->5ch": lambda be: be.conv3d(feat, w2, bias),
        "conv3d_transpose": lambda be: be.conv3d_transpose(feat, w2),
        "conv3d_grad_weights": lambda be: be.conv3d_grad_weights(feat, feat, (3, 3, 3))[0],
        "maxpool3d": lambda be: be.maxpool3d(feat)[0],
    }
    reference = {name: fn(numpy_be) for name, fn in cases.items()}
    numpy_times = {name: timeit(lambda f=fn: f(numpy_be), args.reps) for name, fn in cases.items()}

    try:
        numba_be = load_backend("numba")
    except Exception as exc:
        print(f"numba backend unavailable ({exc}); numpy timings only")
        for name, t in numpy_times.items():
            print(f"{name:24s} numpy {t * 1e3:8.2f} ms")
        return

    for name, fn in cases.items():
        got = fn(numba_be)
        diff = float(np.max(np.abs(np.asarray(got, dtype=np.float64) - reference[name])))
        # accumulation order differs between backends, so scale by magnitude
        err = diff / max(1.0, float(np.max(np.abs(reference[name]))))
        if err > 1e-4:
            raise AssertionError(f"{name}: backends disagree by {err} (relative)")
        fn(numba_be)  # warm

    print(f"batch={b} channels={c} dims={(x, y, z)} (best of {args.reps})")
    print(f"{'kernel':24s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}")
    for name, fn in cases.items():
        t_numba = timeit(lambda f=fn: f(numba_be), args.reps)
        t_numpy = numpy_times[name]
        print(f"{name:24s} {t_numpy * 1e3:8.2f} ms {t_numba * 1e3:8.2f} ms "
              f"{t_numpy / t_numba:8.1f}x")


if __name__ == "__main__":
    main()
