"""Time the compiled and NumPy kernels on the experiment shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints seconds per call (best of ``--repeat``) and the max relative
difference between backends for each shape.
"""

import argparse
import time

import numpy as np

from npmle._backend import available_backends

SHAPES = [  # (N, m, d)
    (1500, 3, 1),
    (1500, 500, 1),
    (1500, 100, 10),
    (1500, 500, 10),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def stats_call(mod, X, mu, logw):
    N, d = X.shape
    m = mu.shape[0]
    out = (np.empty(N), np.empty(m), np.empty((m, d)))
    return lambda: mod.mixture_stats(X, mu, logw, *out, True), out


def field_call(mod, X, lm, pts):
    vals, grads = np.empty(pts.shape[0]), np.empty(pts.shape)
    return lambda: mod.field_values(X, lm, pts, vals, grads, True), (vals, grads)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the NumPy backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'N':>6}{'m':>6}{'d':>4}" + "".join(f"{b:>12}" for b in backends)
          + f"{'speedup':>10}{'max rel diff':>14}")
    for N, m, d in SHAPES:
        X = rng.normal(size=(N, d)) * 3
        mu = X[rng.integers(0, N, m)].copy()
        logw = np.log(np.full(m, 1.0 / m))
        pts = np.ascontiguousarray(np.linspace(-8, 8, 1600)[:, None].repeat(d, axis=1)
                                   if d == 1 else X[:200])
        lm = np.empty(N)
        backends["python"].mixture_stats(X, mu, logw, lm, np.empty(m), np.empty((m, d)), False)
        for name, make, argv in (("mixture_stats", stats_call, (X, mu, logw)),
                                 ("field_values", field_call, (X, lm, pts))):
            times, outs = {}, {}
            for b, mod in backends.items():
                fn, out = make(mod, *argv)
                times[b] = best_of(fn, args.repeat)
                outs[b] = [o.copy() for o in out]
            row = f"{name:<14}{N:>6}{m:>6}{d:>4}" + "".join(f"{times[b]:>12.2e}" for b in backends)
            if "cython" in backends:
                diff = max(float(np.max(np.abs(a - c) / np.maximum(np.abs(a), 1e-300)))
                           for a, c in zip(outs["python"], outs["cython"]))
                row += f"{times['python'] / times['cython']:>9.1f}x{diff:>14.1e}"
            print(row)


if __name__ == "__main__":
    main()
