"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Prints best-of-N wall time per kernel for each backend, the speedup, and
the largest difference between the two backends' outputs.
"""
import argparse
import timeit

import numpy as np

from hedgelab import _pykernels

try:
    from hedgelab import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(10_000, 7)))
    h = rng.normal(size=2)
    gy = rng.normal(size=(10_000, 7))
    return {
        "gbm_paths 1e5 x 22": lambda m: m.gbm_paths(0, 100_000, 22, 100.0, 1e-4, 0.0126),
        "standard_normals 1e4 x 44": lambda m: m.standard_normals(1, 10_000, 44),
        "conv1d fwd 1e4 x 7, d=2": lambda m: m.dilated_conv1d_forward(x, h, 2),
        "conv1d bwd 1e4 x 7, d=2": lambda m: m.dilated_conv1d_backward(x, h, 2, gy)[0],
        "conv1d fwd 256 x 7, d=4": lambda m: m.dilated_conv1d_forward(x[:256], h, 4),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:28s} {t_py * 1e3:10.2f}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(fn(_pykernels) - fn(_ckernels))))
        print(f"{name:28s} {t_py * 1e3:10.2f} {t_c * 1e3:10.2f} {t_py / t_c:7.1f}x {diff:10.1e}")


if __name__ == "__main__":
    main()
