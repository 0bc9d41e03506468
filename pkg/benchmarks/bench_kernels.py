"""Compare the numba and numpy backends of the per-pixel kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--size S]

Both backends are called directly, so the ``PTGAN_NUMBA`` flag does not
matter here. Outputs are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from ptgan import _kernels as K
from ptgan.metrics import gaussian_window


def cases(size, rng):
    img = rng.random((size, size, 3), dtype=np.float32)
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float32), np.arange(size, dtype=np.float32), indexing="ij")
    my = yy + rng.normal(0, 2, yy.shape).astype(np.float32)
    mx = xx + rng.normal(0, 2, xx.shape).astype(np.float32)
    gray = img[..., 0].astype(np.float64)
    k = gaussian_window()
    return {
        "remap_bilinear": (K._remap_bilinear_numba, K._remap_bilinear_numpy, (img, my, mx)),
        "hsv_adjust": (K._hsv_adjust_numba, K._hsv_adjust_numpy, (img, 0.05, 1.2)),
        "filter_valid (ssim)": (K._filter_valid_numba, K._filter_valid_numpy, (gray, k)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (fast, slow, a) in cases(args.size, rng).items():
        np.testing.assert_allclose(fast(*a), slow(*a), atol=1e-5)  # also warms the JIT
        t_fast = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_fast:>10.2f}{t_slow:>10.2f}{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
