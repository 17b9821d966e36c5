"""Time the compiled kernels against the numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from mcvl import _fallback
from mcvl.features import _bin_table, _orientation_votes, extract_dense

try:
    from mcvl import _kernels
except ImportError:
    _kernels = None


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels are not built; only the fallback can run")
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(96, 128))
    rows = []

    for width in (16, 24, 32, 40):
        w_lo, w_hi, b_lo = _orientation_votes(img, width / 24)
        tab = _bin_table(width)
        rows.append((f"sift_bin w={width}", lambda: _fallback.sift_bin(w_lo, w_hi, b_lo, tab, 2),
                     _kernels and (lambda: _kernels.sift_bin(w_lo, w_hi, b_lo, tab, 2))))

    X = rng.normal(size=(8000, 128))
    C = rng.normal(size=(128, 128))
    dots = np.ascontiguousarray(X @ C.T)
    rows.append(("vlad_aggregate 8000x128, K=128", lambda: _fallback.vlad_aggregate(X, C, dots),
                 _kernels and (lambda: _kernels.vlad_aggregate(X, C, dots))))

    w = rng.dirichlet(np.ones(1000))
    rows.append(("sus_indices N=1000", lambda: _fallback.sus_indices(w, 0.0004),
                 _kernels and (lambda: _kernels.sus_indices(w, 0.0004))))

    print(f"{'kernel':34s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, py, cy in rows:
        t_py = best_ms(py, args.repeat)
        if cy:
            t_cy = best_ms(cy, args.repeat)
            print(f"{name:34s} {t_py:10.3f} {t_cy:12.3f} {t_py / t_cy:7.1f}x")
        else:
            print(f"{name:34s} {t_py:10.3f} {'-':>12s}")
    print(f"{'extract_dense 128x96 (active)':34s} {best_ms(lambda: extract_dense(img), args.repeat):10.3f}")


if __name__ == "__main__":
    main()
