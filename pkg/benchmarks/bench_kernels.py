"""Time each kernel with numba and with plain numpy on session-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]

Both backends are called directly, so the environment flag is irrelevant here.
Results are checked for equality before timing.
"""

import argparse
import timeit

import numpy as np

from childpose import _kernels
from childpose.metrics import default_bones


def cases(rng):
    # one person silhouette on a 512x424 depth frame, neck radius ~9 px
    n_bones = len(default_bones().edges)
    segs = np.column_stack([rng.integers(150, 350, n_bones), rng.integers(60, 380, n_bones),
                            rng.integers(150, 350, n_bones), rng.integers(60, 380, n_bones)]).astype(np.int64)
    offsets = _kernels.disk_offsets(9.0)
    yield "rasterize (11 bones, r=9, 512x424)", "rasterize_segments", (segs, offsets, 512, 424)

    # RANSAC scoring: 200 calibration points, every pair a candidate
    n = 200
    h, f = rng.uniform(0.8, 1.9, n), rng.uniform(250, 450, n)
    w = rng.uniform(0.01, 1.0, n)
    ii, jj = (a.astype(np.int64) for a in np.triu_indices(n, 1))
    yield f"score lines ({ii.size} pairs x {n} points)", "score_lines", (h, f, w, ii, jj, 20.0)

    a, b = rng.random((424, 512)) < 0.2, rng.random((424, 512)) < 0.2
    yield "mask overlap (512x424)", "overlap_counts", (a, b)


def same(x, y):
    if isinstance(x, tuple):
        return all(same(p, q) for p, q in zip(x, y))
    return np.array_equal(x, y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<42} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for label, name, call_args in cases(rng):
        fast = getattr(_kernels, f"{name}_numba")
        slow = getattr(_kernels, f"{name}_numpy")
        if not same(fast(*call_args), slow(*call_args)):  # also compiles the numba version
            raise SystemExit(f"{name}: backends disagree")
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<42} {t_fast:10.3f} {t_slow:10.3f} {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
