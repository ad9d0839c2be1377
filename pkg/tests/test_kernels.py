import os
import subprocess
import sys

import numpy as np
import pytest

from childpose import _kernels

from oracles import line_pixels_exact

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def test_disk_offsets():
    assert sorted(map(tuple, _kernels.disk_offsets(1.0))) == [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]
    assert len(_kernels.disk_offsets(0.0)) == 1
    assert len(_kernels.disk_offsets(1.5)) == 9
    with pytest.raises(ValueError):
        _kernels.disk_offsets(-0.1)


def test_segment_pixels_match_exact_line(rng):
    for _ in range(300):
        x0, y0, x1, y1 = (int(v) for v in rng.integers(-30, 30, 4))
        got = {tuple(p) for p in _kernels.segment_pixels(x0, y0, x1, y1)}
        assert got == line_pixels_exact(x0, y0, x1, y1)


@needs_numba
def test_rasterize_backends_identical(rng):
    for _ in range(100):
        W, H = (int(v) for v in rng.integers(1, 50, 2))
        segs = rng.integers(-60, 110, size=(int(rng.integers(0, 12)), 4))
        offs = _kernels.disk_offsets(float(rng.uniform(0, 7)))
        np.testing.assert_array_equal(_kernels.rasterize_segments_numba(segs, offs, W, H),
                                      _kernels.rasterize_segments_numpy(segs, offs, W, H))


@needs_numba
def test_score_backends_identical(rng):
    n = 40
    h, f = rng.uniform(0.8, 1.9, n), rng.uniform(250, 450, n)
    w = rng.uniform(0.01, 1, n)
    ii, jj = np.triu_indices(n, 1)
    keep = h[ii] != h[jj]
    ii, jj = ii[keep].astype(np.int64), jj[keep].astype(np.int64)
    a = _kernels.score_lines_numba(h, f, w, ii, jj, 20.0)
    b = _kernels.score_lines_numpy(h, f, w, ii, jj, 20.0, chunk=97)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@needs_numba
def test_overlap_backends_identical(rng):
    for shape in [(1, 1), (7, 13), (424, 512)]:
        a, b = rng.random(shape) < 0.4, rng.random(shape) < 0.6
        assert _kernels.overlap_counts_numba(a, b) == _kernels.overlap_counts_numpy(a, b)
        assert _kernels.overlap_counts_numpy(a, b) == (int((a & b).sum()), int(a.sum()), int(b.sum()))


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", None), ("off", None)])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, CHILDPOSE_DISABLE_NUMBA=flag)
    r = subprocess.run([sys.executable, "-c", "from childpose import _kernels; print(_kernels.backend())"],
                       env=env, capture_output=True, text=True, check=True)
    want = expected or ("numba" if _kernels.HAVE_NUMBA else "numpy")
    assert r.stdout.strip() == want
