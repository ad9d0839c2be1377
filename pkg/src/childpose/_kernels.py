"""Inner loops that dominate runtime on long sessions.

Every kernel exists twice: a numba-compiled loop and a pure-numpy
equivalent. The numpy path is used when numba is not importable or when
``CHILDPOSE_DISABLE_NUMBA`` is set to a truthy value before import. Both
paths produce identical results; tests and ``benchmarks/bench_kernels.py``
call them side by side.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None


def _disabled_by_env() -> bool:
    flag = os.environ.get("CHILDPOSE_DISABLE_NUMBA", "").strip().lower()
    return flag in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()


def _jit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# segment rasterization + disk dilation

def disk_offsets(radius: float) -> np.ndarray:
    """Integer (dx, dy) offsets with dx**2 + dy**2 <= radius**2, shape (K, 2)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r = int(np.floor(radius))
    g = np.arange(-r, r + 1, dtype=np.int64)
    dx, dy = np.meshgrid(g, g, indexing="xy")
    keep = dx * dx + dy * dy <= radius * radius
    return np.stack([dx[keep], dy[keep]], axis=1).astype(np.int64)


def _rasterize_loop(segs, offsets, width, height, out):
    reach = 0
    for o in range(offsets.shape[0]):
        reach = max(reach, abs(offsets[o, 0]), abs(offsets[o, 1]))
    for m in range(segs.shape[0]):
        x0 = segs[m, 0]
        y0 = segs[m, 1]
        dx = segs[m, 2] - x0
        dy = segs[m, 3] - y0
        n = max(abs(dx), abs(dy))
        for k in range(n + 1):
            if n == 0:
                px = x0
                py = y0
            else:
                # nearest pixel along the minor axis, halves rounded up
                px = x0 + (2 * k * dx + n) // (2 * n)
                py = y0 + (2 * k * dy + n) // (2 * n)
            if px < -reach or py < -reach or px >= width + reach or py >= height + reach:
                continue
            for o in range(offsets.shape[0]):
                qx = px + offsets[o, 0]
                qy = py + offsets[o, 1]
                if 0 <= qx < width and 0 <= qy < height:
                    out[qy, qx] = True
    return out


_rasterize_nb = _jit(_rasterize_loop)


def rasterize_segments_numba(segs, offsets, width, height):
    out = np.zeros((height, width), dtype=np.bool_)
    if segs.shape[0] == 0 or offsets.shape[0] == 0:
        return out
    fn = _rasterize_nb if _rasterize_nb is not None else _rasterize_loop
    return fn(np.ascontiguousarray(segs, dtype=np.int64),
              np.ascontiguousarray(offsets, dtype=np.int64), width, height, out)


def segment_pixels(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Pixels visited by the integer line stepper, shape (n+1, 2) as (x, y)."""
    dx, dy = x1 - x0, y1 - y0
    n = max(abs(dx), abs(dy))
    if n == 0:
        return np.array([[x0, y0]], dtype=np.int64)
    k = np.arange(n + 1, dtype=np.int64)
    px = x0 + (2 * k * dx + n) // (2 * n)
    py = y0 + (2 * k * dy + n) // (2 * n)
    return np.stack([px, py], axis=1)


def rasterize_segments_numpy(segs, offsets, width, height):
    out = np.zeros((height, width), dtype=np.bool_)
    if segs.shape[0] == 0 or offsets.shape[0] == 0:
        return out
    reach = int(np.abs(offsets).max())
    padded = np.zeros((height + 2 * reach, width + 2 * reach), dtype=np.bool_)
    for x0, y0, x1, y1 in np.asarray(segs, dtype=np.int64):
        pix = segment_pixels(int(x0), int(y0), int(x1), int(y1)) + reach
        keep = ((pix[:, 0] >= 0) & (pix[:, 0] < padded.shape[1])
                & (pix[:, 1] >= 0) & (pix[:, 1] < padded.shape[0]))
        pix = pix[keep]
        padded[pix[:, 1], pix[:, 0]] = True
    for ox, oy in offsets:
        out |= padded[reach - oy:reach - oy + height, reach - ox:reach - ox + width]
    return out


def rasterize_segments(segs, offsets, width, height):
    if USE_NUMBA:
        return rasterize_segments_numba(segs, offsets, width, height)
    return rasterize_segments_numpy(segs, offsets, width, height)


# ---------------------------------------------------------------------------
# RANSAC candidate scoring
#
# Each candidate is the line through points ii[p], jj[p]. Its score is the
# weighted mean squared residual with residuals truncated at the inlier
# threshold, normalized by the total weight of all points.

def _score_lines_loop(h, f, w, ii, jj, thr, loss, count):
    n = h.shape[0]
    wsum = 0.0
    for k in range(n):
        wsum += w[k]
    t2 = thr * thr
    for p in range(ii.shape[0]):
        i = ii[p]
        j = jj[p]
        slope = (f[j] - f[i]) / (h[j] - h[i])
        icpt = f[i] - slope * h[i]
        acc = 0.0
        c = 0
        for k in range(n):
            r = f[k] - (slope * h[k] + icpt)
            if abs(r) <= thr:
                acc += w[k] * (r * r)
                c += 1
            else:
                acc += w[k] * t2
        loss[p] = acc / wsum
        count[p] = c


_score_lines_nb = _jit(_score_lines_loop)


def score_lines_numba(h, f, w, ii, jj, thr):
    loss = np.empty(ii.shape[0], dtype=np.float64)
    count = np.empty(ii.shape[0], dtype=np.int64)
    fn = _score_lines_nb if _score_lines_nb is not None else _score_lines_loop
    fn(np.ascontiguousarray(h, dtype=np.float64), np.ascontiguousarray(f, dtype=np.float64),
       np.ascontiguousarray(w, dtype=np.float64), np.ascontiguousarray(ii, dtype=np.int64),
       np.ascontiguousarray(jj, dtype=np.int64), float(thr), loss, count)
    return loss, count


def score_lines_numpy(h, f, w, ii, jj, thr, chunk=4096):
    h = np.asarray(h, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    # sequential accumulation (cumsum) so sums match the compiled loop bit for bit
    wsum = np.cumsum(w)[-1]
    t2 = thr * thr
    loss = np.empty(ii.shape[0], dtype=np.float64)
    count = np.empty(ii.shape[0], dtype=np.int64)
    for lo in range(0, ii.shape[0], chunk):
        a, b = ii[lo:lo + chunk], jj[lo:lo + chunk]
        slope = (f[b] - f[a]) / (h[b] - h[a])
        icpt = f[a] - slope * h[a]
        r = f[None, :] - (slope[:, None] * h[None, :] + icpt[:, None])
        inl = np.abs(r) <= thr
        terms = np.where(inl, w[None, :] * (r * r), w[None, :] * t2)
        loss[lo:lo + chunk] = np.cumsum(terms, axis=1)[:, -1] / wsum
        count[lo:lo + chunk] = inl.sum(axis=1)
    return loss, count


def score_lines(h, f, w, ii, jj, thr):
    if USE_NUMBA:
        return score_lines_numba(h, f, w, ii, jj, thr)
    return score_lines_numpy(h, f, w, ii, jj, thr)


# ---------------------------------------------------------------------------
# mask overlap counts

def _overlap_loop(a, b):
    # branch-free over flat uint8 views so the compiler can vectorize
    inter = 0
    na = 0
    nb = 0
    for k in range(a.size):
        va = np.int64(a[k])
        vb = np.int64(b[k])
        na += va
        nb += vb
        inter += va & vb
    return inter, na, nb


_overlap_nb = _jit(_overlap_loop)


def overlap_counts_numba(a, b):
    fn = _overlap_nb if _overlap_nb is not None else _overlap_loop
    a = np.ascontiguousarray(a, dtype=np.bool_).reshape(-1).view(np.uint8)
    b = np.ascontiguousarray(b, dtype=np.bool_).reshape(-1).view(np.uint8)
    inter, na, nb = fn(a, b)
    return int(inter), int(na), int(nb)


def overlap_counts_numpy(a, b):
    return (int(np.count_nonzero(a & b)), int(np.count_nonzero(a)), int(np.count_nonzero(b)))


def overlap_counts(a, b):
    if USE_NUMBA:
        return overlap_counts_numba(a, b)
    return overlap_counts_numpy(a, b)
