"""Hot inner loops, jitted when numba is available.

The numpy fallbacks compute identical results: SAD runs on integer-quantized
samples (order-independent sums), and both warp paths evaluate the same
bilinear expression in the same operation order.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return deco

    prange = range


@njit(cache=True, parallel=True)
def _sad_search_jit(ref: np.ndarray, pad: np.ndarray, radius: int, block: int,
                    nby: int, nbx: int) -> np.ndarray:
    side = 2 * radius + 1
    h, w = ref.shape
    sums = np.empty((side * side, nby, nbx), np.int32)
    for c in prange(side * side):
        dy = c // side
        dx = c % side
        for by in range(nby):
            ys = by * block
            ye = min(ys + block, h)
            for bx in range(nbx):
                xs = bx * block
                xe = min(xs + block, w)
                acc = np.int32(0)
                for y in range(ys, ye):
                    for x in range(xs, xe):
                        d = pad[y + dy, x + dx] - ref[y, x]
                        acc += d if d >= 0 else -d
                sums[c, by, bx] = acc
    return sums


def _sad_search_np(ref: np.ndarray, pad: np.ndarray, radius: int, block: int,
                   nby: int, nbx: int) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view

    h, w = ref.shape
    windows = sliding_window_view(pad, (h, w))
    diff = np.abs(windows - ref[None, None]).reshape(-1, h, w)
    ridx = np.arange(0, h, block)
    cidx = np.arange(0, w, block)
    return np.add.reduceat(np.add.reduceat(diff, ridx, axis=1), cidx, axis=2)


def sad_search(ref: np.ndarray, pad: np.ndarray, radius: int, block: int) -> np.ndarray:
    """Per-candidate per-block SAD over int32-quantized luma.

    ref is (h, w); pad is ref-sized plus `radius` edge padding on each side.
    Returns ((2r+1)**2, nby, nbx) sums; candidate c = (dy + r) * side + (dx + r).
    """
    h, w = ref.shape
    nby = (h + block - 1) // block
    nbx = (w + block - 1) // block
    if HAS_NUMBA:
        return _sad_search_jit(ref, pad, radius, block, nby, nbx)
    return _sad_search_np(ref, pad, radius, block, nby, nbx)


@njit(cache=True, parallel=True)
def _warp_flow_jit(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    h, w = src.shape
    out = np.empty((h, w), np.float64)
    for y in prange(h):
        for x in range(w):
            sx = x + flow[y, x, 0]
            sy = y + flow[y, x, 1]
            if sx < 0.0:
                sx = 0.0
            elif sx > w - 1:
                sx = float(w - 1)
            if sy < 0.0:
                sy = 0.0
            elif sy > h - 1:
                sy = float(h - 1)
            x0 = int(sx)
            y0 = int(sy)
            if x0 > w - 2:
                x0 = w - 2 if w > 1 else 0
            if y0 > h - 2:
                y0 = h - 2 if h > 1 else 0
            fx = sx - x0
            fy = sy - y0
            x1 = x0 + 1 if w > 1 else x0
            y1 = y0 + 1 if h > 1 else y0
            top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
            out[y, x] = (1.0 - fy) * top + fy * bot
    return out


def _warp_flow_np(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    h, w = src.shape
    flow = flow.astype(np.float64)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sx = np.clip(xs + flow[..., 0], 0.0, w - 1.0)
    sy = np.clip(ys + flow[..., 1], 0.0, h - 1.0)
    x0 = np.minimum(sx.astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(sy.astype(np.int64), max(h - 2, 0))
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
    bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    return (1.0 - fy) * top + fy * bot


def warp_flow(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Bilinear backward warp of a float64 plane by a (h, w, 2) flow field."""
    f = np.ascontiguousarray(flow, dtype=np.float32)
    if HAS_NUMBA:
        return _warp_flow_jit(src, f)
    return _warp_flow_np(src, f)


@njit(cache=True, parallel=True)
def _grid_bilinear_jit(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    oh = ys.shape[0]
    ow = xs.shape[0]
    out = np.empty((oh, ow), np.float64)
    for i in prange(oh):
        sy = ys[i]
        if sy < 0.0:
            sy = 0.0
        elif sy > h - 1:
            sy = float(h - 1)
        y0 = int(sy)
        if y0 > h - 2:
            y0 = h - 2 if h > 1 else 0
        fy = sy - y0
        y1 = y0 + 1 if h > 1 else y0
        for j in range(ow):
            sx = xs[j]
            if sx < 0.0:
                sx = 0.0
            elif sx > w - 1:
                sx = float(w - 1)
            x0 = int(sx)
            if x0 > w - 2:
                x0 = w - 2 if w > 1 else 0
            fx = sx - x0
            x1 = x0 + 1 if w > 1 else x0
            top = (1.0 - fx) * arr[y0, x0] + fx * arr[y0, x1]
            bot = (1.0 - fx) * arr[y1, x0] + fx * arr[y1, x1]
            out[i, j] = (1.0 - fy) * top + fy * bot
    return out


def _grid_bilinear_np(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    # x-lerp first, then y-lerp: the same operation order as the jit path
    h, w = arr.shape
    sy = np.clip(ys, 0.0, h - 1.0)
    sx = np.clip(xs, 0.0, w - 1.0)
    y0 = np.minimum(sy.astype(np.int64), max(h - 2, 0))
    x0 = np.minimum(sx.astype(np.int64), max(w - 2, 0))
    fy = (sy - y0)[:, None]
    fx = sx - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    cols = (1.0 - fx) * arr[:, x0] + fx * arr[:, x1]
    return (1.0 - fy) * cols[y0, :] + fy * cols[y1, :]


def grid_bilinear(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sample of a regular grid at the outer product of 1-D coords."""
    if HAS_NUMBA:
        return _grid_bilinear_jit(np.ascontiguousarray(arr, dtype=np.float64),
                                  np.asarray(ys, dtype=np.float64),
                                  np.asarray(xs, dtype=np.float64))
    return _grid_bilinear_np(np.ascontiguousarray(arr, dtype=np.float64),
                             np.asarray(ys, dtype=np.float64),
                             np.asarray(xs, dtype=np.float64))
