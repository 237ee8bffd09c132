"""Small shared raster helpers: box scaling, bilinear sampling, flow-driven warps."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from ._kernels import grid_bilinear, warp_flow


def box_downsample(arr: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor cells; dimensions must divide evenly."""
    h, w = arr.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} not divisible by {factor}")
    return arr.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def bilinear_upsample(arr: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear scale-up with the half-pixel-center convention, edge clamped."""
    h, w = arr.shape
    oh, ow = h * factor, w * factor
    ys = (np.arange(oh) + 0.5) / factor - 0.5
    xs = (np.arange(ow) + 0.5) / factor - 0.5
    return grid_sample(arr, ys, xs)


def grid_sample(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sample of a regular grid (1-D coordinate vectors), edge clamped."""
    return grid_bilinear(arr, ys, xs)


def warp_plane(plane: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward warp: out(u) = plane(u + flow(u)), bilinear, border clamped."""
    h, w = plane.shape
    if flow.shape[:2] != (h, w):
        raise ValueError(f"flow {flow.shape[:2]} does not match plane {(h, w)}")
    return warp_flow(np.ascontiguousarray(plane, dtype=np.float64), flow)


def halve_flow(flow: np.ndarray) -> np.ndarray:
    """Half-resolution, half-magnitude flow for 4:2:0 chroma planes."""
    h, w = flow.shape[:2]
    if h % 2 or w % 2:
        raise ValueError("flow dimensions must be even to derive chroma flow")
    out = np.empty((h // 2, w // 2, 2), dtype=flow.dtype)
    out[..., 0] = box_downsample(flow[..., 0], 2) * 0.5
    out[..., 1] = box_downsample(flow[..., 1], 2) * 0.5
    return out


def smooth3(arr: np.ndarray) -> np.ndarray:
    return uniform_filter(arr, size=3, mode="nearest")


def to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)
