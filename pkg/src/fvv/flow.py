"""Coarse-to-fine bidirectional flow estimation by pyramidal block matching.

Each pyramid level searches an integer residual displacement per block on
top of the upscaled previous-level flow, so the final field is literally
prev_upscaled + residual with the residual bounded by the level's search
radius. Matching minimizes the sum of absolute luma differences; ties break
deterministically toward the smallest displacement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import sad_search
from .imageops import grid_sample, warp_plane

# Samples are quantized to 1/8 before matching so SAD sums are integer and
# candidate ordering is exact regardless of summation order.
_SAD_QUANT = 8.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (dx, dy) offsets in pixels at one scale."""

    width: int
    height: int
    vectors: np.ndarray  # (h, w, 2) float32, [..., 0]=dx, [..., 1]=dy

    def __post_init__(self) -> None:
        if self.vectors.shape != (self.height, self.width, 2):
            raise ValueError(
                f"flow vectors {self.vectors.shape} != {(self.height, self.width, 2)}")

    @staticmethod
    def zero(width: int, height: int) -> "FlowField":
        return FlowField(width, height, np.zeros((height, width, 2), dtype=np.float32))

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(self.width, self.height, self.vectors * np.float32(factor))

    def max_magnitude(self) -> float:
        return float(np.max(np.abs(self.vectors))) if self.vectors.size else 0.0


def upscale_flow(flow: FlowField, width: int, height: int) -> FlowField:
    """Resize a flow field to a 2x finer level, doubling vector magnitudes."""
    ys = (np.arange(height) + 0.5) * (flow.height / height) - 0.5
    xs = (np.arange(width) + 0.5) * (flow.width / width) - 0.5
    v = np.empty((height, width, 2), dtype=np.float32)
    v[..., 0] = grid_sample(flow.vectors[..., 0], ys, xs) * 2.0
    v[..., 1] = grid_sample(flow.vectors[..., 1], ys, xs) * 2.0
    return FlowField(width, height, v)


def _candidate_order(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Search offsets sorted by the tie rule, plus their stack indices."""
    side = 2 * radius + 1
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    dy = dy.ravel()
    dx = dx.ravel()
    order = np.lexsort((dx, dy, np.abs(dy), dx * dx + dy * dy))
    offsets = np.stack([dx[order], dy[order]], axis=1).astype(np.float32)
    stack_index = (dy[order] + radius) * side + (dx[order] + radius)
    return offsets, stack_index


def _block_match(ref: np.ndarray, target: np.ndarray, radius: int, block: int
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive per-block SAD search of target around ref.

    Returns block-grid arrays: offsets (nby, nbx, 2) of the best (dx, dy)
    and the matching mean absolute error (nby, nbx) in sample units.
    """
    h, w = ref.shape
    ref_q = np.rint(ref * _SAD_QUANT).astype(np.int32)
    pad_q = np.rint(np.pad(target, radius, mode="edge") * _SAD_QUANT).astype(np.int32)
    sums = sad_search(ref_q, pad_q, radius, block)
    offsets, stack_index = _candidate_order(radius)
    sums = sums[stack_index]  # tie-rule order; argmin takes the first minimum
    best = np.argmin(sums, axis=0)
    nby, nbx = best.shape
    grid_r, grid_c = np.indices((nby, nbx))
    best_sad = sums[best, grid_r, grid_c]
    ridx = np.arange(0, h, block)
    cidx = np.arange(0, w, block)
    rows = np.minimum(ridx + block, h) - ridx
    cols = np.minimum(cidx + block, w) - cidx
    area = rows[:, None] * cols[None, :]
    return offsets[best], best_sad / (area * _SAD_QUANT)


def _block_to_pixel(vals: np.ndarray, h: int, w: int, block: int) -> np.ndarray:
    """Bilinear interpolation of block-center values out to every pixel."""
    ys = (np.arange(h) - (block - 1) / 2) / block
    xs = (np.arange(w) - (block - 1) / 2) / block
    return grid_sample(vals, ys, xs)


def estimate_flow_level(left: np.ndarray, right: np.ndarray,
                        prev: tuple[FlowField, FlowField] | None,
                        radius: int, block: int
                        ) -> tuple[tuple[FlowField, FlowField], tuple[np.ndarray, np.ndarray]]:
    """One pyramid level of bidirectional flow.

    ``left``/``right`` are same-size luma planes; ``prev`` is the previous
    (coarser) level's flow pair, upscaled here, or None at the coarsest
    level. Returns ((F_l→r, F_r→l), (err_l, err_r)) where the error maps are
    per-pixel mean absolute match errors of the winning candidates.
    """
    if left.shape != right.shape:
        raise ValueError(f"level shape mismatch {left.shape} vs {right.shape}")
    h, w = left.shape
    left32 = left.astype(np.float32)
    right32 = right.astype(np.float32)
    flows = []
    errors = []
    for ref, target, idx in ((left32, right32, 0), (right32, left32, 1)):
        if prev is None:
            base = np.zeros((h, w, 2), dtype=np.float32)
        else:
            base = upscale_flow(prev[idx], w, h).vectors
            target = warp_plane(target, base)
        block_off, block_err = _block_match(ref, target, radius, block)
        res = np.empty((h, w, 2), dtype=np.float32)
        res[..., 0] = _block_to_pixel(block_off[..., 0], h, w, block)
        res[..., 1] = _block_to_pixel(block_off[..., 1], h, w, block)
        flows.append(FlowField(w, h, base + res))
        errors.append(_block_to_pixel(block_err, h, w, block))
    return (flows[0], flows[1]), (errors[0], errors[1])
