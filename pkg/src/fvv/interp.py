"""Midpoint view interpolation and recursive dense-view generation.

The pipeline per scale: estimate bidirectional flow (block matching on luma),
derive mid-anchored flows as -0.5x the full inter-view flows, backward-warp
both sides, weigh them with an occlusion-aware mask, and blend. Three scales
run coarse to fine at 1/4, 1/2 and full resolution, each refining the
upscaled previous flow by a bounded residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .flow import FlowField, estimate_flow_level
from .frame import Frame
from .imageops import box_downsample, smooth3, warp_plane
from .warp import OcclusionMask, backward_warp, blend, estimate_mask

SCALE_FACTORS = (4, 2, 1)  # coarse to fine


@dataclass(frozen=True)
class InterpConfig:
    block_size: tuple[int, int, int] = (8, 8, 8)
    search_radius: tuple[int, int, int] = (12, 4, 2)  # px at each scale, coarse first
    mask_epsilon: float = 1e-3
    border_band: int = 8
    refine: Callable[[Frame, "InterpDiagnostics"], Frame] | None = None

    def __post_init__(self) -> None:
        if len(self.block_size) != 3 or len(self.search_radius) != 3:
            raise ValueError("three scales need three block sizes and radii")
        if min(self.block_size) < 2 or min(self.search_radius) < 1:
            raise ValueError("degenerate block size or search radius")

    @property
    def max_span(self) -> int:
        """Largest full-resolution displacement the search can represent.

        Content shifted further than this saturates to a best-effort flow;
        keep the coarsest radius x4 at or above the expected disparity.
        """
        r0, r1, r2 = self.search_radius
        return 4 * r0 + 2 * r1 + r2


@dataclass
class ScaleDiagnostics:
    flow_lr: FlowField
    flow_rl: FlowField
    match_error_lr: np.ndarray
    match_error_rl: np.ndarray
    mask: np.ndarray | None = None
    blend_luma: np.ndarray | None = None


@dataclass
class InterpDiagnostics:
    scales: list[ScaleDiagnostics] = field(default_factory=list)
    flow_mid_left: FlowField | None = None
    flow_mid_right: FlowField | None = None
    mask: np.ndarray | None = None


def _luma_pyramid(frame: Frame) -> list[np.ndarray]:
    full = frame.luma.astype(np.float32)
    half = box_downsample(full, 2).astype(np.float32)
    quarter = box_downsample(half, 2).astype(np.float32)
    return [quarter, half, full]


# Weight of the warp-compression cue relative to photometric disagreement.
_OCCLUSION_GAIN = 4.0


def _mask_inputs(warped_l: np.ndarray, warped_r: np.ndarray,
                 f_ml: FlowField, f_mr: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel warp-reliability errors at mid coordinates.

    Where the two warps disagree photometrically, blame is apportioned by
    backward-warp compression: negative divergence of a mid-anchored flow
    means many mid pixels sample the same source pixels, the signature of
    content that view never saw (dis-occlusion).
    """
    diff = smooth3(np.abs(warped_l - warped_r))
    occ_l = smooth3(np.maximum(0.0, -(np.gradient(f_ml.vectors[..., 0], axis=1)
                                      + np.gradient(f_ml.vectors[..., 1], axis=0))))
    occ_r = smooth3(np.maximum(0.0, -(np.gradient(f_mr.vectors[..., 0], axis=1)
                                      + np.gradient(f_mr.vectors[..., 1], axis=0))))
    e_left = diff * (0.5 + _OCCLUSION_GAIN * occ_l)
    e_right = diff * (0.5 + _OCCLUSION_GAIN * occ_r)
    return e_left, e_right


def interpolate(left: Frame, right: Frame, config: InterpConfig | None = None,
                diagnostics: bool = False):
    """Synthesize the midpoint view between two same-size views.

    Returns the interpolated Frame, or (Frame, InterpDiagnostics) when
    ``diagnostics`` is set. Deterministic for fixed inputs and config.
    """
    cfg = config or InterpConfig()
    if (left.width, left.height, left.format) != (right.width, right.height, right.format):
        raise ValueError("interpolation inputs must share size and format")
    if left.width % 4 or left.height % 4:
        raise ValueError("frame dimensions must be divisible by 4 for the 3-scale pyramid")

    pyr_l = _luma_pyramid(left)
    pyr_r = _luma_pyramid(right)
    diag = InterpDiagnostics()
    flows: tuple[FlowField, FlowField] | None = None
    for s in range(3):
        yl, yr = pyr_l[s], pyr_r[s]
        flows, (err_lr, err_rl) = estimate_flow_level(
            yl, yr, flows, cfg.search_radius[s], cfg.block_size[s])
        sd = ScaleDiagnostics(flows[0], flows[1], err_lr, err_rl)
        if diagnostics and s < 2:
            f_ml = flows[0].scaled(-0.5)
            f_mr = flows[1].scaled(-0.5)
            wl = warp_plane(yl, f_ml.vectors)
            wr = warp_plane(yr, f_mr.vectors)
            e_l, e_r = _mask_inputs(wl, wr, f_ml, f_mr)
            m = (e_r + cfg.mask_epsilon) / (e_l + e_r + 2 * cfg.mask_epsilon)
            sd.mask = m
            sd.blend_luma = m * wl + (1.0 - m) * wr
        diag.scales.append(sd)

    flow_lr, flow_rl = flows
    f_ml = flow_lr.scaled(-0.5)
    f_mr = flow_rl.scaled(-0.5)
    warped_l = backward_warp(left, f_ml)
    warped_r = backward_warp(right, f_mr)
    e_left, e_right = _mask_inputs(warped_l.luma.astype(np.float64),
                                   warped_r.luma.astype(np.float64), f_ml, f_mr)
    mask = estimate_mask(warped_l, warped_r, e_left, e_right, cfg.mask_epsilon)
    out = blend(warped_l, warped_r, mask)

    diag.flow_mid_left = f_ml
    diag.flow_mid_right = f_mr
    diag.mask = mask.values
    diag.scales[-1].mask = mask.values
    if cfg.refine is not None:
        out = cfg.refine(out, diag)
    if diagnostics:
        return out, diag
    return out


def dense_views(left: Frame, right: Frame, stages: int,
                config: InterpConfig | None = None) -> list[Frame]:
    """Recursive midpoint interpolation: 2**stages - 1 views, left to right.

    Each stage interpolates between every adjacent pair of the current
    sequence, endpoints included; the returned list excludes the endpoints.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if stages > 6:
        raise ValueError("stages > 6 refused: 2**n - 1 views grows too fast")
    seq = [left, right]
    for _ in range(stages):
        nxt = []
        for a, b in zip(seq, seq[1:]):
            nxt.append(a)
            nxt.append(interpolate(a, b, config))
        nxt.append(seq[-1])
        seq = nxt
    return seq[1:-1]
