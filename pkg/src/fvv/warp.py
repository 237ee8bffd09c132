"""Backward warping, occlusion-aware masks, and convex blending of warped views."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowField
from .frame import Frame, PixelFormat, frame_from_planes
from .imageops import halve_flow, to_uint8, warp_plane


@dataclass(frozen=True)
class OcclusionMask:
    """Per-pixel blend weight in [0, 1]; 1 fully trusts the left warp."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2:
            raise ValueError("mask must be 2-D")
        if float(v.min()) < 0.0 or float(v.max()) > 1.0:
            raise ValueError("mask values must lie in [0, 1]")


def backward_warp(image: Frame, flow: FlowField) -> Frame:
    """out(u) = image(u + flow(u)): bilinear samples, border clamped.

    Chroma planes of 4:2:0 frames are warped with the half-resolution,
    half-magnitude version of the flow.
    """
    if (flow.width, flow.height) != (image.width, image.height):
        raise ValueError(
            f"flow {flow.width}x{flow.height} does not match frame {image.width}x{image.height}")
    v = flow.vectors
    planes = [to_uint8(warp_plane(image.planes[0], v))]
    if image.format == PixelFormat.YUV420:
        cv = halve_flow(v)
        planes.append(to_uint8(warp_plane(image.planes[1], cv)))
        planes.append(to_uint8(warp_plane(image.planes[2], cv)))
    elif image.format == PixelFormat.RGB8:
        rgb = image.planes[0]
        planes = [to_uint8(np.stack(
            [warp_plane(rgb[..., c], v) for c in range(3)], axis=-1))]
    return frame_from_planes(planes, image.format, image.timestamp)


def estimate_mask(warped_left: Frame, warped_right: Frame,
                  error_left: np.ndarray, error_right: np.ndarray,
                  epsilon: float = 1e-3) -> OcclusionMask:
    """M = (e_r + eps) / (e_l + e_r + 2 eps).

    ``error_left``/``error_right`` are per-pixel photometric match errors of
    the respective warps, so the weight drifts toward whichever side still
    explains the content; equal errors give an even 0.5 blend.
    """
    shapes = {warped_left.planes[0].shape, warped_right.planes[0].shape,
              error_left.shape, error_right.shape}
    if len(shapes) != 1:
        raise ValueError(f"mask inputs disagree on shape: {sorted(shapes)}")
    m = (error_right + epsilon) / (error_left + error_right + 2.0 * epsilon)
    return OcclusionMask(np.clip(m, 0.0, 1.0))


def _blend_plane(a: np.ndarray, b: np.ndarray, m: np.ndarray) -> np.ndarray:
    return to_uint8(m * a.astype(np.float64) + (1.0 - m) * b.astype(np.float64))


def blend(warped_left: Frame, warped_right: Frame, mask: OcclusionMask) -> Frame:
    """Per-pixel convex combination, rounded to integer sample values."""
    if (warped_left.width, warped_left.height, warped_left.format) != \
            (warped_right.width, warped_right.height, warped_right.format):
        raise ValueError("blend inputs must share size and format")
    m = mask.values
    if m.shape != warped_left.planes[0].shape[:2]:
        raise ValueError(f"mask {m.shape} does not match frame planes")
    if warped_left.format == PixelFormat.RGB8:
        planes = [_blend_plane(warped_left.planes[0], warped_right.planes[0], m[..., None])]
    else:
        planes = [_blend_plane(warped_left.planes[0], warped_right.planes[0], m)]
        if warped_left.format == PixelFormat.YUV420:
            from .imageops import box_downsample

            mc = box_downsample(m, 2)
            planes.append(_blend_plane(warped_left.planes[1], warped_right.planes[1], mc))
            planes.append(_blend_plane(warped_left.planes[2], warped_right.planes[2], mc))
    return frame_from_planes(planes, warped_left.format, warped_left.timestamp)
