"""Deterministic synthetic multi-camera scenes with closed-form ground truth.

A scene is a stack of fronto-parallel layers under a planar-parallax camera
model: between adjacent cameras every layer shifts horizontally by
gain * baseline / depth pixels, so the exact image at any continuous rig
position (and the exact flow between any two positions) is available
analytically. That makes rendered midpoints usable as ground truth for the
interpolation and streaming tests without shipping any binary assets.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .frame import Frame, PixelFormat, frame_from_planes, frame_from_raw


@dataclass(frozen=True)
class SpriteSpec:
    depth: float
    width: int
    height: int
    cx: float
    cy: float
    shape: str = "ellipse"  # or "box"
    amp_x: float = 0.0
    amp_y: float = 0.0
    period: float = 60.0
    phase: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 42
    width: int = 640
    height: int = 360
    format: str = "yuv420"  # gray8 | yuv420
    fps: int = 30
    camera_count: int = 12
    baseline: float = 1.0
    gain: float = 12.0
    angular_step: float = 5.0
    background_depth: float = 8.0
    sprites: tuple[SpriteSpec, ...] = (
        SpriteSpec(depth=2.0, width=120, height=96, cx=240.0, cy=150.0,
                   shape="ellipse", amp_x=9.0, amp_y=4.0, period=48.0),
        SpriteSpec(depth=3.0, width=150, height=80, cx=430.0, cy=230.0,
                   shape="box", amp_x=6.0, amp_y=6.0, period=72.0, phase=0.35),
    )

    def __post_init__(self) -> None:
        if self.width % 8 or self.height % 8:
            raise ValueError("scene size must be a multiple of 8")
        if self.format not in ("gray8", "yuv420"):
            raise ValueError(f"unsupported scene format {self.format!r}")
        if self.camera_count < 2:
            raise ValueError("need at least 2 cameras")
        depths = [self.background_depth] + [s.depth for s in self.sprites]
        if any(d <= 0 for d in depths):
            raise ValueError("layer depths must be positive")

    @property
    def pixel_format(self) -> PixelFormat:
        return PixelFormat.GRAY8 if self.format == "gray8" else PixelFormat.YUV420

    def disparity(self, depth: float) -> float:
        """Horizontal shift in pixels between adjacent cameras for a layer."""
        return self.gain * self.baseline / depth

    def to_json(self) -> dict:
        d = asdict(self)
        d["sprites"] = [asdict(s) for s in self.sprites]
        return d

    @staticmethod
    def from_json(d: dict) -> "SceneSpec":
        sprites = tuple(SpriteSpec(**s) for s in d.get("sprites", []))
        rest = {k: v for k, v in d.items() if k != "sprites"}
        return SceneSpec(sprites=sprites, **rest)


def _value_noise(rng: np.random.Generator, h: int, w: int,
                 spacings: tuple[int, ...], weights: tuple[float, ...]) -> np.ndarray:
    """Seeded multi-octave value noise in [0, 1], smooth and aperiodic."""
    out = np.zeros((h, w))
    for spacing, weight in zip(spacings, weights):
        gh = h // spacing + 3
        gw = w // spacing + 3
        grid = rng.random((gh, gw))
        ys = np.arange(h) / spacing
        xs = np.arange(w) / spacing
        y0 = ys.astype(int)
        x0 = xs.astype(int)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        # smoothstep weights avoid the creased look of raw bilinear noise
        fy = fy * fy * (3 - 2 * fy)
        fx = fx * fx * (3 - 2 * fx)
        a = grid[np.ix_(y0, x0)]
        b = grid[np.ix_(y0, x0 + 1)]
        c = grid[np.ix_(y0 + 1, x0)]
        d = grid[np.ix_(y0 + 1, x0 + 1)]
        out += weight * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy)
    return out / sum(weights)


def _sample_bilinear(canvas: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = canvas.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.minimum(ys.astype(int), h - 2) if h > 1 else np.zeros_like(ys, int)
    x0 = np.minimum(xs.astype(int), w - 2) if w > 1 else np.zeros_like(xs, int)
    fy = ys - y0
    fx = xs - x0
    a = canvas[y0, x0]
    b = canvas[y0, x0 + 1] if w > 1 else a
    c = canvas[y0 + 1, x0] if h > 1 else a
    d = canvas[y0 + 1, x0 + 1] if h > 1 and w > 1 else a
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


class _Layer:
    def __init__(self, disparity: float):
        self.disparity = disparity


class _Background(_Layer):
    def __init__(self, spec: SceneSpec, rng: np.random.Generator):
        super().__init__(spec.disparity(spec.background_depth))
        margin = int(np.ceil((spec.camera_count - 1) * self.disparity)) + 2
        cw = spec.width + margin
        self.luma = 28.0 + 190.0 * _value_noise(rng, spec.height, cw, (31, 9, 3), (0.55, 0.33, 0.12))
        self.chroma_u = 128.0 + 46.0 * (_value_noise(rng, spec.height // 2 + 1, cw // 2 + 1, (23,), (1.0,)) - 0.5)
        self.chroma_v = 128.0 + 46.0 * (_value_noise(rng, spec.height // 2 + 1, cw // 2 + 1, (17,), (1.0,)) - 0.5)


class _Sprite(_Layer):
    def __init__(self, spec: SceneSpec, s: SpriteSpec, rng: np.random.Generator):
        super().__init__(spec.disparity(s.depth))
        self.spec = s
        # +2 canvas margin keeps bilinear taps inside for fractional placement
        self.luma = 28.0 + 190.0 * _value_noise(rng, s.height + 2, s.width + 2, (13, 5), (0.6, 0.4))
        self.chroma_u = 128.0 + 46.0 * (_value_noise(rng, s.height // 2 + 2, s.width // 2 + 2, (11,), (1.0,)) - 0.5)
        self.chroma_v = 128.0 + 46.0 * (_value_noise(rng, s.height // 2 + 2, s.width // 2 + 2, (7,), (1.0,)) - 0.5)

    def motion(self, t: int) -> tuple[float, float]:
        s = self.spec
        angle = 2 * np.pi * (t / s.period + s.phase)
        return s.amp_x * np.sin(angle), s.amp_y * np.sin(2 * angle)

    def top_left(self, position: float, t: int) -> tuple[float, float]:
        s = self.spec
        mx, my = self.motion(t)
        left = s.cx + mx - s.width / 2 - position * self.disparity
        top = s.cy + my - s.height / 2
        return top, left

    def mask_at(self, position: float, t: int, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Binary silhouette evaluated at pixel centers."""
        s = self.spec
        top, left = self.top_left(position, t)
        lx = xs - left
        ly = ys - top
        inside = (lx >= 0) & (lx < s.width) & (ly >= 0) & (ly < s.height)
        if s.shape == "ellipse":
            nx = (lx - s.width / 2) / (s.width / 2)
            ny = (ly - s.height / 2) / (s.height / 2)
            inside &= nx * nx + ny * ny <= 1.0
        return inside


class SyntheticScene:
    """Procedural rig capture with analytic renders at any continuous position."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.background = _Background(spec, rng)
        self.sprites = [_Sprite(spec, s, rng) for s in spec.sprites]
        h, w = spec.height, spec.width
        self._ys = np.arange(h, dtype=np.float64)[:, None] + np.zeros((1, w))
        self._xs = np.arange(w, dtype=np.float64)[None, :] + np.zeros((h, 1))

    # layer ids: 0 = background, 1..len(sprites) = sprite list order (back to front)

    def _check_position(self, position: float) -> None:
        if not 0.0 <= position <= self.spec.camera_count - 1:
            raise ValueError(
                f"position {position} outside rig span [0, {self.spec.camera_count - 1}]")

    def top_layer(self, position: float, t: int) -> np.ndarray:
        """Per-pixel id of the frontmost layer (pixel centers)."""
        self._check_position(position)
        top = np.zeros((self.spec.height, self.spec.width), dtype=np.int32)
        for i, sp in enumerate(self.sprites):
            m = sp.mask_at(position, t, self._ys, self._xs)
            top[m] = i + 1
        return top

    def render_view(self, position: float, t: int = 0) -> Frame:
        self._check_position(position)
        spec = self.spec
        bg = self.background
        y = _sample_bilinear(bg.luma, self._ys, self._xs + position * bg.disparity)
        for sp in self.sprites:
            m = sp.mask_at(position, t, self._ys, self._xs)
            top, left = sp.top_left(position, t)
            sy = self._ys - top + 1.0  # +1: canvas margin offset
            sx = self._xs - left + 1.0
            y = np.where(m, _sample_bilinear(sp.luma, sy, sx), y)
        planes = [np.clip(np.rint(y), 0, 255).astype(np.uint8)]
        if spec.pixel_format == PixelFormat.YUV420:
            ch, cw = (spec.height + 1) // 2, (spec.width + 1) // 2
            cys = np.arange(ch, dtype=np.float64)[:, None] + np.zeros((1, cw)) + 0.25
            cxs = np.arange(cw, dtype=np.float64)[None, :] + np.zeros((ch, 1)) + 0.25
            lys = cys * 2  # luma-space pixel centers of each 2x2 group
            lxs = cxs * 2
            for attr in ("chroma_u", "chroma_v"):
                c = _sample_bilinear(getattr(bg, attr), cys, cxs + position * bg.disparity / 2)
                for sp in self.sprites:
                    m = sp.mask_at(position, t, lys - 0.5, lxs - 0.5)
                    top, left = sp.top_left(position, t)
                    sy = (lys - 0.5 - top) / 2 + 1.0
                    sx = (lxs - 0.5 - left) / 2 + 1.0
                    c = np.where(m, _sample_bilinear(getattr(sp, attr), sy, sx), c)
                planes.append(np.clip(np.rint(c), 0, 255).astype(np.uint8))
        return frame_from_planes(planes, spec.pixel_format, t)

    def layer_disparity(self, layer: int) -> float:
        if layer == 0:
            return self.background.disparity
        return self.sprites[layer - 1].disparity

    def ground_truth_flow(self, p_from: float, p_to: float, t: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Exact flow anchored at view p_from plus a visibility mask.

        flow[y, x] = (dx, dy) such that the content of view p_from at (x, y)
        appears at (x + dx, y + dy) in view p_to. valid[y, x] is False where
        that content is occluded in p_to.
        """
        top_a = self.top_layer(p_from, t)
        disp = np.array([self.layer_disparity(i) for i in range(len(self.sprites) + 1)])
        dx = (p_from - p_to) * disp[top_a]
        flow = np.zeros((self.spec.height, self.spec.width, 2), dtype=np.float64)
        flow[..., 0] = dx
        top_b = self.top_layer(p_to, t)
        tx = np.clip(np.rint(self._xs + dx).astype(int), 0, self.spec.width - 1)
        landed = top_b[self._ys.astype(int), tx]
        valid = landed == top_a
        # content shifted outside the frame is unverifiable too
        valid &= (self._xs + dx >= 0) & (self._xs + dx <= self.spec.width - 1)
        return flow, valid

    def silhouette_band(self, position: float, t: int = 0, band: int = 8) -> np.ndarray:
        """True within `band` px of any sprite silhouette edge in this view."""
        from scipy.ndimage import binary_dilation, binary_erosion

        out = np.zeros((self.spec.height, self.spec.width), dtype=bool)
        structure = np.ones((2 * band + 1, 2 * band + 1), dtype=bool)
        for sp in self.sprites:
            m = sp.mask_at(position, t, self._ys, self._xs)
            out |= binary_dilation(m, structure) & ~binary_erosion(m, structure)
        return out

    def metric_mask(self, position: float, t: int = 0, border: int = 8, band: int = 8) -> np.ndarray:
        """True where ground-truth comparisons are meaningful."""
        ok = np.ones((self.spec.height, self.spec.width), dtype=bool)
        if border > 0:
            ok[:border, :] = ok[-border:, :] = False
            ok[:, :border] = ok[:, -border:] = False
        if band > 0 and self.sprites:
            ok &= ~self.silhouette_band(position, t, band)
        return ok

    def occluded_in(self, p_view: float, p_source: float, t: int = 0) -> np.ndarray:
        """True where content visible at p_view is hidden in the source view."""
        _, valid = self.ground_truth_flow(p_view, p_source, t)
        return ~valid


def default_sprites_for(width: int, height: int) -> tuple[SpriteSpec, ...]:
    """The stock two-sprite arrangement, scaled proportionally to the frame."""
    sx = width / 640.0
    sy = height / 360.0

    def even(v: float) -> int:
        return max(8, int(round(v / 2)) * 2)

    return (
        SpriteSpec(depth=2.0, width=even(120 * sx), height=even(96 * sy),
                   cx=240.0 * sx, cy=150.0 * sy, shape="ellipse",
                   amp_x=9.0 * sx, amp_y=4.0 * sy, period=48.0),
        SpriteSpec(depth=3.0, width=even(150 * sx), height=even(80 * sy),
                   cx=430.0 * sx, cy=230.0 * sy, shape="box",
                   amp_x=6.0 * sx, amp_y=6.0 * sy, period=72.0, phase=0.35),
    )


def capture_sequence(scene: SyntheticScene, out_dir: str | Path, frame_count: int) -> Path:
    """Write per-camera raw sequences plus the scene manifest.

    Layout: <out>/cam<CC>/frame<NNNNNN>.raw with headerless planes in the
    scene's declared format, all cameras synchronized on the frame index.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = scene.spec
    manifest = {
        "kind": "fvv-scene",
        "frame_count": frame_count,
        "scene": spec.to_json(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for cam in range(spec.camera_count):
        cam_dir = out / f"cam{cam:02d}"
        cam_dir.mkdir(exist_ok=True)
        for t in range(frame_count):
            frame = scene.render_view(float(cam), t)
            (cam_dir / f"frame{t:06d}.raw").write_bytes(frame.raw_planes())
    return out


def load_manifest(scene_dir: str | Path) -> tuple[SceneSpec, int]:
    data = json.loads((Path(scene_dir) / "manifest.json").read_text())
    if data.get("kind") != "fvv-scene":
        raise ValueError(f"{scene_dir} does not contain a scene manifest")
    return SceneSpec.from_json(data["scene"]), int(data["frame_count"])


def load_frame(scene_dir: str | Path, camera: int, t: int, spec: SceneSpec) -> Frame:
    path = Path(scene_dir) / f"cam{camera:02d}" / f"frame{t:06d}.raw"
    return frame_from_raw(path.read_bytes(), spec.width, spec.height, spec.pixel_format, t)


def sequence_digest(scene_dir: str | Path) -> str:
    """Order-stable hash of every raw frame, for determinism checks."""
    h = hashlib.sha256()
    for path in sorted(Path(scene_dir).glob("cam*/frame*.raw")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()
