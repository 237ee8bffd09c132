"""Multi-view cluster frames: one full-resolution anchor camera tile stitched
with its downscaled neighboring virtual views, plus the global lookup table
mapping every view index to the clusters that carry it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import Frame, PixelFormat, frame_from_planes
from .imageops import bilinear_upsample, box_downsample, to_uint8
from .viewmodel import ViewIndexModel

TIER_FULL = "full"
TIER_QUARTER = "quarter"

# Interpolated tiles are 1/4 per dimension, so the small-tile grid is always
# `SCALE_FACTOR` rows tall next to the anchor.
SCALE_FACTOR = 4


class LayoutError(Exception):
    pass


@dataclass(frozen=True)
class TileRef:
    index: int  # global view index
    tier: str


@dataclass(frozen=True)
class ClusterLayout:
    cluster_id: int  # == anchor camera id
    anchor_index: int
    first_index: int
    last_index: int
    views_per_side: int
    tiles: tuple[TileRef, ...]  # ordered by global view index

    @property
    def tile_count(self) -> int:
        return len(self.tiles)

    def contains(self, view: int) -> bool:
        return self.first_index <= view <= self.last_index

    def clamp(self, view: int) -> int:
        return min(max(view, self.first_index), self.last_index)

    def tile_of(self, view: int) -> int:
        if not self.contains(view):
            raise LayoutError(f"view {view} outside cluster {self.cluster_id} "
                              f"range {self.first_index}..{self.last_index}")
        return view - self.first_index


def build_layouts(model: ViewIndexModel, views_per_side: int = 16) -> list[ClusterLayout]:
    """One cluster per camera; interior clusters span 2*vps+1 consecutive views."""
    if views_per_side < 1:
        raise LayoutError("views_per_side must be >= 1")
    if views_per_side > (1 << model.stages):
        raise LayoutError(
            f"views_per_side {views_per_side} exceeds the {(1 << model.stages) - 1} "
            f"interpolated views available per gap")
    layouts = []
    for cam in range(model.camera_count):
        anchor = model.view_index(cam)
        lo = max(0, anchor - views_per_side)
        hi = min(model.total_views - 1, anchor + views_per_side)
        tiles = tuple(TileRef(i, TIER_FULL if i == anchor else TIER_QUARTER)
                      for i in range(lo, hi + 1))
        layouts.append(ClusterLayout(cam, anchor, lo, hi, views_per_side, tiles))
    return layouts


def downscale(frame: Frame, factor: int) -> Frame:
    """Box-filter reduction by an integer factor per dimension."""
    if frame.width % factor or frame.height % factor:
        raise ValueError(f"{frame.width}x{frame.height} not divisible by {factor}")
    planes = []
    for p in frame.planes:
        if p.ndim == 3:  # RGB interleaved
            planes.append(to_uint8(np.stack(
                [box_downsample(p[..., c].astype(np.float64), factor) for c in range(3)],
                axis=-1)))
        else:
            planes.append(to_uint8(box_downsample(p.astype(np.float64), factor)))
    return frame_from_planes(planes, frame.format, frame.timestamp)


def upscale(frame: Frame, factor: int) -> Frame:
    """Bilinear enlargement by an integer factor per dimension."""
    planes = []
    for p in frame.planes:
        if p.ndim == 3:
            planes.append(to_uint8(np.stack(
                [bilinear_upsample(p[..., c].astype(np.float64), factor) for c in range(3)],
                axis=-1)))
        else:
            planes.append(to_uint8(bilinear_upsample(p.astype(np.float64), factor)))
    return frame_from_planes(planes, frame.format, frame.timestamp)


@dataclass(frozen=True)
class TileRect:
    index: int
    tier: str
    x: int
    y: int
    width: int
    height: int


@dataclass(frozen=True)
class ClusterFrame:
    cluster_id: int
    frame: Frame
    tile_map: tuple[TileRect, ...]

    def crop(self, rect: TileRect) -> Frame:
        return crop_frame(self.frame, rect.x, rect.y, rect.width, rect.height)


def crop_frame(frame: Frame, x: int, y: int, w: int, h: int) -> Frame:
    if frame.format == PixelFormat.YUV420 and (x % 2 or y % 2 or w % 2 or h % 2):
        raise ValueError("4:2:0 crops must be even-aligned")
    planes = [np.ascontiguousarray(frame.planes[0][y:y + h, x:x + w])]
    if frame.format == PixelFormat.YUV420:
        planes.append(np.ascontiguousarray(frame.planes[1][y // 2:(y + h) // 2, x // 2:(x + w) // 2]))
        planes.append(np.ascontiguousarray(frame.planes[2][y // 2:(y + h) // 2, x // 2:(x + w) // 2]))
    return frame_from_planes(planes, frame.format, frame.timestamp)


def cluster_geometry(base_width: int, base_height: int, small_count: int
                     ) -> tuple[int, int, int]:
    """(stitched width, stitched height, grid columns) for a cluster frame."""
    cols = (small_count + SCALE_FACTOR - 1) // SCALE_FACTOR
    cell_w = base_width // SCALE_FACTOR
    return base_width + cols * cell_w, base_height, cols


def assemble_cluster_frame(anchor_frame: Frame, interp_frames: list[Frame],
                           layout: ClusterLayout) -> ClusterFrame:
    """Stitch the anchor (full resolution, left) with 1/4-scale neighbor tiles
    in a column-major grid to its right; absent grid cells stay black."""
    small_refs = [t for t in layout.tiles if t.tier == TIER_QUARTER]
    if len(interp_frames) != len(small_refs):
        raise LayoutError(f"layout wants {len(small_refs)} interpolated views, "
                          f"got {len(interp_frames)}")
    w, h = anchor_frame.width, anchor_frame.height
    if w % (2 * SCALE_FACTOR) or h % (2 * SCALE_FACTOR):
        raise LayoutError("anchor dimensions must be divisible by 8")
    stitched_w, stitched_h, cols = cluster_geometry(w, h, len(small_refs))
    cell_w, cell_h = w // SCALE_FACTOR, h // SCALE_FACTOR

    y_plane = np.zeros((stitched_h, stitched_w), np.uint8)
    fmt = anchor_frame.format
    if fmt == PixelFormat.YUV420:
        chroma = [np.full((stitched_h // 2, stitched_w // 2), 128, np.uint8)
                  for _ in range(2)]
    elif fmt == PixelFormat.RGB8:
        raise LayoutError("cluster frames are gray or 4:2:0")
    else:
        chroma = []

    def paste(f: Frame, x: int, y: int) -> None:
        y_plane[y:y + f.height, x:x + f.width] = f.planes[0]
        for ci in range(len(chroma)):
            chroma[ci][y // 2:(y + f.height) // 2,
                       x // 2:(x + f.width) // 2] = f.planes[ci + 1]

    tile_map = []
    small_i = 0
    for ref in layout.tiles:
        if ref.tier == TIER_FULL:
            paste(anchor_frame, 0, 0)
            tile_map.append(TileRect(ref.index, TIER_FULL, 0, 0, w, h))
        else:
            small = interp_frames[small_i]
            if (small.width, small.height) != (cell_w, cell_h):
                raise LayoutError(f"tile {ref.index} is {small.width}x{small.height}, "
                                  f"cell is {cell_w}x{cell_h}")
            col, row = divmod(small_i, SCALE_FACTOR)
            x = w + col * cell_w
            y = row * cell_h
            paste(small, x, y)
            tile_map.append(TileRect(ref.index, TIER_QUARTER, x, y, cell_w, cell_h))
            small_i += 1
    stitched = frame_from_planes([y_plane, *chroma], fmt, anchor_frame.timestamp)
    return ClusterFrame(layout.cluster_id, stitched, tuple(tile_map))


@dataclass(frozen=True)
class Placement:
    cluster: int
    tile: int
    tier: str


class LookupTable:
    """Inverted index: global view -> every (cluster, tile, tier) carrying it."""

    def __init__(self, model: ViewIndexModel, views_per_side: int,
                 placements: list[list[Placement]]):
        self.model = model
        self.views_per_side = views_per_side
        self._placements = placements

    def placements(self, view: int) -> list[Placement]:
        return self._placements[view]

    @property
    def total_views(self) -> int:
        return len(self._placements)

    def anchor_of(self, cluster: int) -> int:
        return self.model.view_index(cluster)

    def to_json(self) -> dict:
        return {
            "views": [{"index": i,
                       "placements": [{"cluster": p.cluster, "tile": p.tile,
                                       "tier": p.tier} for p in pl]}
                      for i, pl in enumerate(self._placements)],
            "model": {"cameras": self.model.camera_count,
                      "stages": self.model.stages,
                      "views_per_side": self.views_per_side},
        }

    @staticmethod
    def from_json(doc: dict) -> "LookupTable":
        m = doc["model"]
        model = ViewIndexModel(m["cameras"], m["stages"])
        placements: list[list[Placement]] = [[] for _ in range(model.total_views)]
        for entry in doc["views"]:
            placements[entry["index"]] = [
                Placement(p["cluster"], p["tile"], p["tier"])
                for p in entry["placements"]]
        return LookupTable(model, m["views_per_side"], placements)


def build_lookup_table(layouts: list[ClusterLayout], model: ViewIndexModel
                       ) -> LookupTable:
    placements: list[list[Placement]] = [[] for _ in range(model.total_views)]
    for layout in layouts:
        for tile_idx, ref in enumerate(layout.tiles):
            placements[ref.index].append(Placement(layout.cluster_id, tile_idx, ref.tier))
    missing = [i for i, p in enumerate(placements) if not p]
    if missing:
        raise LayoutError(f"lookup table does not cover views {missing[:8]}"
                          f"{'...' if len(missing) > 8 else ''}")
    return LookupTable(model, layouts[0].views_per_side, placements)
