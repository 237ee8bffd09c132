"""Pure client-side view selection and tile extraction."""
from __future__ import annotations

from dataclasses import dataclass

from ..cluster import ClusterLayout, LookupTable, TileRef


def select_cluster(view: int, lookup: LookupTable) -> int:
    """Cluster whose anchor is nearest the view; ties go to the lower id."""
    if not 0 <= view < lookup.total_views:
        raise IndexError(f"view {view} out of range 0..{lookup.total_views - 1}")
    best = None
    for cluster in range(lookup.model.camera_count):
        distance = abs(lookup.anchor_of(cluster) - view)
        if best is None or distance < best[0]:
            best = (distance, cluster)
    return best[1]


def layout_from_lookup(lookup: LookupTable, cluster: int) -> ClusterLayout:
    """Rebuild a cluster's tile layout from the lookup document."""
    anchor = lookup.anchor_of(cluster)
    members = [(view, p.tier) for view in range(lookup.total_views)
               for p in lookup.placements(view) if p.cluster == cluster]
    members.sort()
    tiles = tuple(TileRef(v, tier) for v, tier in members)
    return ClusterLayout(cluster, anchor, members[0][0], members[-1][0],
                         lookup.views_per_side, tiles)


@dataclass(frozen=True)
class ExtractResult:
    view: int          # the view actually extracted (clamped when needed)
    tile: int          # ordinal within the cluster's tile table
    tier: str
    clamped: bool
    slices: tuple[bytes, ...]  # one coded record per frame, no decoding done


def extract_view(frame_slices: list[list[bytes]], desired_view: int,
                 layout: ClusterLayout) -> ExtractResult:
    """Slice one viewpoint's records out of a demuxed segment.

    A desired view outside the cluster is restricted to the cluster
    boundary and flagged; bytes are returned untouched.
    """
    clamped = not layout.contains(desired_view)
    view = layout.clamp(desired_view)
    tile = layout.tile_of(view)
    tier = layout.tiles[tile].tier
    slices = []
    for i, tiles in enumerate(frame_slices):
        if tile >= len(tiles):
            raise ValueError(f"frame {i} carries {len(tiles)} tiles, need {tile}")
        slices.append(tiles[tile])
    return ExtractResult(view, tile, tier, clamped, tuple(slices))
