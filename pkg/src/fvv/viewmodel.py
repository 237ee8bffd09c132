"""Global view indexing: cameras plus the dense interpolated views between them."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CameraRig:
    """Arc of cameras, ids 0..camera_count-1 ordered along the arc.

    ``angular_step`` is descriptive metadata; all geometry in this codebase
    is expressed in view indices and pixel disparities.
    """

    camera_count: int = 12
    angular_step: float = 5.0

    def __post_init__(self) -> None:
        if self.camera_count < 2:
            raise ValueError("a rig needs at least 2 cameras")


@dataclass(frozen=True)
class ViewIndexModel:
    """Dense global indexing over real and interpolated viewpoints.

    ``stages`` recursive midpoint stages yield 2**stages - 1 virtual views
    per camera gap, so global indices run 0..total_views-1 with camera c
    anchored at c * 2**stages.
    """

    camera_count: int = 12
    stages: int = 4

    def __post_init__(self) -> None:
        if self.camera_count < 2:
            raise ValueError("need at least 2 cameras")
        if not 1 <= self.stages <= 6:
            raise ValueError("stages must be in 1..6")

    @property
    def views_per_gap(self) -> int:
        return (1 << self.stages) - 1

    @property
    def total_views(self) -> int:
        return (self.camera_count - 1) * (self.views_per_gap + 1) + 1

    def view_index(self, camera: int) -> int:
        if not 0 <= camera < self.camera_count:
            raise IndexError(f"camera {camera} out of range 0..{self.camera_count - 1}")
        return camera << self.stages

    def locate(self, index: int) -> tuple[int, int, float]:
        """Map a global index to (left camera, right camera, fractional position).

        Camera anchors return (c, c, 0.0); interpolated views return the
        flanking cameras and p = offset / 2**stages in (0, 1).
        """
        if not 0 <= index < self.total_views:
            raise IndexError(f"view {index} out of range 0..{self.total_views - 1}")
        step = 1 << self.stages
        cam, off = divmod(index, step)
        if off == 0:
            return cam, cam, 0.0
        return cam, cam + 1, off / step

    def position(self, index: int) -> float:
        """Continuous rig position in [0, camera_count-1] of a global index."""
        left, _right, p = self.locate(index)
        return left + p
