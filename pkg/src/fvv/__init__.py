"""Live free-viewpoint video streaming at desk scale.

Dense virtual viewpoints are synthesized between sparse cameras by
coarse-to-fine flow interpolation, organized into independently decodable
tile cluster frames, packaged as temporal-spatial MPEG-2 TS / HLS segments,
and served to any number of clients that switch viewpoints with purely
local extraction cost.
"""

__version__ = "0.1.0"

from .frame import Frame, PixelFormat
from .viewmodel import CameraRig, ViewIndexModel
from .channel import PackType, UnifiedDataPack, UniversalDataChannel

__all__ = [
    "Frame",
    "PixelFormat",
    "CameraRig",
    "ViewIndexModel",
    "PackType",
    "UnifiedDataPack",
    "UniversalDataChannel",
    "__version__",
]
