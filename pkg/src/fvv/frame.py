"""Planar raster frames, the unit of data flowing through every pipeline stage."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np


class PixelFormat(enum.IntEnum):
    GRAY8 = 0
    YUV420 = 1
    RGB8 = 2


def chroma_size(width: int, height: int) -> tuple[int, int]:
    """4:2:0 chroma plane size: ceil(w/2) x ceil(h/2)."""
    return (width + 1) // 2, (height + 1) // 2


def plane_shapes(width: int, height: int, fmt: PixelFormat) -> list[tuple[int, ...]]:
    if fmt == PixelFormat.GRAY8:
        return [(height, width)]
    if fmt == PixelFormat.YUV420:
        cw, ch = chroma_size(width, height)
        return [(height, width), (ch, cw), (ch, cw)]
    if fmt == PixelFormat.RGB8:
        return [(height, width, 3)]
    raise ValueError(f"unknown pixel format {fmt!r}")


@dataclass(frozen=True)
class Frame:
    """Immutable planar image.

    Planes are uint8 numpy arrays (Y/U/V, a single gray plane, or one
    interleaved RGB plane) whose shapes must exactly match the declared
    format. ``timestamp`` is the 0-based frame index within a sequence.
    """

    width: int
    height: int
    format: PixelFormat
    planes: tuple[np.ndarray, ...]
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"bad frame size {self.width}x{self.height}")
        expected = plane_shapes(self.width, self.height, self.format)
        if len(self.planes) != len(expected):
            raise ValueError(
                f"{self.format.name} needs {len(expected)} planes, got {len(self.planes)}"
            )
        frozen = []
        for i, (plane, shape) in enumerate(zip(self.planes, expected)):
            if plane.dtype != np.uint8:
                raise ValueError(f"plane {i} dtype {plane.dtype}, expected uint8")
            if plane.shape != shape:
                raise ValueError(f"plane {i} shape {plane.shape}, expected {shape}")
            if plane.flags.writeable:
                plane = plane.copy()
                plane.setflags(write=False)
            frozen.append(plane)
        object.__setattr__(self, "planes", tuple(frozen))

    @property
    def luma(self) -> np.ndarray:
        """Luma plane; derived with BT.601 weights for RGB frames."""
        if self.format == PixelFormat.RGB8:
            rgb = self.planes[0].astype(np.float64)
            y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
            return np.rint(y).astype(np.uint8)
        return self.planes[0]

    def with_timestamp(self, timestamp: int) -> "Frame":
        return Frame(self.width, self.height, self.format, self.planes, timestamp)

    def to_bytes(self) -> bytes:
        """Self-describing serialization used for packs and .raw payloads."""
        head = struct.pack("<HHBq", self.width, self.height, int(self.format), self.timestamp)
        return head + b"".join(p.tobytes() for p in self.planes)

    @staticmethod
    def from_bytes(buf: bytes) -> "Frame":
        w, h, fmt_raw, ts = struct.unpack_from("<HHBq", buf, 0)
        fmt = PixelFormat(fmt_raw)
        off = struct.calcsize("<HHBq")
        planes = []
        for shape in plane_shapes(w, h, fmt):
            n = int(np.prod(shape))
            planes.append(np.frombuffer(buf, np.uint8, n, off).reshape(shape))
            off += n
        if off != len(buf):
            raise ValueError(f"frame payload has {len(buf) - off} trailing bytes")
        return Frame(w, h, fmt, tuple(planes), ts)

    def raw_planes(self) -> bytes:
        """Headerless plane concatenation (the on-disk .raw layout)."""
        return b"".join(p.tobytes() for p in self.planes)


def frame_from_planes(planes: list[np.ndarray], fmt: PixelFormat, timestamp: int = 0) -> Frame:
    h, w = planes[0].shape[:2]
    return Frame(w, h, fmt, tuple(np.ascontiguousarray(p, dtype=np.uint8) for p in planes), timestamp)


def frame_from_raw(buf: bytes, width: int, height: int, fmt: PixelFormat, timestamp: int = 0) -> Frame:
    planes = []
    off = 0
    for shape in plane_shapes(width, height, fmt):
        n = int(np.prod(shape))
        planes.append(np.frombuffer(buf, np.uint8, n, off).reshape(shape))
        off += n
    if off != len(buf):
        raise ValueError(f"raw frame is {len(buf)} bytes, expected {off}")
    return Frame(width, height, fmt, tuple(planes), timestamp)


def gray(arr: np.ndarray, timestamp: int = 0) -> Frame:
    """Convenience constructor for single-plane frames."""
    return frame_from_planes([arr], PixelFormat.GRAY8, timestamp)
