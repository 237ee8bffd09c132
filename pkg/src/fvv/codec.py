"""Intra/inter tile codec with a self-delimiting bitstream (FVT1).

Every tile is its own stream: records reference at most the immediately
previous reconstructed frame of the same tile, so any tile decodes from its
own bytes alone and any GOP boundary is a clean random-access point. The
encoder reconstructs exactly what the decoder will (closed loop), which
makes drift impossible by construction.

Per block per plane: DCT -> uniform quantization -> zigzag -> zero-run
tokens -> DEFLATE (RFC 1951). Quality 100 swaps the DCT for a reversible
integer lifting transform with step 1, which is lossless end to end.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .dct import (UNZIGZAG, ZIGZAG, dct8_blocks, idct8_blocks, lift8_blocks,
                  unlift8_blocks)
from .frame import Frame, PixelFormat, frame_from_planes, plane_shapes

FVT1_MAGIC = b"FVT1"
_HEADER = struct.Struct("<4sHHBBBB")  # magic, width, height, format, gop, quality, fps
_RECORD_HEAD = struct.Struct("<BI")  # frame_type, payload_len
_PAYLOAD_HEAD = struct.Struct("<BBHHB")  # quality, format, width, height, plane_count

FRAME_I = 0
FRAME_P = 1

_EOB = 0xFF


class BitstreamError(Exception):
    """Corrupt or truncated coded data; ``offset`` is the failing byte."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigError(Exception):
    pass


def quant_step(quality: int) -> int:
    if not 0 <= quality <= 100:
        raise ConfigError(f"quality {quality} outside 0..100")
    return max(1, int(round((100 - quality) * 0.5)) + 1)


def _pad_to_blocks(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    ph = (-h) % 8
    pw = (-w) % 8
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw)), mode="edge")
    return arr


def _to_blocks(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    return arr.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).reshape(-1, 8, 8)


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).swapaxes(1, 2).reshape(h, w)


def _tokens_encode(zz: np.ndarray) -> bytes:
    """(nblocks, 64) int32 -> 3-byte (run, level) tokens with EOB per block."""
    nblocks = zz.shape[0]
    flat = zz.reshape(-1)
    nz = np.flatnonzero(flat)
    levels = flat[nz]
    if levels.size and (levels.max() > 32767 or levels.min() < -32768):
        raise BitstreamError("coefficient out of 16-bit range")
    block_id = nz // 64
    pos = nz % 64
    prev = np.empty_like(pos)
    prev[0:1] = -1
    prev[1:] = np.where(block_id[1:] == block_id[:-1], pos[:-1], -1)
    runs = pos - prev - 1
    counts = np.bincount(block_id, minlength=nblocks)
    cum = np.concatenate([[0], np.cumsum(counts)])
    token_count = nz.size + nblocks
    tokens = np.zeros((token_count, 3), np.uint8)
    nz_slots = np.arange(nz.size) + block_id
    eob_slots = cum[1:] + np.arange(nblocks)
    tokens[nz_slots, 0] = runs.astype(np.uint8)
    tokens[eob_slots, 0] = _EOB
    lv = np.zeros(token_count, np.int16)
    lv[nz_slots] = levels.astype(np.int16)
    tokens[:, 1:] = lv.view(np.uint8).reshape(-1, 2)
    return tokens.tobytes()


def _tokens_decode(buf: bytes, nblocks: int, base_offset: int) -> np.ndarray:
    if len(buf) % 3:
        raise BitstreamError("token stream not a multiple of 3 bytes",
                             base_offset + len(buf) - len(buf) % 3)
    tokens = np.frombuffer(buf, np.uint8).reshape(-1, 3)
    runs = tokens[:, 0].astype(np.int64)
    levels = tokens[:, 1:].copy().view(np.int16).reshape(-1).astype(np.int32)
    eob = runs == _EOB
    if eob.sum() != nblocks or (tokens.size and not eob[-1]):
        raise BitstreamError(
            f"expected {nblocks} block terminators, found {int(eob.sum())}", base_offset)
    block_of = np.cumsum(eob) - eob.astype(np.int64)  # EOB belongs to its own block
    step = np.where(eob, 0, runs + 1)
    csum = np.cumsum(step)
    base = np.concatenate([[0], csum[np.flatnonzero(eob)]])[:-1]
    pos = csum - 1 - base[block_of]
    nz = ~eob
    if nz.any() and pos[nz].max() > 63:
        bad = int(np.flatnonzero(nz & (pos > 63))[0])
        raise BitstreamError("zigzag run past end of block", base_offset + bad * 3)
    zz = np.zeros((nblocks, 64), np.int32)
    zz[block_of[nz], pos[nz]] = levels[nz]
    return zz


@dataclass(frozen=True)
class FrameRecord:
    frame_type: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return _RECORD_HEAD.pack(self.frame_type, len(self.payload)) + self.payload

    @property
    def is_intra(self) -> bool:
        return self.frame_type == FRAME_I


def _encode_plane(arr: np.ndarray, step: int, lossless: bool) -> tuple[bytes, np.ndarray]:
    """Code one plane (or residual); returns (deflate bytes, reconstruction)."""
    h, w = arr.shape
    padded = _pad_to_blocks(arr.astype(np.int32))
    blocks = _to_blocks(padded)
    if lossless:
        qc = lift8_blocks(blocks)
        recon_blocks = unlift8_blocks(qc)
    else:
        coeffs = dct8_blocks(blocks)
        qc = np.rint(coeffs / step).astype(np.int32)
        recon_blocks = np.rint(idct8_blocks(qc * step)).astype(np.int32)
    zz = qc.reshape(-1, 64)[:, ZIGZAG]
    data = zlib.compress(_tokens_encode(zz), 6)[2:-4]  # raw DEFLATE: strip zlib wrapper
    recon = _from_blocks(recon_blocks, *padded.shape)[:h, :w]
    return data, recon


def _decode_plane(data: bytes, h: int, w: int, step: int, lossless: bool,
                  base_offset: int) -> np.ndarray:
    ph = h + (-h) % 8
    pw = w + (-w) % 8
    nblocks = (ph // 8) * (pw // 8)
    try:
        raw = zlib.decompress(data, wbits=-15)
    except zlib.error as e:
        raise BitstreamError(f"DEFLATE stream corrupt: {e}", base_offset) from None
    zz = _tokens_decode(raw, nblocks, base_offset)
    qc = zz[:, UNZIGZAG].reshape(-1, 8, 8)
    if lossless:
        blocks = unlift8_blocks(qc)
    else:
        blocks = np.rint(idct8_blocks(qc * step)).astype(np.int32)
    return _from_blocks(blocks, ph, pw)[:h, :w]


def encode_frame(frame: Frame, prev_reconstructed: Frame | None, quality: int
                 ) -> tuple[FrameRecord, Frame]:
    """Encode one frame; returns the record and the committed reconstruction.

    ``prev_reconstructed`` present selects a P-frame coding the residual
    against it; absent codes an I-frame.
    """
    step = quant_step(quality)
    lossless = quality == 100
    is_p = prev_reconstructed is not None
    if is_p and (prev_reconstructed.width, prev_reconstructed.height,
                 prev_reconstructed.format) != (frame.width, frame.height, frame.format):
        raise ValueError("reference frame geometry mismatch")
    parts = [_PAYLOAD_HEAD.pack(quality, int(frame.format), frame.width,
                                frame.height, len(frame.planes))]
    recon_planes = []
    for i, plane in enumerate(frame.planes):
        src = plane.astype(np.int32)
        if frame.format == PixelFormat.RGB8:
            src = src.reshape(plane.shape[0], -1)  # interleaved rows code as one plane
        if is_p:
            ref = prev_reconstructed.planes[i].astype(np.int32)
            if frame.format == PixelFormat.RGB8:
                ref = ref.reshape(ref.shape[0], -1)
            data, resid_recon = _encode_plane(src - ref, step, lossless)
            recon = np.clip(ref + resid_recon, 0, 255)
        else:
            data, recon = _encode_plane(src, step, lossless)
            recon = np.clip(recon, 0, 255)
        if frame.format == PixelFormat.RGB8:
            recon = recon.reshape(plane.shape)
        recon_planes.append(recon.astype(np.uint8))
        parts.append(struct.pack("<I", len(data)))
        parts.append(data)
    record = FrameRecord(FRAME_P if is_p else FRAME_I, b"".join(parts))
    recon_frame = frame_from_planes(recon_planes, frame.format, frame.timestamp)
    return record, recon_frame


def decode_record(record: FrameRecord | bytes, prev_reconstructed: Frame | None,
                  timestamp: int = 0) -> Frame:
    """Exact inverse of the encoder's committed reconstruction."""
    if isinstance(record, FrameRecord):
        frame_type, payload = record.frame_type, record.payload
    else:
        frame_type, payload = parse_record(record, 0)[:2]
    is_p = frame_type == FRAME_P
    if is_p and prev_reconstructed is None:
        raise BitstreamError("P record without a reference frame")
    if len(payload) < _PAYLOAD_HEAD.size:
        raise BitstreamError("payload shorter than its header", len(payload))
    quality, fmt_raw, w, h, plane_count = _PAYLOAD_HEAD.unpack_from(payload, 0)
    fmt = PixelFormat(fmt_raw)
    step = quant_step(quality)
    lossless = quality == 100
    expected = plane_shapes(w, h, fmt)
    if plane_count != len(expected):
        raise BitstreamError(f"{fmt.name} payload declares {plane_count} planes", 0)
    off = _PAYLOAD_HEAD.size
    planes = []
    for i, shape in enumerate(expected):
        if off + 4 > len(payload):
            raise BitstreamError("truncated plane table", off)
        (length,) = struct.unpack_from("<I", payload, off)
        off += 4
        if off + length > len(payload):
            raise BitstreamError("truncated plane data", off)
        ph, pw = shape[0], shape[1] * (3 if fmt == PixelFormat.RGB8 else 1)
        decoded = _decode_plane(payload[off:off + length], ph, pw, step, lossless, off)
        off += length
        if is_p:
            ref = prev_reconstructed.planes[i].astype(np.int32)
            if fmt == PixelFormat.RGB8:
                ref = ref.reshape(ph, pw)
            decoded = ref + decoded
        decoded = np.clip(decoded, 0, 255).astype(np.uint8)
        planes.append(decoded.reshape(shape))
    if off != len(payload):
        raise BitstreamError("trailing bytes after last plane", off)
    return frame_from_planes(planes, fmt, timestamp)


def parse_record(buf: bytes | memoryview, offset: int) -> tuple[int, bytes, int]:
    """Split one length-prefixed record; returns (frame_type, payload, next_offset)."""
    if offset + _RECORD_HEAD.size > len(buf):
        raise BitstreamError("truncated record header", offset)
    frame_type, length = _RECORD_HEAD.unpack_from(buf, offset)
    if frame_type not in (FRAME_I, FRAME_P):
        raise BitstreamError(f"unknown frame type {frame_type}", offset)
    start = offset + _RECORD_HEAD.size
    if start + length > len(buf):
        raise BitstreamError("record payload truncated", start)
    return frame_type, bytes(buf[start:start + length]), start + length


class TileEncoder:
    """Closed-loop encoder for one tile; every gop-th frame is intra."""

    def __init__(self, quality: int, gop: int):
        if gop < 1:
            raise ConfigError("gop must be >= 1")
        quant_step(quality)  # validates range
        self.quality = quality
        self.gop = gop
        self.index = 0
        self.reconstruction: Frame | None = None

    def encode(self, frame: Frame) -> FrameRecord:
        prev = None if self.index % self.gop == 0 else self.reconstruction
        record, recon = encode_frame(frame, prev, self.quality)
        self.reconstruction = recon
        self.index += 1
        return record


class TileDecoder:
    """Stateful inverse of TileEncoder for one tile."""

    def __init__(self):
        self.reconstruction: Frame | None = None
        self.index = 0

    def decode(self, record: FrameRecord | bytes, timestamp: int = 0) -> Frame:
        frame = decode_record(record, self.reconstruction, timestamp)
        self.reconstruction = frame
        self.index += 1
        return frame


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    format: PixelFormat
    gop: int
    quality: int
    fps: int


def write_stream(frames, quality: int, gop: int, fps: int) -> bytes:
    """Encode a frame sequence into one self-contained FVT1 byte stream."""
    frames = list(frames)
    if not frames:
        raise ConfigError("empty stream")
    first = frames[0]
    enc = TileEncoder(quality, gop)
    out = [_HEADER.pack(FVT1_MAGIC, first.width, first.height, int(first.format),
                        gop, quality, fps)]
    for f in frames:
        out.append(enc.encode(f).to_bytes())
    return b"".join(out)


def read_header(data: bytes) -> StreamHeader:
    if len(data) < _HEADER.size or data[:4] != FVT1_MAGIC:
        raise BitstreamError("missing FVT1 magic", 0)
    magic, w, h, fmt, gop, quality, fps = _HEADER.unpack_from(data, 0)
    return StreamHeader(w, h, PixelFormat(fmt), gop, quality, fps)


def iter_records(data: bytes):
    """Yield (frame_type, payload) for each record after the stream header."""
    off = _HEADER.size
    first = True
    while off < len(data):
        frame_type, payload, off = parse_record(data, off)
        if first and frame_type != FRAME_I:
            raise BitstreamError("stream must start with an intra record", _HEADER.size)
        first = False
        yield frame_type, payload


def read_stream(data: bytes) -> tuple[StreamHeader, list[Frame]]:
    header = read_header(data)
    dec = TileDecoder()
    frames = [dec.decode(FrameRecord(ft, payload), t)
              for t, (ft, payload) in enumerate(iter_records(data))]
    return header, frames


@dataclass(frozen=True)
class GopValidation:
    ok: bool
    frames_per_segment: int
    violation_segment: int | None = None
    message: str = ""

    def raise_if_invalid(self) -> None:
        if not self.ok:
            raise ConfigError(self.message)


def validate_gop(gop: int, fps: int, segment_duration: float,
                 segments_checked: int = 64) -> GopValidation:
    """A segment boundary must always land on an intra frame.

    That holds exactly when gop divides fps * segment_duration, the classic
    divisor rule tying GOP size to the frame rate.
    """
    if fps <= 0 or gop < 1 or segment_duration <= 0:
        return GopValidation(False, 0, 0, "fps, gop and segment duration must be positive")
    fper = fps * segment_duration
    if abs(fper - round(fper)) > 1e-9:
        return GopValidation(False, 0, 0,
                             f"{segment_duration}s at {fps}fps is not a whole frame count")
    fper = int(round(fper))
    for k in range(1, segments_checked + 1):
        if (k * fper) % gop:
            return GopValidation(
                False, fper, k,
                f"gop {gop} does not divide {fper} frames/segment: segment {k} "
                f"starts at frame {k * fper}, not an intra frame")
    return GopValidation(True, fper)
