"""MPEG-2 transport stream muxing and demuxing (ISO/IEC 13818-1 subset).

Each cluster segment is a self-contained TS: PAT and PMT first, then one PES
packet per cluster frame on a single private-data elementary stream. The PES
payload carries a tile table (u16 count, then u32 offset / u32 length per
tile, offsets relative to the end of the table) followed by the concatenated
tile records, so clients can slice out one viewpoint without touching the
rest.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

TS_PACKET = 188
SYNC_BYTE = 0x47
PID_PAT = 0x0000
PID_PMT = 0x1000
PID_ES = 0x0100
STREAM_TYPE_PRIVATE = 0x06
STREAM_ID_PRIVATE_1 = 0xBD
PTS_CLOCK = 90000
# PCR leads PTS by 100 ms, which also bounds the PCR cadence at one frame.
PCR_LEAD = 9000

FRAME_I_TYPE = 0  # first byte of an FVT1 intra record


class TsError(Exception):
    pass


class SyncLossError(TsError):
    def __init__(self, packet_index: int):
        super().__init__(f"missing 0x47 sync byte at packet {packet_index}")
        self.packet_index = packet_index


class ContinuityError(TsError):
    def __init__(self, pid: int, packet_index: int, expected: int, got: int):
        super().__init__(f"continuity gap on PID 0x{pid:04X} at packet "
                         f"{packet_index}: expected {expected}, got {got}")
        self.pid = pid
        self.packet_index = packet_index


class TruncatedPesError(TsError):
    def __init__(self, packet_index: int, detail: str):
        super().__init__(f"truncated PES near packet {packet_index}: {detail}")
        self.packet_index = packet_index


class TsFormatError(TsError):
    def __init__(self, packet_index: int, detail: str):
        super().__init__(f"{detail} (packet {packet_index})")
        self.packet_index = packet_index


class GopAlignmentError(TsError):
    pass


def _crc32_mpeg(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte << 24
        for _ in range(8):
            crc = ((crc << 1) ^ 0x04C11DB7 if crc & 0x80000000 else crc << 1) & 0xFFFFFFFF
    return crc


def _section_packet(pid: int, section: bytes, counter: int) -> bytes:
    header = struct.pack(">I", (SYNC_BYTE << 24) | (1 << 22) | (pid << 8)
                         | 0x10 | (counter & 0x0F))
    body = b"\x00" + section  # pointer_field
    return header + body + b"\xff" * (TS_PACKET - 4 - len(body))


def build_pat() -> bytes:
    body = struct.pack(">HBBB", 0x0001, 0xC1, 0x00, 0x00)  # tsid, ver/cn, sec, last
    body += struct.pack(">HH", 0x0001, 0xE000 | PID_PMT)  # program 1 -> PMT PID
    section = struct.pack(">BH", 0x00, 0xB000 | (len(body) + 4)) + body
    return section + struct.pack(">I", _crc32_mpeg(section))


def build_pmt() -> bytes:
    body = struct.pack(">HBBB", 0x0001, 0xC1, 0x00, 0x00)
    body += struct.pack(">HH", 0xE000 | PID_ES, 0xF000)  # PCR PID, program_info_len 0
    body += struct.pack(">BHH", STREAM_TYPE_PRIVATE, 0xE000 | PID_ES, 0xF000)
    section = struct.pack(">BH", 0x02, 0xB000 | (len(body) + 4)) + body
    return section + struct.pack(">I", _crc32_mpeg(section))


def _encode_pts(pts: int) -> bytes:
    pts &= (1 << 33) - 1
    return bytes([
        0x20 | ((pts >> 29) & 0x0E) | 0x01,
        (pts >> 22) & 0xFF,
        ((pts >> 14) & 0xFE) | 0x01,
        (pts >> 7) & 0xFF,
        ((pts << 1) & 0xFE) | 0x01,
    ])


def _decode_pts(raw: bytes) -> int:
    return (((raw[0] >> 1) & 0x07) << 30) | (raw[1] << 22) | ((raw[2] >> 1) << 15) \
        | (raw[3] << 7) | (raw[4] >> 1)


def _encode_pcr(base: int) -> bytes:
    base &= (1 << 33) - 1
    val = (base << 15) | (0x3F << 9)  # 6 reserved bits set, extension 0
    return val.to_bytes(6, "big")


def _pes_header(payload_len: int, pts: int) -> bytes:
    tail_len = 3 + 5 + payload_len  # flags(2) + hdr_len(1) + PTS(5) + data
    declared = tail_len if tail_len <= 0xFFFF else 0
    return struct.pack(">3sBH", b"\x00\x00\x01", STREAM_ID_PRIVATE_1, declared) \
        + bytes([0x80, 0x80, 0x05]) + _encode_pts(pts)


def _packetize_pes(pes: bytes, pcr_base: int, counter_start: int) -> list[bytes]:
    packets = []
    pos = 0
    counter = counter_start
    first = True
    while pos < len(pes) or first:
        flags = (1 << 22) if first else 0  # PUSI on the first packet
        if first:
            af = _encode_pcr(pcr_base)
            af_body = bytes([0x10]) + af  # PCR flag
            remaining = len(pes) - pos
            space = TS_PACKET - 4 - 1 - len(af_body)
            if remaining < space:  # stuff the same AF when the PES is tiny
                af_body += b"\xff" * (space - remaining)
            header = struct.pack(">I", (SYNC_BYTE << 24) | flags | (PID_ES << 8)
                                 | 0x30 | (counter & 0x0F))
            chunk = pes[pos:pos + space]
            packets.append(header + bytes([len(af_body)]) + af_body + chunk)
            pos += len(chunk)
            first = False
        else:
            remaining = len(pes) - pos
            if remaining >= TS_PACKET - 4:
                header = struct.pack(">I", (SYNC_BYTE << 24) | (PID_ES << 8)
                                     | 0x10 | (counter & 0x0F))
                packets.append(header + pes[pos:pos + TS_PACKET - 4])
                pos += TS_PACKET - 4
            else:
                af_len = TS_PACKET - 4 - 1 - remaining
                af_body = b"" if af_len == 0 else bytes([0x00]) + b"\xff" * (af_len - 1)
                header = struct.pack(">I", (SYNC_BYTE << 24) | (PID_ES << 8)
                                     | 0x30 | (counter & 0x0F))
                packets.append(header + bytes([af_len]) + af_body + pes[pos:])
                pos = len(pes)
        counter += 1
    return packets


def build_frame_payload(tile_records: list[bytes]) -> bytes:
    """u16 tile_count + per-tile (u32 offset, u32 length) + concatenated records."""
    table = [struct.pack("<H", len(tile_records))]
    off = 0
    for rec in tile_records:
        table.append(struct.pack("<II", off, len(rec)))
        off += len(rec)
    return b"".join(table) + b"".join(tile_records)


def parse_frame_payload(payload: bytes) -> list[bytes]:
    if len(payload) < 2:
        raise TsError("frame payload shorter than its tile table")
    (count,) = struct.unpack_from("<H", payload, 0)
    table_end = 2 + 8 * count
    if len(payload) < table_end:
        raise TsError("tile table truncated")
    slices = []
    for i in range(count):
        off, length = struct.unpack_from("<II", payload, 2 + 8 * i)
        start = table_end + off
        if start + length > len(payload):
            raise TsError(f"tile {i} slice out of bounds")
        slices.append(payload[start:start + length])
    return slices


def mux_segment(frames: list[list[bytes]], fps: int, start_pts: int = 0) -> bytes:
    """Mux per-frame tile record lists into one TS segment.

    The first frame of a segment must be intra for every tile, so a client
    can begin decoding from any segment.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    if frames:
        for k, rec in enumerate(frames[0]):
            if not rec or rec[0] != FRAME_I_TYPE:
                raise GopAlignmentError(
                    f"segment does not start on an intra record (tile {k})")
    out = [_section_packet(PID_PAT, build_pat(), 0),
           _section_packet(PID_PMT, build_pmt(), 0)]
    counter = 0
    for i, tile_records in enumerate(frames):
        pts = (start_pts + round(i * PTS_CLOCK / fps)) & ((1 << 33) - 1)
        payload = build_frame_payload(tile_records)
        pes = _pes_header(len(payload), pts) + payload
        pcr = max(0, pts - PCR_LEAD)
        packets = _packetize_pes(pes, pcr, counter)
        counter += len(packets)
        out.extend(packets)
    return b"".join(out)


@dataclass
class DemuxedFrame:
    pts: int
    tile_slices: list[bytes]


@dataclass
class DemuxResult:
    frames: list[DemuxedFrame]
    packet_count: int
    pmt_pid: int
    es_pid: int
    stream_type: int
    pcr_values: list[int] = field(default_factory=list)

    def pts_sequence(self) -> list[int]:
        return [f.pts for f in self.frames]


def _parse_section(payload: bytes, packet_index: int, expect_table: int) -> bytes:
    if not payload:
        raise TsFormatError(packet_index, "empty section payload")
    pointer = payload[0]
    body = payload[1 + pointer:]
    if len(body) < 3 or body[0] != expect_table:
        raise TsFormatError(packet_index, f"expected table 0x{expect_table:02X}")
    length = ((body[1] & 0x0F) << 8) | body[2]
    section = body[:3 + length]
    if len(section) < 3 + length:
        raise TsFormatError(packet_index, "section truncated")
    if _crc32_mpeg(section[:-4]) != struct.unpack(">I", section[-4:])[0]:
        raise TsFormatError(packet_index, "section CRC mismatch")
    return section


def demux_segment(body: bytes) -> DemuxResult:
    """Validate TS framing and reassemble per-frame tile slices."""
    if len(body) % TS_PACKET:
        raise TsError(f"segment length {len(body)} is not a multiple of {TS_PACKET}")
    n = len(body) // TS_PACKET
    counters: dict[int, int] = {}
    pmt_pid = None
    es_pid = None
    stream_type = None
    pcr_values: list[int] = []
    pes_chunks: list[bytes] = []
    frames: list[DemuxedFrame] = []

    def finalize(packet_index: int) -> None:
        if not pes_chunks:
            return
        pes = b"".join(pes_chunks)
        pes_chunks.clear()
        if len(pes) < 9 or pes[:3] != b"\x00\x00\x01":
            raise TruncatedPesError(packet_index, "bad PES start code")
        declared = struct.unpack_from(">H", pes, 4)[0]
        if declared and len(pes) != declared + 6:
            raise TruncatedPesError(
                packet_index, f"PES length {len(pes)} != declared {declared + 6}")
        hdr_len = pes[8]
        if pes[7] & 0x80 == 0 or hdr_len < 5:
            raise TruncatedPesError(packet_index, "PES carries no PTS")
        pts = _decode_pts(pes[9:14])
        frames.append(DemuxedFrame(pts, parse_frame_payload(pes[9 + hdr_len:])))

    for i in range(n):
        pkt = body[i * TS_PACKET:(i + 1) * TS_PACKET]
        if pkt[0] != SYNC_BYTE:
            raise SyncLossError(i)
        word = struct.unpack(">I", pkt[:4])[0]
        pusi = (word >> 22) & 1
        pid = (word >> 8) & 0x1FFF
        afc = (word >> 4) & 0x3
        cc = word & 0x0F
        has_payload = afc in (1, 3)
        payload = pkt[4:]
        if afc in (2, 3):
            af_len = payload[0]
            af = payload[1:1 + af_len]
            if af_len and af and af[0] & 0x10 and len(af) >= 7:
                pcr_values.append(int.from_bytes(af[1:7], "big") >> 15)
            payload = payload[1 + af_len:]
        if not has_payload:
            continue
        if pid in counters:
            expected = (counters[pid] + 1) & 0x0F
            if cc != expected:
                raise ContinuityError(pid, i, expected, cc)
        counters[pid] = cc
        if pid == PID_PAT:
            section = _parse_section(payload, i, 0x00)
            pmt_pid = struct.unpack_from(">H", section, 10)[0] & 0x1FFF
        elif pmt_pid is not None and pid == pmt_pid:
            section = _parse_section(payload, i, 0x02)
            stream_type = section[12 + ((section[10] & 0x0F) << 8 | section[11])]
            es_pid = struct.unpack_from(
                ">H", section, 13 + ((section[10] & 0x0F) << 8 | section[11]))[0] & 0x1FFF
        elif es_pid is not None and pid == es_pid:
            if pusi:
                finalize(i)
            elif not pes_chunks:
                raise TruncatedPesError(i, "PES continuation without a start")
            pes_chunks.append(payload)
    finalize(n)
    if pmt_pid is None or es_pid is None:
        raise TsFormatError(0, "segment lacks PAT/PMT")
    return DemuxResult(frames, n, pmt_pid, es_pid, stream_type, pcr_values)
