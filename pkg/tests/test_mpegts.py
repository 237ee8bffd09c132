import struct

import numpy as np
import pytest

from fvv.codec import TileEncoder
from fvv.frame import gray
from fvv.mpegts import (ContinuityError, GopAlignmentError, SyncLossError,
                        TruncatedPesError, TsError, TsFormatError,
                        build_frame_payload, demux_segment, mux_segment,
                        parse_frame_payload, PID_ES, PTS_CLOCK, TS_PACKET)


@pytest.fixture(scope="module")
def tile_frames(rng=None):
    """6 frames x 3 tiles of real FVT1 records (gop 6: I then P records)."""
    rng = np.random.default_rng(8)
    encoders = [TileEncoder(quality=75, gop=6) for _ in range(3)]
    frames = []
    base = [rng.integers(0, 256, (24, 32), dtype=np.uint8) for _ in range(3)]
    for t in range(6):
        tiles = []
        for k, enc in enumerate(encoders):
            img = np.clip(base[k].astype(int) + t * 2, 0, 255).astype(np.uint8)
            tiles.append(enc.encode(gray(img, timestamp=t)).to_bytes())
        frames.append(tiles)
    return frames


def test_empty_window_is_pat_pmt_only():
    body = mux_segment([], fps=30)
    assert len(body) == 376
    assert body[0] == 0x47 and body[188] == 0x47


def test_packet_framing(tile_frames):
    body = mux_segment(tile_frames, fps=30)
    assert len(body) % TS_PACKET == 0
    for i in range(0, len(body), TS_PACKET):
        assert body[i] == 0x47


def test_demux_round_trip_restores_tiles(tile_frames):
    body = mux_segment(tile_frames, fps=30, start_pts=90000)
    result = demux_segment(body)
    assert len(result.frames) == 6
    for demuxed, original in zip(result.frames, tile_frames):
        assert demuxed.tile_slices == original
    assert result.es_pid == PID_ES
    assert result.stream_type == 0x06


def test_pts_arithmetic_progression(tile_frames):
    fps = 30
    body = mux_segment(tile_frames, fps=fps, start_pts=1234)
    pts = demux_segment(body).pts_sequence()
    assert pts[0] == 1234
    steps = {b - a for a, b in zip(pts, pts[1:])}
    assert steps == {PTS_CLOCK // fps}


def test_pcr_cadence_within_100ms(tile_frames):
    body = mux_segment(tile_frames, fps=30)
    pcr = demux_segment(body).pcr_values
    assert len(pcr) == len(tile_frames)
    assert all(b - a <= 9000 for a, b in zip(pcr, pcr[1:]))


def test_continuity_counters_mod16(tile_frames):
    body = mux_segment(tile_frames, fps=30)
    seen: dict[int, list[int]] = {}
    for i in range(0, len(body), TS_PACKET):
        word = struct.unpack(">I", body[i:i + 4])[0]
        pid = (word >> 8) & 0x1FFF
        seen.setdefault(pid, []).append(word & 0x0F)
    for pid, counters in seen.items():
        for a, b in zip(counters, counters[1:]):
            assert b == (a + 1) & 0x0F, f"PID {pid:#x}"


def test_flipped_sync_byte_reports_packet_index(tile_frames):
    body = bytearray(mux_segment(tile_frames, fps=30))
    victim = 7
    body[victim * TS_PACKET] = 0x48
    with pytest.raises(SyncLossError) as err:
        demux_segment(bytes(body))
    assert err.value.packet_index == victim


def test_dropped_packet_reports_continuity_gap(tile_frames):
    body = mux_segment(tile_frames, fps=30)
    packets = [body[i:i + TS_PACKET] for i in range(0, len(body), TS_PACKET)]
    drop = 5  # a mid-PES packet on the elementary PID
    assert (struct.unpack(">I", packets[drop][:4])[0] >> 8) & 0x1FFF == PID_ES
    mangled = b"".join(packets[:drop] + packets[drop + 1:])
    with pytest.raises(ContinuityError) as err:
        demux_segment(mangled)
    assert err.value.pid == PID_ES


def test_truncated_pes_detected(tile_frames):
    body = mux_segment(tile_frames[:1], fps=30)
    # drop the final packet: either a mid-stream length mismatch or a
    # continuity break, but always a structured TS error
    with pytest.raises(TsError):
        demux_segment(body[:-TS_PACKET])


def test_non_188_aligned_rejected(tile_frames):
    body = mux_segment(tile_frames, fps=30)
    with pytest.raises(TsError):
        demux_segment(body[:-1])


def test_section_crc_validated(tile_frames):
    body = bytearray(mux_segment(tile_frames, fps=30))
    body[20] ^= 0xFF  # corrupt inside the PAT section
    with pytest.raises(TsFormatError):
        demux_segment(bytes(body))


def test_mux_requires_intra_start(tile_frames):
    # frame 1 holds P records; starting a segment there must be refused
    with pytest.raises(GopAlignmentError):
        mux_segment(tile_frames[1:], fps=30)


def test_frame_payload_round_trip():
    tiles = [b"alpha", b"", b"gamma-gamma"]
    payload = build_frame_payload(tiles)
    assert parse_frame_payload(payload) == tiles
    (count,) = struct.unpack_from("<H", payload, 0)
    assert count == 3
    with pytest.raises(TsError):
        parse_frame_payload(payload[:5])


def test_large_pes_spans_many_packets(tile_frames):
    # >64 KiB payloads force the unbounded PES length encoding
    big = [b"\x00" + bytes(np.random.default_rng(0).integers(0, 256, 70000, endpoint=False).astype(np.uint8))]
    body = mux_segment([big], fps=30)
    result = demux_segment(body)
    assert result.frames[0].tile_slices == big
