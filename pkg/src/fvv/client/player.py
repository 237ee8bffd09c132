"""The streaming client: playlist polling, segment download, local view
extraction, tile decoding, and a frame ring buffer for the UI bridge."""
from __future__ import annotations

import json
import struct
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..channel import EndOfStream, PackType, UnifiedDataPack, UniversalDataChannel
from ..cluster import LookupTable, upscale
from ..codec import TileDecoder
from ..frame import Frame
from ..mpegts import demux_segment, build_frame_payload, parse_frame_payload
from ..playlist import parse_playlist
from .core import extract_view, layout_from_lookup, select_cluster


class ClientError(Exception):
    pass


@dataclass
class TranscriptEntry:
    frame: int
    requested_view: int
    shown_view: int
    cluster: int
    clamped: bool
    segment: int

    def to_json(self) -> dict:
        return {"frame": self.frame, "requested": self.requested_view,
                "shown": self.shown_view, "cluster": self.cluster,
                "clamped": self.clamped, "segment": self.segment}


@dataclass
class ClientStats:
    segment_downloads: int = 0
    playlist_fetches: int = 0
    download_ms: list[float] = field(default_factory=list)
    switch_latency_frames: list[int] = field(default_factory=list)
    decode_log: list[tuple[int, int, int]] = field(default_factory=list)
    transcript: list[TranscriptEntry] = field(default_factory=list)

    def tiles_decoded_per_frame(self) -> list[int]:
        return [tiles for _, tiles, _ in self.decode_log]

    def to_json(self) -> dict:
        lat = self.switch_latency_frames
        return {
            "segment_downloads": self.segment_downloads,
            "playlist_fetches": self.playlist_fetches,
            "avg_download_ms": (sum(self.download_ms) / len(self.download_ms)
                                if self.download_ms else 0.0),
            "switch_latency_frames_max": max(lat) if lat else 0,
            "frames_displayed": len(self.decode_log),
        }


def _default_http_get(url: str, timeout: float = 5.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


class FvvClient:
    """Plays one viewpoint trajectory against a running edge server.

    ``trajectory`` maps displayed frame index -> desired global view;
    interactive view changes arrive through ``set_view`` (the UI bridge).
    ``from_start`` processes every segment in order (deterministic replays);
    the default follows the live edge, always taking the newest segment.
    """

    def __init__(self, url: str, view: int = 0,
                 trajectory: dict[int, int] | None = None,
                 buffer_frames: int = 90,
                 dump_dir: str | Path | None = None,
                 from_start: bool = False,
                 realtime: bool = False,
                 poll_interval: float = 0.05,
                 startup_timeout: float = 30.0,
                 http_get=None):
        self.url = url.rstrip("/")
        self._get = http_get or _default_http_get
        self.trajectory = dict(trajectory or {})
        self.from_start = from_start
        self.realtime = realtime
        self.poll_interval = poll_interval
        self.startup_timeout = startup_timeout
        self.dump_dir = Path(dump_dir) if dump_dir else None
        if self.dump_dir:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
        self.stats = ClientStats()
        self.buffer: deque[Frame] = deque(maxlen=buffer_frames)
        self._lock = threading.Lock()
        self._desired = view
        self._pending_switch: tuple[int, int] | None = None
        self.frame_counter = 0
        self.current_cluster: int | None = None
        self.current_segment: int | None = None
        self.last_clamped = False
        self.lookup: LookupTable | None = None
        self._stop = threading.Event()
        self.done = threading.Event()

    # --- control surface -------------------------------------------------

    def set_view(self, index: int) -> None:
        lookup = self.lookup
        if lookup is not None and not 0 <= index < lookup.total_views:
            raise IndexError(f"view {index} out of range 0..{lookup.total_views - 1}")
        with self._lock:
            if index != self._desired:
                self._desired = index
                self._pending_switch = (index, self.frame_counter)

    @property
    def desired_view(self) -> int:
        with self._lock:
            return self._desired

    def latest_frame(self) -> Frame | None:
        with self._lock:
            return self.buffer[-1] if self.buffer else None

    def state_json(self) -> dict:
        with self._lock:
            return {
                "view": self._desired,
                "cluster": self.current_cluster,
                "segment": self.current_segment,
                "clamped": self.last_clamped,
                "frames_displayed": self.frame_counter,
                "playing": not self.done.is_set(),
                "stats": self.stats.to_json(),
            }

    def stop(self) -> None:
        self._stop.set()

    # --- network ----------------------------------------------------------

    def _fetch(self, path: str, retries: int = 3) -> bytes:
        delay = 0.05
        for attempt in range(retries):
            try:
                return self._get(self.url + path)
            except Exception as e:  # noqa: BLE001 - network layer
                if attempt == retries - 1:
                    raise ClientError(f"GET {path} failed after {retries} attempts: {e}")
                time.sleep(delay)
                delay *= 2
        raise AssertionError  # unreachable

    def _fetch_lookup(self) -> LookupTable:
        doc = json.loads(self._fetch("/lookup.json"))
        return LookupTable.from_json(doc)

    def _fetch_playlist(self, cluster: int):
        deadline = time.monotonic() + self.startup_timeout
        while not self._stop.is_set():
            try:
                text = self._fetch(f"/cluster/{cluster}/playlist.m3u8", retries=1).decode()
                self.stats.playlist_fetches += 1
                return parse_playlist(text)
            except ClientError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(self.poll_interval)
        raise ClientError("stopped while waiting for a playlist")

    def _fetch_segment(self, cluster: int, sequence: int) -> bytes:
        t0 = time.perf_counter()
        body = self._fetch(f"/cluster/{cluster}/seg{sequence:05d}.ts")
        self.stats.download_ms.append((time.perf_counter() - t0) * 1000.0)
        self.stats.segment_downloads += 1
        return body

    # --- playback ---------------------------------------------------------

    def run(self, max_segments: int | None = None) -> ClientStats:
        """Blocking play loop; returns stats once the stream ends or stops."""
        self.lookup = self._fetch_lookup()
        with self._lock:
            if not 0 <= self._desired < self.lookup.total_views:
                raise ClientError(f"initial view {self._desired} out of range")
        try:
            if self.from_start:
                self._run_sequential(max_segments)
            else:
                self._run_live(max_segments)
        finally:
            self.done.set()
        return self.stats

    def _segments_iter(self, max_segments):
        """Yield (cluster, sequence, body); cluster re-chosen per boundary."""
        processed = 0
        sequence: int | None = None
        while not self._stop.is_set():
            if max_segments is not None and processed >= max_segments:
                return
            cluster = select_cluster(self.desired_view, self.lookup)
            playlist = self._fetch_playlist(cluster)
            if sequence is None:
                sequence = playlist.media_sequence
                if not self.from_start and playlist.window:
                    sequence = playlist.next_sequence - 1  # live edge
            if not self.from_start and playlist.window:
                newest = playlist.next_sequence - 1
                if newest > sequence:
                    sequence = newest  # skip forward to the live edge
            if sequence < playlist.next_sequence and sequence >= playlist.media_sequence:
                body = self._fetch_segment(cluster, sequence)
                yield cluster, sequence, body
                processed += 1
                sequence += 1
            elif playlist.ended and sequence >= playlist.next_sequence:
                return
            elif sequence < playlist.media_sequence:
                sequence = playlist.media_sequence  # fell out of the window
            else:
                time.sleep(self.poll_interval)

    def _run_sequential(self, max_segments) -> None:
        for cluster, sequence, body in self._segments_iter(max_segments):
            frames = demux_segment(body).frames
            self._play_segment(cluster, sequence, [f.tile_slices for f in frames])

    def _run_live(self, max_segments) -> None:
        channel = UniversalDataChannel(capacity=3)
        sub = channel.subscribe()
        error: list[BaseException] = []

        def downloader():
            try:
                for cluster, sequence, body in self._segments_iter(max_segments):
                    frames = demux_segment(body).frames
                    payload = _bundle_segment(cluster, sequence,
                                              [f.tile_slices for f in frames])
                    channel.put(UnifiedDataPack(PackType.SEGMENT_TS, payload))
            except BaseException as e:  # noqa: BLE001
                error.append(e)
            finally:
                channel.close()

        t = threading.Thread(target=downloader, name="fvv-downloader", daemon=True)
        t.start()
        try:
            for pack in sub:
                cluster, sequence, frames = _unbundle_segment(pack.payload)
                self._play_segment(cluster, sequence, frames)
        finally:
            self._stop.set()
            t.join(timeout=5)
        if error:
            raise error[0]

    def _play_segment(self, cluster: int, sequence: int,
                      frame_slices: list[list[bytes]]) -> None:
        layout = layout_from_lookup(self.lookup, cluster)
        decoders: dict[int, TileDecoder] = {}
        period = None
        if self.realtime and len(frame_slices) > 1:
            period = 1.0 / 30.0
        with self._lock:
            self.current_cluster = cluster
            self.current_segment = sequence
        for i, tiles in enumerate(frame_slices):
            if self._stop.is_set():
                return
            gframe = self.frame_counter
            if gframe in self.trajectory:
                self.set_view(self.trajectory[gframe])
            desired = self.desired_view
            clamped = not layout.contains(desired)
            shown = layout.clamp(desired)
            tile = layout.tile_of(shown)
            tier = layout.tiles[tile].tier
            dec = decoders.setdefault(tile, TileDecoder())
            records = 0
            while dec.index < i:  # tile switched mid-segment: chase its P chain
                dec.decode(frame_slices[dec.index][tile])
                records += 1
            frame = dec.decode(tiles[tile], timestamp=gframe)
            records += 1
            if tier == "quarter":
                frame = upscale(frame, 4)
            self._display(frame, desired, shown, cluster, clamped, sequence, records)
            if period:
                time.sleep(period)

    def _display(self, frame: Frame, requested: int, shown: int, cluster: int,
                 clamped: bool, segment: int, records: int) -> None:
        with self._lock:
            self.buffer.append(frame)
            self.last_clamped = clamped
            entry = TranscriptEntry(self.frame_counter, requested, shown,
                                    cluster, clamped, segment)
            self.stats.transcript.append(entry)
            self.stats.decode_log.append((self.frame_counter, 1, records))
            if self._pending_switch is not None:
                wanted, at_frame = self._pending_switch
                if requested == wanted:  # this frame was extracted with the new view
                    self.stats.switch_latency_frames.append(self.frame_counter - at_frame)
                    self._pending_switch = None
            self.frame_counter += 1
        if self.dump_dir:
            (self.dump_dir / f"frame{frame.timestamp:06d}.raw").write_bytes(
                frame.raw_planes())

    def write_transcript(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({
            "transcript": [e.to_json() for e in self.stats.transcript],
            "decode_log": [{"frame": f, "tiles": t, "records": r}
                           for f, t, r in self.stats.decode_log],
            "stats": self.stats.to_json(),
        }, indent=1) + "\n")


def _bundle_segment(cluster: int, sequence: int,
                    frames: list[list[bytes]]) -> bytes:
    parts = [struct.pack("<BIH", cluster, sequence, len(frames))]
    for tiles in frames:
        payload = build_frame_payload(tiles)
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    return b"".join(parts)


def _unbundle_segment(buf: bytes) -> tuple[int, int, list[list[bytes]]]:
    cluster, sequence, count = struct.unpack_from("<BIH", buf, 0)
    off = struct.calcsize("<BIH")
    frames = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", buf, off)
        off += 4
        frames.append(parse_frame_payload(buf[off:off + length]))
        off += length
    return cluster, sequence, frames
