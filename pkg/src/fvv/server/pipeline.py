"""The live server pipeline: capture -> interpolate -> stitch -> encode -> segment.

Stages run as independent workers joined only by bounded broadcast channels;
per-pack trace timestamps make every stage's latency (and the queue residency
between stitch and encode, reported as "schedule") measurable per frame.
"""
from __future__ import annotations

import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..channel import PackType, UnifiedDataPack, UniversalDataChannel
from ..cluster import (ClusterFrame, assemble_cluster_frame, build_layouts,
                       build_lookup_table, downscale)
from ..codec import TileEncoder, validate_gop
from ..frame import Frame
from ..interp import InterpConfig, dense_views
from ..mpegts import mux_segment, PTS_CLOCK
from ..scene import load_frame, load_manifest
from ..viewmodel import ViewIndexModel

STAGE_INTERP = "view interpolation"
STAGE_STITCH = "adaptive stitch"
STAGE_ENCODE = "encoder"
STAGE_SCHEDULE = "schedule"
STAGES = (STAGE_INTERP, STAGE_STITCH, STAGE_ENCODE, STAGE_SCHEDULE)


@dataclass
class PipelineConfig:
    scene_dir: str | None = None
    stages: int = 4
    views_per_side: int = 16
    fps: int = 30
    segment_duration: float = 2.0
    gop: int = 30
    quality: int = 75
    port: int = 8080
    channel_capacity: int = 4
    realtime: bool = False
    workers: int = 2
    max_ticks: int | None = None
    playlist_window: int = 6
    interp: InterpConfig = field(default_factory=InterpConfig)

    def validate(self) -> None:
        validate_gop(self.gop, self.fps, self.segment_duration).raise_if_invalid()
        if not 1 <= self.stages <= 6:
            raise ValueError("stages must be in 1..6")

    @property
    def frames_per_segment(self) -> int:
        return int(round(self.fps * self.segment_duration))


class StageLatencyReport:
    """Per-stage min/avg/max latency over the frames processed so far."""

    def __init__(self):
        self._samples: dict[str, list[float]] = {name: [] for name in STAGES}
        self._lock = threading.Lock()

    def add(self, stage: str, seconds: float) -> None:
        with self._lock:
            self._samples[stage].append(seconds * 1000.0)

    def stats(self) -> dict[str, dict[str, float]]:
        out = {}
        with self._lock:
            snapshot = {k: list(v) for k, v in self._samples.items()}
        for name, values in snapshot.items():
            if values:
                out[name] = {"min_ms": min(values), "avg_ms": sum(values) / len(values),
                             "max_ms": max(values), "count": len(values)}
            else:
                out[name] = {"min_ms": 0.0, "avg_ms": 0.0, "max_ms": 0.0, "count": 0}
        return out

    def to_json(self) -> dict:
        stats = self.stats()
        return {"iterations": max(s["count"] for s in stats.values()),
                "stages": stats}


class FrameSource:
    """Anything that yields synchronized per-tick camera frames."""

    camera_count: int
    width: int
    height: int

    def ticks(self):  # pragma: no cover - interface
        raise NotImplementedError

    def close(self) -> None:
        pass


class DiskSceneSource(FrameSource):
    """Reads a captured scene directory at (optionally) frame-rate pace."""

    def __init__(self, scene_dir: str | Path, max_ticks: int | None = None):
        self.scene_dir = Path(scene_dir)
        self.spec, self.frame_count = load_manifest(self.scene_dir)
        self.camera_count = self.spec.camera_count
        self.width = self.spec.width
        self.height = self.spec.height
        if max_ticks is not None:
            self.frame_count = min(self.frame_count, max_ticks)

    def ticks(self):
        for t in range(self.frame_count):
            yield t, [load_frame(self.scene_dir, cam, t, self.spec)
                      for cam in range(self.camera_count)]


class PrerenderedSource(FrameSource):
    """Cycles a fixed set of pre-rendered ticks; used by the bench harness."""

    def __init__(self, ticks: list[list[Frame]], iterations: int):
        self._ticks = ticks
        self.iterations = iterations
        self.camera_count = len(ticks[0])
        self.width = ticks[0][0].width
        self.height = ticks[0][0].height

    def ticks(self):
        for t in range(self.iterations):
            base = self._ticks[t % len(self._ticks)]
            yield t, [f.with_timestamp(t) for f in base]


class CameraIngestSource(FrameSource):
    """Placeholder for real capture hardware; intentionally unimplemented."""

    def __init__(self, *args, **kwargs):
        raise NotImplementedError("live camera ingestion is out of scope; "
                                  "capture to disk and use DiskSceneSource")


def _bundle_frames(frames: list[Frame]) -> bytes:
    parts = [struct.pack("<H", len(frames))]
    for f in frames:
        blob = f.to_bytes()
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def _unbundle_frames(buf: bytes) -> list[Frame]:
    (count,) = struct.unpack_from("<H", buf, 0)
    off = 2
    frames = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", buf, off)
        off += 4
        frames.append(Frame.from_bytes(buf[off:off + length]))
        off += length
    return frames


def _bundle_records(per_cluster: list[list[bytes]]) -> bytes:
    parts = [struct.pack("<B", len(per_cluster))]
    for records in per_cluster:
        parts.append(struct.pack("<H", len(records)))
        for rec in records:
            parts.append(struct.pack("<I", len(rec)))
            parts.append(rec)
    return b"".join(parts)


def _unbundle_records(buf: bytes) -> list[list[bytes]]:
    (count,) = struct.unpack_from("<B", buf, 0)
    off = 1
    out = []
    for _ in range(count):
        (tiles,) = struct.unpack_from("<H", buf, off)
        off += 2
        records = []
        for _ in range(tiles):
            (length,) = struct.unpack_from("<I", buf, off)
            off += 4
            records.append(buf[off:off + length])
            off += length
        out.append(records)
    return out


class PipelineHandle:
    """Running pipeline: stop/wait, latency report, and publish callbacks."""

    def __init__(self, config: PipelineConfig, source: FrameSource,
                 on_segment, on_end):
        config.validate()
        self.config = config
        self.source = source
        self.report = StageLatencyReport()
        self.errors: list[BaseException] = []
        self.model = ViewIndexModel(source.camera_count, config.stages)
        self.layouts = build_layouts(self.model, config.views_per_side)
        self.lookup = build_lookup_table(self.layouts, self.model)
        self._on_segment = on_segment
        self._on_end = on_end
        cap = config.channel_capacity
        self.ch_frames = UniversalDataChannel(cap)
        self.ch_views = UniversalDataChannel(cap)
        self.ch_clusters = UniversalDataChannel(cap)
        self.ch_encoded = UniversalDataChannel(cap)
        self._subs = {
            "interp": self.ch_frames.subscribe(),
            "stitch": self.ch_views.subscribe(),
            "encode": self.ch_clusters.subscribe(),
            "segment": self.ch_encoded.subscribe(),
        }
        self._pool = ThreadPoolExecutor(max_workers=max(1, config.workers),
                                        thread_name_prefix="fvv-fanout")
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self.ticks_done = 0
        self.segments_published = 0

    # --- stage workers -------------------------------------------------

    def _guard(self, fn, *channels_to_close):
        def run():
            try:
                fn()
            except BaseException as e:  # noqa: BLE001 - surfaced via wait()
                self.errors.append(e)
                self._stop.set()
            finally:
                for ch in channels_to_close:
                    ch.close()
        return run

    def _reader(self) -> None:
        period = 1.0 / self.config.fps
        next_due = time.perf_counter()
        for t, frames in self.source.ticks():
            if self._stop.is_set():
                return
            if self.config.realtime:
                now = time.perf_counter()
                if now < next_due:
                    time.sleep(next_due - now)
                next_due += period
            pack = UnifiedDataPack(PackType.FRAME_RAW, _bundle_frames(frames))
            self.ch_frames.put(pack.stamped("capture"))

    def _interp(self) -> None:
        cfg = self.config
        step = 1 << cfg.stages
        for pack in self._subs["interp"]:
            t0 = time.perf_counter()
            cams = _unbundle_frames(pack.payload)
            views: list[Frame | None] = [None] * self.model.total_views
            for c, f in enumerate(cams):
                views[c * step] = f

            def gap(c):
                return dense_views(cams[c], cams[c + 1], cfg.stages, cfg.interp)

            for c, mids in enumerate(self._pool.map(gap, range(len(cams) - 1))):
                views[c * step + 1:(c + 1) * step] = mids
            self.report.add(STAGE_INTERP, time.perf_counter() - t0)
            out = UnifiedDataPack(PackType.FRAME_RAW, _bundle_frames(views))
            self.ch_views.put(out.stamped("interp-out"))

    def _stitch(self) -> None:
        for pack in self._subs["stitch"]:
            t0 = time.perf_counter()
            views = _unbundle_frames(pack.payload)
            quarters: dict[int, Frame] = {}

            def quarter(i: int) -> Frame:
                if i not in quarters:
                    quarters[i] = downscale(views[i], 4)
                return quarters[i]

            def assemble(layout):
                smalls = [quarter(t.index) for t in layout.tiles if t.tier == "quarter"]
                return assemble_cluster_frame(views[layout.anchor_index], smalls, layout)

            clusters = list(self._pool.map(assemble, self.layouts))
            self.report.add(STAGE_STITCH, time.perf_counter() - t0)
            payload = _bundle_frames([c.frame for c in clusters])
            out = UnifiedDataPack(PackType.FRAME_RAW, payload)
            self.ch_clusters.put(out.stamped("stitch-out", time.perf_counter()))

    def _encode(self) -> None:
        cfg = self.config
        encoders: dict[tuple[int, int], TileEncoder] = {}
        for pack in self._subs["encode"]:
            t0 = time.perf_counter()
            self.report.add(STAGE_SCHEDULE, t0 - pack.trace_time("stitch-out"))
            stitched = _unbundle_frames(pack.payload)

            def encode_cluster(args):
                layout, frame = args
                cf = ClusterFrame(layout.cluster_id, frame, _tile_rects(layout, frame))
                records = []
                for rect in cf.tile_map:
                    key = (layout.cluster_id, rect.index)
                    enc = encoders.get(key)
                    if enc is None:
                        enc = encoders[key] = TileEncoder(cfg.quality, cfg.gop)
                    records.append(enc.encode(cf.crop(rect)).to_bytes())
                return records

            per_cluster = list(self._pool.map(encode_cluster,
                                              zip(self.layouts, stitched)))
            self.report.add(STAGE_ENCODE, time.perf_counter() - t0)
            out = UnifiedDataPack(PackType.TILE_BITSTREAM, _bundle_records(per_cluster))
            self.ch_encoded.put(out.stamped("encode-out"))

    def _segment(self) -> None:
        cfg = self.config
        fper = cfg.frames_per_segment
        pending: list[list[list[bytes]]] = [[] for _ in self.layouts]
        sequence = 0
        for pack in self._subs["segment"]:
            per_cluster = _unbundle_records(pack.payload)
            for c, records in enumerate(per_cluster):
                pending[c].append(records)
            self.ticks_done += 1
            if len(pending[0]) == fper:
                start_pts = sequence * fper * round(PTS_CLOCK / cfg.fps)
                for c, frames in enumerate(pending):
                    body = mux_segment(frames, cfg.fps, start_pts)
                    self._on_segment(c, sequence, body, cfg.segment_duration)
                    self.segments_published += 1
                pending = [[] for _ in self.layouts]
                sequence += 1
        self._on_end()

    # --- lifecycle ------------------------------------------------------

    def start(self) -> "PipelineHandle":
        spec = [
            (self._reader, (self.ch_frames,)),
            (self._interp, (self.ch_views,)),
            (self._stitch, (self.ch_clusters,)),
            (self._encode, (self.ch_encoded,)),
            (self._segment, ()),
        ]
        for fn, closes in spec:
            t = threading.Thread(target=self._guard(fn, *closes),
                                 name=f"fvv-{fn.__name__.strip('_')}", daemon=True)
            self._threads.append(t)
            t.start()
        return self

    def wait(self, timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        for t in self._threads:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            t.join(remaining)
        if self.errors:
            raise self.errors[0]

    def stop(self) -> None:
        self._stop.set()
        for ch in (self.ch_frames, self.ch_views, self.ch_clusters, self.ch_encoded):
            ch.close()
        for t in self._threads:
            t.join(timeout=5)
        self._pool.shutdown(wait=False)


def _tile_rects(layout, frame):
    """Rebuild the tile map of a stitched frame from its layout and geometry
    (stitched width = base + cols * base/4 fixes the anchor width)."""
    from ..cluster import TileRect, SCALE_FACTOR

    smalls = [t for t in layout.tiles if t.tier == "quarter"]
    cols = (len(smalls) + SCALE_FACTOR - 1) // SCALE_FACTOR
    base_w = frame.width * SCALE_FACTOR // (SCALE_FACTOR + cols)
    cell_w, cell_h = base_w // SCALE_FACTOR, frame.height // SCALE_FACTOR
    rects = []
    small_i = 0
    for ref in layout.tiles:
        if ref.tier == "full":
            rects.append(TileRect(ref.index, "full", 0, 0, base_w, frame.height))
        else:
            col, row = divmod(small_i, SCALE_FACTOR)
            rects.append(TileRect(ref.index, "quarter", base_w + col * cell_w,
                                  row * cell_h, cell_w, cell_h))
            small_i += 1
    return tuple(rects)


def run_pipeline(config: PipelineConfig, source: FrameSource | None = None,
                 on_segment=None, on_end=None) -> PipelineHandle:
    """Assemble and start the staged pipeline; returns the running handle."""
    if source is None:
        if not config.scene_dir:
            raise ValueError("config.scene_dir or an explicit source is required")
        source = DiskSceneSource(config.scene_dir, config.max_ticks)
    handle = PipelineHandle(config, source,
                            on_segment or (lambda *a: None),
                            on_end or (lambda: None))
    return handle.start()
