"""HTTP delivery of lookup table, per-cluster playlists, segments, and metrics.

Segments are immutable once published; a playlist is swapped in only after
the segment it references is already fetchable, so clients can never see a
playlist pointing at an unpublished segment.
"""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..playlist import end_playlist, new_playlist, rotate_playlist, segment_uri

CONTENT_M3U8 = "application/vnd.apple.mpegurl"
CONTENT_TS = "video/mp2t"
CONTENT_JSON = "application/json"

_SEG_RE = re.compile(r"^/cluster/(\d+)/seg(\d{5})\.ts$")
_PLAYLIST_RE = re.compile(r"^/cluster/(\d+)/playlist\.m3u8$")


class PublishStore:
    """Atomic view of everything the HTTP surface can serve."""

    def __init__(self, cluster_count: int, segment_duration: float,
                 playlist_window: int, lookup_json: dict):
        self._lock = threading.Lock()
        self._segments: dict[tuple[int, int], bytes] = {}
        self._playlists = {c: new_playlist(segment_duration, playlist_window, c)
                           for c in range(cluster_count)}
        self._rendered = {c: None for c in range(cluster_count)}
        self._lookup = json.dumps(lookup_json).encode()
        self.cluster_count = cluster_count
        self.request_log: list[str] = []

    def publish_segment(self, cluster: int, sequence: int, body: bytes,
                        duration: float) -> None:
        # publish-then-rotate: bytes become fetchable before the playlist
        # mentions them
        with self._lock:
            self._segments[(cluster, sequence)] = body
        playlist = self._playlists[cluster]
        updated, text = rotate_playlist(playlist, sequence, duration)
        with self._lock:
            self._playlists[cluster] = updated
            self._rendered[cluster] = text.encode()
            evicted = [(c, s) for (c, s) in self._segments
                       if c == cluster and s < updated.media_sequence]
            for key in evicted:
                del self._segments[key]

    def finish(self) -> None:
        with self._lock:
            for c, playlist in self._playlists.items():
                updated, text = end_playlist(playlist)
                self._playlists[c] = updated
                self._rendered[c] = text.encode()

    def lookup_bytes(self) -> bytes:
        return self._lookup

    def playlist_bytes(self, cluster: int) -> bytes | None:
        with self._lock:
            return self._rendered.get(cluster)

    def segment_bytes(self, cluster: int, sequence: int) -> tuple[bytes | None, bool]:
        """(body, evicted): body None when unknown; evicted marks 410."""
        with self._lock:
            body = self._segments.get((cluster, sequence))
            if body is not None:
                return body, False
            playlist = self._playlists.get(cluster)
            evicted = playlist is not None and sequence < playlist.media_sequence
            return None, evicted

    def playlist(self, cluster: int):
        with self._lock:
            return self._playlists.get(cluster)


class _Handler(BaseHTTPRequestHandler):
    store: PublishStore = None  # type: ignore[assignment]
    metrics_fn = staticmethod(lambda: {})

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, body: bytes = b"", ctype: str = "text/plain") -> None:
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-cache")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 - stdlib naming
        store = self.store
        store.request_log.append(self.path)
        if self.path == "/lookup.json":
            self._send(200, store.lookup_bytes(), CONTENT_JSON)
            return
        if self.path == "/metrics":
            self._send(200, json.dumps(self.metrics_fn()).encode(), CONTENT_JSON)
            return
        m = _PLAYLIST_RE.match(self.path)
        if m:
            cluster = int(m.group(1))
            body = store.playlist_bytes(cluster)
            if cluster >= store.cluster_count or body is None:
                self._send(404, b"unknown cluster")
            else:
                self._send(200, body, CONTENT_M3U8)
            return
        m = _SEG_RE.match(self.path)
        if m:
            cluster, sequence = int(m.group(1)), int(m.group(2))
            if cluster >= store.cluster_count:
                self._send(404, b"unknown cluster")
                return
            body, evicted = store.segment_bytes(cluster, sequence)
            if body is not None:
                self._send(200, body, CONTENT_TS)
            elif evicted:
                self._send(410, b"segment evicted from the live window")
            else:
                self._send(404, b"segment not yet published")
            return
        self._send(404, b"not found")


class EdgeHttpServer:
    def __init__(self, store: PublishStore, metrics_fn, port: int = 0):
        handler = type("BoundHandler", (_Handler,),
                       {"store": store, "metrics_fn": staticmethod(metrics_fn)})
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="fvv-http", daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "EdgeHttpServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


def serve_pipeline(config, source=None):
    """Wire a pipeline to a fresh store + HTTP server; returns (handle, server, store)."""
    from .pipeline import run_pipeline, DiskSceneSource

    if source is None:
        source = DiskSceneSource(config.scene_dir, config.max_ticks)
    probe = source.camera_count
    # lookup/layouts need the model; PipelineHandle builds them, so create it
    # first without starting, then bind the store callbacks
    from .pipeline import PipelineHandle

    store_holder = {}

    def on_segment(cluster, sequence, body, duration):
        store_holder["store"].publish_segment(cluster, sequence, body, duration)

    def on_end():
        store_holder["store"].finish()

    handle = PipelineHandle(config, source, on_segment, on_end)
    store = PublishStore(probe, config.segment_duration, config.playlist_window,
                         handle.lookup.to_json())
    store_holder["store"] = store
    server = EdgeHttpServer(store, handle.report.to_json, config.port).start()
    handle.start()
    return handle, server, store
