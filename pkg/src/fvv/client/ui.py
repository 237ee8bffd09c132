"""Local UI bridge: latest frame as PNG, state as JSON, view control by POST."""
from __future__ import annotations

import io
import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image

from ..frame import Frame, PixelFormat


def frame_to_rgb(frame: Frame) -> np.ndarray:
    if frame.format == PixelFormat.RGB8:
        return frame.planes[0]
    y = frame.planes[0].astype(np.float64)
    if frame.format == PixelFormat.GRAY8:
        return np.repeat(y[..., None], 3, axis=2).astype(np.uint8)
    u = np.repeat(np.repeat(frame.planes[1].astype(np.float64) - 128, 2, 0), 2, 1)
    v = np.repeat(np.repeat(frame.planes[2].astype(np.float64) - 128, 2, 0), 2, 1)
    u = u[:frame.height, :frame.width]
    v = v[:frame.height, :frame.width]
    rgb = np.stack([y + 1.402 * v,
                    y - 0.344136 * u - 0.714136 * v,
                    y + 1.772 * u], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def frame_to_png(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame_to_rgb(frame)).save(buf, format="PNG")
    return buf.getvalue()


class _UiHandler(BaseHTTPRequestHandler):
    client = None  # bound by UiServer
    assets: Path | None = None

    def log_message(self, fmt, *args):
        pass

    def _send(self, code, body=b"", ctype="text/plain"):
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802
        if self.path == "/frame":
            frame = self.client.latest_frame()
            if frame is None:
                self._send(503, b"no frame decoded yet")
            else:
                self._send(200, frame_to_png(frame), "image/png")
            return
        if self.path == "/state":
            self._send(200, json.dumps(self.client.state_json()).encode(),
                       "application/json")
            return
        if self.assets is not None:
            rel = "index.html" if self.path in ("/", "") else self.path.lstrip("/")
            target = (self.assets / rel).resolve()
            if target.is_file() and self.assets.resolve() in target.parents:
                ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
                self._send(200, target.read_bytes(), ctype)
                return
        self._send(404, b"not found")

    def do_POST(self):  # noqa: N802
        if self.path != "/view":
            self._send(404, b"not found")
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            index = int(body["index"])
        except (ValueError, KeyError, json.JSONDecodeError):
            self._send(400, b'expected {"index": <int>}')
            return
        try:
            self.client.set_view(index)
        except IndexError as e:
            self._send(400, json.dumps({
                "error": str(e),
                "valid_range": [0, self.client.lookup.total_views - 1
                                if self.client.lookup else None],
            }).encode(), "application/json")
            return
        self._send(200, json.dumps({"view": index}).encode(), "application/json")


class UiServer:
    def __init__(self, client, port: int = 0, assets_dir: str | Path | None = None):
        handler = type("BoundUiHandler", (_UiHandler,), {
            "client": client,
            "assets": Path(assets_dir) if assets_dir else None,
        })
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="fvv-ui", daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "UiServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)
