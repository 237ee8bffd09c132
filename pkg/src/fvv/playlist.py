"""Live HLS playlists: a sliding window of TS segments per cluster."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

DEFAULT_WINDOW = 6


class SequencingError(Exception):
    pass


class PlaylistFormatError(Exception):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def segment_uri(sequence: int) -> str:
    return f"seg{sequence:05d}.ts"


@dataclass(frozen=True)
class PlaylistEntry:
    uri: str
    duration: float


@dataclass(frozen=True)
class Playlist:
    """Rendered window state; media_sequence tracks evictions."""

    target_duration: int
    media_sequence: int = 0
    window: tuple[PlaylistEntry, ...] = ()
    window_size: int = field(default=DEFAULT_WINDOW, compare=False)
    ended: bool = False
    version: int = 3
    cluster_id: int | None = field(default=None, compare=False)
    extras: tuple[str, ...] = field(default=(), compare=False)

    @property
    def next_sequence(self) -> int:
        return self.media_sequence + len(self.window)


def new_playlist(segment_duration: float, window_size: int = DEFAULT_WINDOW,
                 cluster_id: int | None = None) -> Playlist:
    return Playlist(target_duration=math.ceil(segment_duration),
                    window_size=window_size, cluster_id=cluster_id)


def rotate_playlist(playlist: Playlist, sequence: int, duration: float
                    ) -> tuple[Playlist, str]:
    """Append one segment, evict beyond the window, render the m3u8 text."""
    if playlist.ended:
        raise SequencingError("playlist already ended")
    if sequence != playlist.next_sequence:
        raise SequencingError(
            f"segment {sequence} out of order, expected {playlist.next_sequence}")
    window = playlist.window + (PlaylistEntry(segment_uri(sequence), duration),)
    media_sequence = playlist.media_sequence
    while len(window) > playlist.window_size:
        window = window[1:]
        media_sequence += 1
    updated = replace(playlist, window=window, media_sequence=media_sequence)
    return updated, render_playlist(updated)


def end_playlist(playlist: Playlist) -> tuple[Playlist, str]:
    updated = replace(playlist, ended=True)
    return updated, render_playlist(updated)


def render_playlist(p: Playlist) -> str:
    lines = [
        "#EXTM3U",
        f"#EXT-X-VERSION:{p.version}",
        f"#EXT-X-TARGETDURATION:{p.target_duration}",
        f"#EXT-X-MEDIA-SEQUENCE:{p.media_sequence}",
    ]
    for entry in p.window:
        lines.append(f"#EXTINF:{entry.duration:.3f},")
        lines.append(entry.uri)
    if p.ended:
        lines.append("#EXT-X-ENDLIST")
    return "\n".join(lines) + "\n"


def parse_playlist(text: str) -> Playlist:
    """Tolerant parser for the tags rendered above; unknown tags are retained."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "#EXTM3U":
        raise PlaylistFormatError("missing #EXTM3U header", 1)
    version = 3
    target = 0
    media_sequence = 0
    ended = False
    extras: list[str] = []
    entries: list[PlaylistEntry] = []
    pending: float | None = None
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#EXT-X-VERSION:"):
            version = int(line.split(":", 1)[1])
        elif line.startswith("#EXT-X-TARGETDURATION:"):
            target = int(line.split(":", 1)[1])
        elif line.startswith("#EXT-X-MEDIA-SEQUENCE:"):
            media_sequence = int(line.split(":", 1)[1])
        elif line.startswith("#EXTINF:"):
            body = line.split(":", 1)[1]
            try:
                pending = float(body.split(",", 1)[0])
            except ValueError:
                raise PlaylistFormatError(f"malformed EXTINF {body!r}", no) from None
        elif line == "#EXT-X-ENDLIST":
            ended = True
        elif line.startswith("#"):
            extras.append(line)
        else:
            if pending is None:
                raise PlaylistFormatError(f"uri {line!r} without a preceding EXTINF", no)
            entries.append(PlaylistEntry(line, pending))
            pending = None
    return Playlist(target_duration=target, media_sequence=media_sequence,
                    window=tuple(entries), window_size=max(DEFAULT_WINDOW, len(entries)),
                    ended=ended, version=version, extras=tuple(extras))
