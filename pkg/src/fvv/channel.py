"""Typed data packs and the bounded broadcast FIFO connecting pipeline stages."""
from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field


class PackType(enum.Enum):
    FRAME_RAW = "frame-raw"
    TILE_BITSTREAM = "tile-bitstream"
    SEGMENT_TS = "segment-ts"
    CONTROL = "control"


class ChannelClosed(Exception):
    """PUT on a closed channel."""


class EndOfStream(Exception):
    """GET on a closed channel with an empty backlog."""


@dataclass(frozen=True)
class UnifiedDataPack:
    """Typed binary block: a content tag, its byte size, and the payload.

    ``trace`` carries (label, wall-clock seconds) events appended by pipeline
    stages for latency accounting; packs stay immutable, so adding an event
    returns a new pack sharing the payload.
    """

    data_type: PackType
    payload: bytes
    size: int = -1
    trace: tuple[tuple[str, float], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.size == -1:
            object.__setattr__(self, "size", len(self.payload))
        elif self.size != len(self.payload):
            raise ValueError(f"declared size {self.size} != payload length {len(self.payload)}")

    def stamped(self, label: str, at: float | None = None) -> "UnifiedDataPack":
        event = (label, time.perf_counter() if at is None else at)
        return UnifiedDataPack(self.data_type, self.payload, self.size, self.trace + (event,))

    def trace_time(self, label: str) -> float:
        for name, at in self.trace:
            if name == label:
                return at
        raise KeyError(label)


class Subscription:
    """One consumer's FIFO cursor over a channel. Iterable until end of stream."""

    def __init__(self, channel: "UniversalDataChannel", cursor: int):
        self._channel = channel
        self.cursor = cursor
        self.active = True

    def get(self, timeout: float | None = None) -> UnifiedDataPack:
        return self._channel._get(self, timeout)

    def detach(self) -> None:
        self._channel._detach(self)

    def __iter__(self):
        while True:
            try:
                yield self.get()
            except EndOfStream:
                return


class UniversalDataChannel:
    """Bounded one-in multi-out FIFO with PUT/GET.

    Every subscriber receives every pack exactly once, in arrival order.
    PUT blocks (never drops) once the slowest subscriber's backlog reaches
    capacity, unless the channel was built with ``drop_oldest=True``.
    """

    def __init__(self, capacity: int = 8, drop_oldest: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.drop_oldest = drop_oldest
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._buffer: list[UnifiedDataPack] = []
        self._base = 0  # sequence number of _buffer[0]
        self._subs: list[Subscription] = []
        self._closed = False

    def subscribe(self) -> Subscription:
        with self._lock:
            sub = Subscription(self, self._base + len(self._buffer))
            self._subs.append(sub)
            return sub

    def put(self, pack: UnifiedDataPack, timeout: float | None = None) -> None:
        with self._cond:
            if self._closed:
                raise ChannelClosed("put on closed channel")
            deadline = None if timeout is None else time.monotonic() + timeout
            while self._subs and self._backlog() >= self.capacity:
                if self.drop_oldest:
                    self._drop_one()
                    break
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("channel full")
                self._cond.wait(remaining)
                if self._closed:
                    raise ChannelClosed("put on closed channel")
            if self._subs:
                self._buffer.append(pack)
            # With no subscribers the pack is unobservable; keep put cheap.
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed

    def _backlog(self) -> int:
        slowest = min(s.cursor for s in self._subs)
        return self._base + len(self._buffer) - slowest

    def _drop_one(self) -> None:
        if self._buffer:
            self._buffer.pop(0)
            self._base += 1
            for s in self._subs:
                s.cursor = max(s.cursor, self._base)

    def _get(self, sub: Subscription, timeout: float | None) -> UnifiedDataPack:
        with self._cond:
            if not sub.active:
                raise EndOfStream("subscription detached")
            deadline = None if timeout is None else time.monotonic() + timeout
            while sub.cursor >= self._base + len(self._buffer):
                if self._closed:
                    raise EndOfStream("channel closed and drained")
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("no pack available")
                self._cond.wait(remaining)
            pack = self._buffer[sub.cursor - self._base]
            sub.cursor += 1
            self._trim()
            self._cond.notify_all()
            return pack

    def _detach(self, sub: Subscription) -> None:
        with self._cond:
            if sub in self._subs:
                self._subs.remove(sub)
                sub.active = False
                self._trim()
                self._cond.notify_all()

    def _trim(self) -> None:
        if not self._subs:
            self._buffer.clear()
            self._base += 0
            return
        slowest = min(s.cursor for s in self._subs)
        while self._base < slowest and self._buffer:
            self._buffer.pop(0)
            self._base += 1
