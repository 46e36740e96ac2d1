"""Event streams and fixed-window event frames.

An event stream is kept as four parallel numpy arrays rather than a list of
objects; :class:`Event` exists for single-record access and iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import formats

DEFAULT_WINDOW = 0.125
DEFAULT_THRESHOLD = 0.4

# slack for float round-off when counting windows, e.g. 1.0 / 0.125
_WINDOW_EPS = 1e-9


class InvalidEventData(ValueError):
    """An event lies outside the sensor resolution or has a bad polarity."""


class Event(NamedTuple):
    x: int
    y: int
    t: float
    p: int


@dataclass(frozen=True)
class EventStream:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    resolution: tuple[int, int]  # (W, H)
    t_start: float = 0.0
    t_end: float = 0.0

    def __post_init__(self):
        for name, dtype in (("x", np.int64), ("y", np.int64), ("t", np.float64), ("p", np.int8)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype))
        n = len(self.x)
        if not (len(self.y) == len(self.t) == len(self.p) == n):
            raise ValueError("event arrays must have equal length")
        if n and np.any(np.diff(self.t) < 0):
            raise InvalidEventData("events must be sorted by timestamp")
        if self.t_end < self.t_start:
            raise ValueError("t_end must not precede t_start")

    @classmethod
    def from_events(cls, events: Sequence[Event], resolution, t_start=0.0, t_end=None):
        events = sorted(events, key=lambda e: e.t)
        cols = list(zip(*events)) if events else [(), (), (), ()]
        if t_end is None:
            t_end = max((e.t for e in events), default=t_start)
        return cls(*cols, resolution=tuple(resolution), t_start=t_start, t_end=t_end)

    @classmethod
    def empty(cls, resolution, t_start=0.0, t_end=0.0):
        return cls([], [], [], [], resolution=tuple(resolution), t_start=t_start, t_end=t_end)

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.x[i]), int(self.y[i]), float(self.t[i]), int(self.p[i]))

    def negated(self) -> "EventStream":
        return EventStream(self.x, self.y, self.t, -self.p, self.resolution, self.t_start, self.t_end)

    def validate(self) -> None:
        width, height = self.resolution
        if len(self) == 0:
            return
        if self.x.min() < 0 or self.x.max() >= width or self.y.min() < 0 or self.y.max() >= height:
            raise InvalidEventData(f"event outside {width}x{height} sensor")
        if not np.all(np.abs(self.p) == 1):
            raise InvalidEventData("polarity must be +1 or -1")
        if self.t[0] < self.t_start or self.t[-1] > self.t_end:
            raise InvalidEventData(
                f"timestamps must lie in [{self.t_start}, {self.t_end}]")

    def save(self, path) -> None:
        formats.write_event_file(path, self.x, self.y, self.t, self.p, self.resolution)

    @classmethod
    def load(cls, path, t_start=0.0, t_end=None) -> "EventStream":
        """Read an EVS1 file. The window is not stored, so callers pass it."""
        records, resolution = formats.read_event_file(path)
        if t_end is None:
            t_end = float(records["t"][-1]) if len(records) else t_start
        return cls(records["x"], records["y"], records["t"], records["p"],
                   resolution=resolution, t_start=t_start, t_end=t_end)


@dataclass
class EventFrame:
    data: np.ndarray  # H×W, normalized to [-1, 1]
    window: tuple[float, float]
    raw: np.ndarray = field(repr=False, default=None)  # signed polarity sums
    count: int = 0  # events that fell in the window


def window_count(t_start: float, t_end: float, delta_t: float) -> int:
    span = (t_end - t_start) / delta_t
    return max(1, math.ceil(span - _WINDOW_EPS))


def window_edges(t_start: float, t_end: float, delta_t: float) -> np.ndarray:
    n = window_count(t_start, t_end, delta_t)
    return t_start + delta_t * np.arange(n + 1, dtype=np.float64)


def stack_events(stream: EventStream, delta_t: float = DEFAULT_WINDOW) -> list[EventFrame]:
    """Accumulate signed polarities per pixel over consecutive windows.

    Windows are half-open ``(t0, t1]``; an event exactly on a shared edge goes
    to the earlier window and an event at ``t_start`` to the first one. Each
    frame is scaled by its own max-abs value so it lands in [-1, 1].
    """
    if not delta_t > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    stream.validate()
    width, height = stream.resolution
    edges = window_edges(stream.t_start, stream.t_end, delta_t)
    n_frames = len(edges) - 1

    idx = np.searchsorted(edges, stream.t, side="left") - 1
    idx = np.clip(idx, 0, n_frames - 1)
    flat = (idx * height + stream.y) * width + stream.x
    raw = np.bincount(flat, weights=stream.p.astype(np.float64),
                      minlength=n_frames * height * width).reshape(n_frames, height, width)
    counts = np.bincount(idx, minlength=n_frames)

    frames = []
    for k in range(n_frames):
        peak = np.abs(raw[k]).max()
        data = raw[k] / peak if peak > 0 else np.zeros_like(raw[k])
        frames.append(EventFrame(data=data, window=(float(edges[k]), float(edges[k + 1])),
                                 raw=raw[k], count=int(counts[k])))
    return frames


def synthesize_events(log_intensity_prev, log_intensity_next, threshold=DEFAULT_THRESHOLD,
                      t0=0.0, t1=DEFAULT_WINDOW) -> EventStream:
    """Threshold-crossing event model between two log-intensity frames.

    Each pixel fires ``floor(|dlogI| / threshold)`` events with the sign of
    the change, timestamped evenly across ``(t0, t1]``.
    """
    prev = np.asarray(log_intensity_prev, dtype=np.float64)
    nxt = np.asarray(log_intensity_next, dtype=np.float64)
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise ValueError(f"log-intensity frames must share a 2-D shape: {prev.shape} vs {nxt.shape}")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    height, width = prev.shape
    delta = nxt - prev
    counts = np.floor(np.abs(delta) / threshold).astype(np.int64)
    ys, xs = np.nonzero(counts)
    n = counts[ys, xs]
    total = int(n.sum())
    if total == 0:
        return EventStream.empty((width, height), t0, t1)

    x = np.repeat(xs, n)
    y = np.repeat(ys, n)
    p = np.repeat(np.sign(delta[ys, xs]).astype(np.int8), n)
    # k-th of n events at a pixel fires at t0 + k/n * (t1 - t0), k = 1..n
    starts = np.repeat(np.cumsum(n) - n, n)
    k = np.arange(total) - starts + 1
    t = t0 + (k / np.repeat(n, n)) * (t1 - t0)
    order = np.argsort(t, kind="stable")
    return EventStream(x[order], y[order], t[order], p[order],
                       resolution=(width, height), t_start=t0, t_end=t1)


def event_frame_to_input(frame: EventFrame | np.ndarray, channels: int = 3) -> np.ndarray:
    data = frame.data if isinstance(frame, EventFrame) else np.asarray(frame)
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    return np.repeat(data[:, :, None], channels, axis=2)
