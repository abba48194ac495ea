"""Core event-stream types, validation, and fixed-window partitioning.

Timestamps are integer microseconds everywhere; no floating-point time is
used in core types, so a 60-second recording accumulates zero drift.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadPolarity,
    NonMonotoneTimestamp,
    OutOfBounds,
    ZeroWindow,
)


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel dimensions of the sensor array."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")
        # coordinates are stored as uint16
        if self.width > 65536 or self.height > 65536:
            raise ValueError(f"geometry {self.width}x{self.height} exceeds 65536")


GEN1_GEOMETRY = SensorGeometry(width=304, height=240)
GEN4_GEOMETRY = SensorGeometry(width=1280, height=720)


@dataclass(frozen=True)
class Event:
    """One camera event: timestamp (us), pixel column/row, polarity (0 or 1)."""

    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class TimeWindow:
    """Half-open time interval [t0, t1) in microseconds."""

    t0: int
    t1: int

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError(f"window end {self.t1} must exceed start {self.t0}")

    @property
    def length(self) -> int:
        return self.t1 - self.t0


class EventStream:
    """Validated, time-ordered event sequence bound to a sensor geometry.

    Events are stored as parallel numpy arrays (t: int64, x/y: uint16,
    p: uint8) marked read-only; operations on streams are pure functions.
    """

    __slots__ = ("geometry", "_t", "_x", "_y", "_p")

    def __init__(
        self,
        geometry: SensorGeometry,
        t: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
        p: np.ndarray,
        validate: bool = True,
    ):
        t = np.ascontiguousarray(t, dtype=np.int64)
        x = np.ascontiguousarray(x, dtype=np.uint16)
        y = np.ascontiguousarray(y, dtype=np.uint16)
        p = np.ascontiguousarray(p, dtype=np.uint8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ValueError("event arrays must be 1-D and equal length")
        if validate:
            _check_invariants(t, x, y, p, geometry)
        for arr in (t, x, y, p):
            arr.flags.writeable = False
        self.geometry = geometry
        self._t, self._x, self._y, self._p = t, x, y, p

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def p(self) -> np.ndarray:
        return self._p

    def __len__(self) -> int:
        return self._t.shape[0]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self._t[i]), int(self._x[i]), int(self._y[i]), int(self._p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self._t, other._t)
            and np.array_equal(self._x, other._x)
            and np.array_equal(self._y, other._y)
            and np.array_equal(self._p, other._p)
        )

    def __repr__(self) -> str:
        return (
            f"EventStream({len(self)} events, "
            f"{self.geometry.width}x{self.geometry.height})"
        )


def _check_invariants(t, x, y, p, geometry: SensorGeometry) -> None:
    """Raise the violation with the smallest event index, if any.

    Works on signed or unsigned coordinate arrays; the x < 0 style terms are
    vacuous (and free) for the unsigned storage dtypes.
    """
    n = t.shape[0]
    if n == 0:
        return
    first = {}
    # A negative first timestamp is reported as non-monotone w.r.t. the
    # implicit time origin 0.
    bad_t = np.flatnonzero(np.diff(t) < 0)
    if t[0] < 0:
        first[NonMonotoneTimestamp] = 0
    elif bad_t.size:
        first[NonMonotoneTimestamp] = int(bad_t[0]) + 1
    bad_xy = np.flatnonzero(
        (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
    )
    if bad_xy.size:
        first[OutOfBounds] = int(bad_xy[0])
    bad_p = np.flatnonzero((p < 0) | (p > 1))
    if bad_p.size:
        first[BadPolarity] = int(bad_p[0])
    if first:
        err = min(first, key=first.get)
        raise err(first[err])


def validate_stream(raw: Iterable[Event | tuple], geometry: SensorGeometry) -> EventStream:
    """Build a validated EventStream from a sequence of events.

    Accepts Event objects or (t, x, y, p) tuples.  Reports the first
    violating index via NonMonotoneTimestamp / OutOfBounds / BadPolarity.
    """
    rows = [(e.t, e.x, e.y, e.p) if isinstance(e, Event) else tuple(e) for e in raw]
    if rows:
        arr = np.asarray(rows, dtype=np.int64)
        t, x, y, p = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
        # Check before the uint16 storage cast so negative or oversized
        # coordinates cannot wrap into range.
        _check_invariants(t, x, y, p, geometry)
        return EventStream(geometry, t, x, y, p, validate=False)
    empty = np.empty(0, dtype=np.int64)
    return EventStream(geometry, empty, empty, empty, empty)


@dataclass(frozen=True)
class WindowSlice:
    """One partition window with the index range of the events it holds.

    `partial` flags a trailing window that the recording only partially
    covers (the stream's data extent ends before the window does);
    downstream code decides whether to keep or drop it.
    """

    window: TimeWindow
    start: int
    stop: int
    partial: bool


def partition_windows(
    stream: EventStream, t_frame: int, t_start: int = 0
) -> list[WindowSlice]:
    """Partition a stream into consecutive windows of t_frame microseconds.

    Windows are [t_start + k*t_frame, t_start + (k+1)*t_frame); every event
    falls in exactly one window (half-open boundaries).  The window origin
    defaults to 0 rather than the first event so frame indices are stable
    across runs; pass t_start for recordings with offset clocks.
    """
    if t_frame <= 0:
        raise ZeroWindow(f"t_frame must be positive, got {t_frame}")
    if len(stream) == 0:
        return []
    first_t = int(stream.t[0])
    last_t = int(stream.t[-1])
    if t_start > first_t:
        raise ValueError(f"t_start {t_start} is after the first event at {first_t}")
    n_windows = (last_t - t_start) // t_frame + 1
    edges = t_start + t_frame * np.arange(1, n_windows + 1, dtype=np.int64)
    stops = np.searchsorted(stream.t, edges, side="left")
    out = []
    prev = 0
    for k in range(n_windows):
        t0 = t_start + k * t_frame
        stop = int(stops[k])
        # Data extent [t_start, last_t + 1) only partially covers the last
        # window unless it ends exactly on the window edge.
        partial = k == n_windows - 1 and last_t + 1 < t0 + t_frame
        out.append(WindowSlice(TimeWindow(t0, t0 + t_frame), prev, stop, partial))
        prev = stop
    return out


def slice_window(stream: EventStream, window: TimeWindow) -> EventStream:
    """Events with window.t0 <= t < window.t1, in original order.

    Binary search on the (sorted) timestamps: O(log n + k).
    """
    lo, hi = np.searchsorted(stream.t, [window.t0, window.t1], side="left")
    return EventStream(
        stream.geometry,
        stream.t[lo:hi],
        stream.x[lo:hi],
        stream.y[lo:hi],
        stream.p[lo:hi],
        validate=False,
    )


def concat_streams(parts: Sequence[EventStream], geometry: SensorGeometry) -> EventStream:
    """Concatenate already-ordered stream slices back into one stream."""
    if not parts:
        return validate_stream([], geometry)
    return EventStream(
        geometry,
        np.concatenate([s.t for s in parts]),
        np.concatenate([s.x for s in parts]),
        np.concatenate([s.y for s in parts]),
        np.concatenate([s.p for s in parts]),
    )
