"""Event stream parsing, fixed-time windowing, and synthetic hand fixtures.

Text format: one event per line as `t,x,y,p` (decimal integers, t in
microseconds), `#`-prefixed comments, optional `# geometry WxH` header
before the first event.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import OrderingError, ParameterError, ParseError, RangeError

US_PER_MS = 1_000

_GEOMETRY_RE = re.compile(r"#\s*geometry\s+(\d+)\s*x\s*(\d+)\s*$")


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel array size. Default is the 346x260 DAVIS sensor."""

    width: int = 346
    height: int = 260

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"geometry must be positive, got {self}")


DEFAULT_GEOMETRY = SensorGeometry()


@dataclass(frozen=True)
class BinSpec:
    """Fixed-time windowing: window length and stride, both in microseconds."""

    window_us: int = 100_000
    stride_us: int = 1_000

    def __post_init__(self):
        if self.window_us <= 0:
            raise ParameterError(f"window must be positive, got {self.window_us}")
        if not 0 < self.stride_us <= self.window_us:
            raise ParameterError(
                f"stride must satisfy 0 < stride <= window, got {self.stride_us}"
            )


class EventBin:
    """Immutable, time-sorted batch of events ending at timestamp t0.

    Events are stored as parallel arrays (t int64, x/y int64, p uint8).
    Downstream accumulation treats the window as (t0 - L, t0]: the newest
    admissible event has age 0.
    """

    __slots__ = ("t", "x", "y", "p", "t0", "geometry")

    def __init__(self, t, x, y, p, t0, geometry):
        t = np.ascontiguousarray(t, dtype=np.int64)
        x = np.ascontiguousarray(x, dtype=np.int64)
        y = np.ascontiguousarray(y, dtype=np.int64)
        p = np.ascontiguousarray(p, dtype=np.uint8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ParameterError("event arrays must be 1-d and equal length")
        if t.size:
            if np.any(np.diff(t) < 0):
                raise OrderingError("events must be sorted by timestamp")
            if t[0] < 0:
                raise RangeError("timestamps must be non-negative")
            if t[-1] > t0:
                raise RangeError(f"event at t={t.max()} exceeds bin end t0={t0}")
            if x.min() < 0 or x.max() >= geometry.width:
                raise RangeError("x coordinate outside geometry")
            if y.min() < 0 or y.max() >= geometry.height:
                raise RangeError("y coordinate outside geometry")
            if p.max() > 1:
                raise RangeError("polarity must be 0 or 1")
        for arr in (t, x, y, p):
            arr.flags.writeable = False
        self.t, self.x, self.y, self.p = t, x, y, p
        self.t0 = int(t0)
        self.geometry = geometry

    def __len__(self):
        return self.t.size

    def events(self) -> Iterator[Event]:
        for i in range(self.t.size):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    @classmethod
    def from_events(cls, events, t0, geometry=DEFAULT_GEOMETRY):
        evs = list(events)
        t = np.array([e[0] for e in evs], dtype=np.int64)
        x = np.array([e[1] for e in evs], dtype=np.int64)
        y = np.array([e[2] for e in evs], dtype=np.int64)
        p = np.array([e[3] for e in evs], dtype=np.uint8)
        return cls(t, x, y, p, t0, geometry)


@dataclass(frozen=True)
class EventStream:
    """Validated, timestamp-ordered events plus the sensor geometry."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    geometry: SensorGeometry

    def __len__(self):
        return self.t.size

    def events(self) -> Iterator[Event]:
        for i in range(self.t.size):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))


def parse_events(text, geometry=None) -> EventStream:
    """Parse the text event format into a validated EventStream.

    `text` may be str or bytes. A `# geometry WxH` header overrides the
    `geometry` argument; with neither, the DAVIS 346x260 default applies.
    Raises ParseError / RangeError / OrderingError with the offending
    1-based line number.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    ts, xs, ys, ps = [], [], [], []
    geo = geometry
    last_t = -1
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _GEOMETRY_RE.match(line)
            if m:
                if ts:
                    raise ParseError("geometry header after event data", line_no)
                geo = SensorGeometry(int(m.group(1)), int(m.group(2)))
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 't,x,y,p', got {line!r}", line_no)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", line_no) from None
        g = geo or DEFAULT_GEOMETRY
        if t < 0:
            raise RangeError(f"negative timestamp {t}", line_no)
        if not 0 <= x < g.width:
            raise RangeError(f"x={x} outside width {g.width}", line_no)
        if not 0 <= y < g.height:
            raise RangeError(f"y={y} outside height {g.height}", line_no)
        if p not in (0, 1):
            raise RangeError(f"polarity {p} not in {{0,1}}", line_no)
        if t < last_t:
            raise OrderingError(f"timestamp {t} regresses below {last_t}", line_no)
        last_t = t
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    return EventStream(
        t=np.array(ts, dtype=np.int64),
        x=np.array(xs, dtype=np.int64),
        y=np.array(ys, dtype=np.int64),
        p=np.array(ps, dtype=np.uint8),
        geometry=geo or DEFAULT_GEOMETRY,
    )


def serialize_events(stream: EventStream) -> str:
    """Canonical text form; parse_events(serialize_events(s)) round-trips."""
    g = stream.geometry
    lines = [f"# geometry {g.width}x{g.height}"]
    for i in range(len(stream)):
        lines.append(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}")
    return "\n".join(lines) + "\n"


def bin_fixed_time(stream: EventStream, spec: BinSpec, t_start: int = 0, t_end=None):
    """Yield overlapping fixed-time bins.

    Bin k (k >= 1) ends at t0 = t_start + k*stride and covers the window
    (t0 - window, t0]. Bins are emitted while t0 is below t_end rounded up
    to the stride grid; t_end defaults to the last event timestamp, so a
    recording of duration D yields ceil(D / stride) bins and every event
    lands in at least one of them.
    """
    if len(stream) == 0:
        return
    window, stride = spec.window_us, spec.stride_us
    t_last = int(stream.t[-1]) if t_end is None else int(t_end)
    k_max = max(1, math.ceil((t_last - t_start) / stride))
    for k in range(1, k_max + 1):
        t0 = t_start + k * stride
        lo = int(np.searchsorted(stream.t, t0 - window, side="right"))
        hi = int(np.searchsorted(stream.t, t0, side="right"))
        yield EventBin(
            stream.t[lo:hi],
            stream.x[lo:hi],
            stream.y[lo:hi],
            stream.p[lo:hi],
            t0,
            stream.geometry,
        )


@dataclass(frozen=True)
class HandParams:
    """Synthetic arm-plus-palm silhouette whose narrowest row is the wrist.

    The silhouette is an arm rising from the bottom edge, tapering toward
    the wrist row, topped by a palm bulge. Per-row event counts are
    allocated deterministically (proportional to row width), so two seeds
    produce identical row-occupancy histograms; only x positions and
    timestamps are randomized.
    """

    geometry: SensorGeometry = DEFAULT_GEOMETRY
    wrist_row: int = 180
    center_x: int = 173
    wrist_half_width: int = 12
    palm_half_width: int = 34
    palm_height: int = 70
    arm_taper: float = 0.12
    arm_max_half_width: int = 24
    drift_x: float = 0.0
    count: int = 4000
    window_us: int = 100_000
    t0: int = 1_000_000
    noise_fraction: float = 0.02


def _silhouette_half_widths(params: HandParams):
    """Half-width per row, rows ordered top (palm) to bottom (arm).

    The palm heel flares several pixels immediately above the wrist, the
    arm tapers gently below it; the wrist row is the unique narrowest row.
    """
    g = params.geometry
    hw_w = params.wrist_half_width
    rows, widths = [], []
    top = params.wrist_row - params.palm_height
    for yy in range(top, params.wrist_row):
        u = (params.wrist_row - yy) / params.palm_height
        bulge = (params.palm_half_width - hw_w - 4) * math.sin(math.pi * u) ** 0.7
        rows.append(yy)
        widths.append(hw_w + 4 + max(0.0, bulge))
    rows.append(params.wrist_row)
    widths.append(float(hw_w))
    for yy in range(params.wrist_row + 1, g.height):
        hw = hw_w + 1 + params.arm_taper * (yy - params.wrist_row)
        rows.append(yy)
        widths.append(min(float(params.arm_max_half_width), hw))
    return np.array(rows), np.array(widths)


def synth_hand_events(params: HandParams, seed: int):
    """Deterministic synthetic event bin plus ground-truth wrist location.

    Returns (EventBin, WristLoc or None). count=0 yields an empty bin with
    absent ground truth.
    """
    from .roi import WristLoc  # local import; roi depends on this module

    g = params.geometry
    if params.count < 0:
        raise ParameterError("count must be non-negative")
    if params.count == 0:
        empty = np.array([], dtype=np.int64)
        return (
            EventBin(empty, empty, empty, np.array([], dtype=np.uint8), params.t0, g),
            None,
        )
    rows, widths = _silhouette_half_widths(params)
    max_hw = widths.max()
    half_drift = abs(params.drift_x) / 2
    if (
        params.center_x - max_hw - half_drift < 0
        or params.center_x + max_hw + half_drift >= g.width
        or rows[0] < 0
        or params.wrist_row >= g.height - 1
    ):
        raise ParameterError("silhouette exceeds sensor geometry")

    n_noise = int(round(params.count * params.noise_fraction))
    n_body = params.count - n_noise

    # largest-remainder allocation: per-row counts depend only on params;
    # the +10 floor keeps narrow rows dense enough for crisp boundaries
    weight_per_row = 2 * widths + 1 + 10
    quota = weight_per_row / weight_per_row.sum() * n_body
    counts = np.floor(quota).astype(np.int64)
    remainder = n_body - counts.sum()
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[:remainder]] += 1

    rng = np.random.default_rng(seed)
    ys = np.repeat(rows, counts)
    hw = np.repeat(widths, counts)
    n = ys.size
    # the current contour fired most recently: the first events of each row
    # form a 3 px thick band at both silhouette edges with ages in the
    # newest fifth of the window, the rest trail through the interior with
    # uniform ages (motion history)
    offsets_in_row = np.concatenate([np.arange(c) for c in counts])
    edge = offsets_in_row < 12
    ts = params.t0 - rng.integers(0, params.window_us, size=n, dtype=np.int64)
    ts[edge] = params.t0 - rng.integers(
        0, max(params.window_us // 5, 1), size=int(edge.sum()), dtype=np.int64
    )
    phase = (ts - (params.t0 - params.window_us)) / params.window_us - 0.5
    cx = params.center_x + params.drift_x * phase
    u = np.sin(np.pi * (rng.random(n) - 0.5))
    side = np.where(offsets_in_row % 2 == 0, 1.0, -1.0)
    depth = (offsets_in_row // 2) % 3
    u[edge] = (side * (1.0 - depth / np.maximum(hw, 1.0)))[edge]
    xs = np.rint(cx + u * hw).astype(np.int64)
    np.clip(xs, 0, g.width - 1, out=xs)
    ps = (rng.random(n) < 0.5).astype(np.uint8)

    if n_noise:
        ts = np.concatenate(
            [ts, params.t0 - rng.integers(0, params.window_us, n_noise, dtype=np.int64)]
        )
        xs = np.concatenate([xs, rng.integers(0, g.width, n_noise, dtype=np.int64)])
        ys = np.concatenate([ys, rng.integers(0, g.height, n_noise, dtype=np.int64)])
        ps = np.concatenate([ps, (rng.random(n_noise) < 0.5).astype(np.uint8)])

    order = np.argsort(ts, kind="stable")
    truth = WristLoc(
        y=params.wrist_row,
        x_left=params.center_x - params.wrist_half_width,
        x_right=params.center_x + params.wrist_half_width,
    )
    return (
        EventBin(ts[order], xs[order], ys[order], ps[order], params.t0, g),
        truth,
    )
