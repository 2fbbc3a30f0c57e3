"""Event-camera simulation, event streams, fixed-count slicing and file I/O.

Streams are stored column-wise in numpy arrays (``t`` in microseconds as
int64, ``x``/``y`` as int32, ``p`` as int8). Slices are views, never copies.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, FormatError, ParseError, ValidationError

DEFAULT_CONTRAST = 0.15
DEFAULT_EPSILON = 1e-3
DEFAULT_SLICE_COUNT = 100
DEFAULT_RESOLUTION = (640, 480)

CSV_HEADER = "t_us,x,y,p"
BINARY_MAGIC = b"EVT1"
BINARY_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")]
)
assert BINARY_RECORD.itemsize == 16


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class ContrastThreshold:
    c: float = DEFAULT_CONTRAST
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"contrast threshold must be positive, got {self.c}")
        if not self.epsilon > 0:
            raise ConfigError(f"log floor epsilon must be positive, got {self.epsilon}")


@dataclass(eq=False)
class EventStream:
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    width: int = DEFAULT_RESOLUTION[0]
    height: int = DEFAULT_RESOLUTION[1]

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int32)
        self.y = np.asarray(self.y, dtype=np.int32)
        self.p = np.asarray(self.p, dtype=np.int8)
        n = self.t.shape[0]
        if not (self.x.shape[0] == self.y.shape[0] == self.p.shape[0] == n):
            raise ValidationError("event columns have different lengths")

    @classmethod
    def empty(cls, width, height):
        z = np.zeros(0)
        return cls(z, z, z, z, width, height)

    @classmethod
    def from_events(cls, events, width, height):
        events = list(events)
        if not events:
            return cls.empty(width, height)
        x, y, t, p = zip(*events)
        return cls(t, x, y, p, width, height)

    def validate(self):
        """Raise ValidationError on the first offending event."""
        bad = np.flatnonzero(np.diff(self.t) < 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise ValidationError(f"event {i} out of order: t={self.t[i]} < {self.t[i - 1]}")
        oob = (self.x < 0) | (self.x >= self.width) | (self.y < 0) | (self.y >= self.height)
        oob |= (self.p != 1) & (self.p != -1)
        oob |= self.t < 0
        if oob.any():
            i = int(np.flatnonzero(oob)[0])
            raise ValidationError(f"event {i} invalid: {self[i]} for {self.width}x{self.height}")
        return self

    def __len__(self):
        return int(self.t.shape[0])

    def __getitem__(self, key):
        if isinstance(key, slice):
            return EventStream(self.t[key], self.x[key], self.y[key], self.p[key], self.width, self.height)
        return Event(int(self.x[key]), int(self.y[key]), int(self.t[key]), int(self.p[key]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def window(self, t0, t1):
        """Events with ``t0 <= t <= t1`` as a view."""
        lo = int(np.searchsorted(self.t, t0, side="left"))
        hi = int(np.searchsorted(self.t, t1, side="right"))
        return self[lo:hi]

    def tobytes(self):
        return b"".join(a.tobytes() for a in (self.t, self.x, self.y, self.p))

    @property
    def duration(self):
        return int(self.t[-1] - self.t[0]) if len(self) else 0


def concat(streams, width=None, height=None):
    streams = list(streams)
    if not streams:
        raise ValueError("concat needs at least one stream (or explicit dims)")
    width = streams[0].width if width is None else width
    height = streams[0].height if height is None else height
    return EventStream(
        np.concatenate([s.t for s in streams]),
        np.concatenate([s.x for s in streams]),
        np.concatenate([s.y for s in streams]),
        np.concatenate([s.p for s in streams]),
        width,
        height,
    )


@dataclass(eq=False)
class EventSlice:
    events: EventStream
    count: int

    def __len__(self):
        return len(self.events)

    @property
    def arrival(self):
        """A slice is delivered when its last event has been recorded."""
        return int(self.events.t[-1])


def slice_stream(stream, count=DEFAULT_SLICE_COUNT):
    if count < 1:
        raise ConfigError(f"slice count must be >= 1, got {count}")
    return [EventSlice(stream[i : i + count], count) for i in range(0, len(stream), count)]


class EventGenerator:
    """Per-pixel threshold-crossing state for an ideal DVS pixel array.

    Each pixel keeps a reference log intensity. When the sampled log
    intensity departs from it by ``k`` whole thresholds, ``k`` events are
    emitted with timestamps placed by linear interpolation between the two
    samples, and the reference advances by ``k * c`` in the direction of
    change.
    """

    def __init__(self, log_frame, c):
        self.c = float(c)
        self.reference = np.array(log_frame, dtype=np.float64).ravel()
        self.previous = self.reference.copy()
        self.shape = np.shape(log_frame)

    def step(self, log_frame, t_prev, t_new):
        cur = np.asarray(log_frame, dtype=np.float64).ravel()
        d = cur - self.reference
        # guard against 3.0000000001 -> 2 when the change is an exact multiple of c
        k = np.floor(np.abs(d) / self.c + 1e-9).astype(np.int64)
        pix = np.flatnonzero(k > 0)
        if pix.size == 0:
            self.previous = cur
            return _empty_arrays()
        kk = k[pix]
        pol = np.sign(d[pix]).astype(np.int8)
        rep = np.repeat(pix, kk)
        rep_pol = np.repeat(pol, kk)
        starts = np.cumsum(kk) - kk
        j = np.arange(rep.size) - np.repeat(starts, kk) + 1
        level = self.reference[rep] + j * self.c * rep_pol
        a = self.previous[rep]
        b = cur[rep]
        frac = np.clip((level - a) / (b - a), 0.0, 1.0)
        t = np.rint(t_prev + frac * (t_new - t_prev)).astype(np.int64)
        self.reference[pix] += kk * self.c * pol
        self.previous = cur
        width = self.shape[-1] if len(self.shape) > 1 else 1
        return t, (rep % width).astype(np.int32), (rep // width).astype(np.int32), rep_pol


def _empty_arrays():
    return (
        np.zeros(0, np.int64),
        np.zeros(0, np.int32),
        np.zeros(0, np.int32),
        np.zeros(0, np.int8),
    )


def _sorted_stream(parts, width, height):
    if parts:
        t, x, y, p = (np.concatenate(col) for col in zip(*parts))
    else:
        t, x, y, p = _empty_arrays()
    # timestamp first, then row-major pixel index
    order = np.lexsort((y.astype(np.int64) * width + x, t))
    return EventStream(t[order], x[order], y[order], p[order], width, height)


def simulate_events(scene, thresh=ContrastThreshold(), dt=250, background_rate_hz=0.0, seed=0):
    """Simulate an ideal event camera watching ``scene``.

    ``dt`` is the latent sampling step in microseconds and must divide the
    scene duration. ``background_rate_hz`` adds Poisson background activity
    per pixel (off by default).
    """
    if dt <= 0:
        raise ConfigError(f"simulation step must be positive, got {dt}")
    if scene.duration % dt:
        raise ConfigError(f"step {dt} does not divide scene duration {scene.duration}")
    steps = scene.duration // dt

    def log_frame(t):
        return np.log(scene.render(t) + thresh.epsilon)

    gen = EventGenerator(log_frame(0), thresh.c)
    parts = []
    for i in range(1, steps + 1):
        t0, t1 = (i - 1) * dt, i * dt
        if scene.is_static_between(t0, t1):
            continue
        out = gen.step(log_frame(t1), t0, t1)
        if out[0].size:
            parts.append(out)
    if background_rate_hz > 0:
        parts.append(_background_activity(scene, background_rate_hz, seed))
    return _sorted_stream(parts, scene.width, scene.height)


def _background_activity(scene, rate_hz, seed):
    rng = np.random.default_rng([seed, 0xBAC6])
    npix = scene.width * scene.height
    n = int(rng.poisson(rate_hz * npix * scene.duration / 1e6))
    t = rng.integers(0, scene.duration + 1, n).astype(np.int64)
    idx = rng.integers(0, npix, n)
    p = rng.choice(np.array([-1, 1], np.int8), n)
    return t, (idx % scene.width).astype(np.int32), (idx // scene.width).astype(np.int32), p


def accumulate_delta(stream, pixel, window, thresh=ContrastThreshold()):
    """Log-intensity increment at ``pixel=(x, y)`` from events in ``[t0, t1]``."""
    t0, t1 = window
    if t0 > t1:
        raise ConfigError(f"empty window [{t0}, {t1}]")
    w = stream.window(t0, t1)
    x, y = pixel
    sel = (w.x == x) & (w.y == y)
    return float(w.p[sel].astype(np.int64).sum()) * thresh.c


# --- file I/O ---------------------------------------------------------------


def write_events(stream, path, fmt=None):
    path = Path(path)
    fmt = fmt or _format_for(path)
    if fmt == "csv":
        _write_csv(stream, path)
    else:
        _write_binary(stream, path)


def read_events(path, width=None, height=None, fmt=None):
    """Read a CSV or binary event file.

    CSV files carry no sensor size; pass ``width``/``height`` or they are
    inferred as ``max + 1`` of the coordinates.
    """
    path = Path(path)
    fmt = fmt or _format_for(path)
    if fmt == "csv":
        return _read_csv(path, width, height)
    return _read_binary(path, width, height)


def _format_for(path):
    return "csv" if path.suffix.lower() == ".csv" else "binary"


def _write_csv(stream, path):
    cols = np.column_stack([stream.t, stream.x, stream.y, stream.p.astype(np.int64)])
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        if len(stream):
            np.savetxt(f, cols, fmt="%d", delimiter=",", newline="\n")


def _parse_rows(lines):
    """Line-by-line parser used to pinpoint the first malformed row."""
    out = []
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}: {line!r}", lineno)
        try:
            out.append([int(v) for v in fields])
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", lineno) from None
    return np.array(out, dtype=np.int64).reshape(-1, 4)


def _read_csv(path, width, height):
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ParseError(f"missing header {CSV_HEADER!r}", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    try:
        rows = np.array([ln.split(",") for ln in body], dtype=np.int64).reshape(-1, 4)
    except ValueError:
        rows = _parse_rows(body)
    return _stream_from_columns(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], width, height, csv_lines=True)


def _stream_from_columns(t, x, y, p, width, height, csv_lines=False):
    def where(i):
        return f"line {i + 2}" if csv_lines else f"record {i}"

    bad_p = np.flatnonzero((p != 1) & (p != -1))
    if bad_p.size:
        raise ParseError(f"{where(int(bad_p[0]))}: polarity must be -1 or 1, got {p[bad_p[0]]}")
    bad_xy = np.flatnonzero((x < 0) | (y < 0) | (t < 0))
    if bad_xy.size:
        raise ParseError(f"{where(int(bad_xy[0]))}: negative coordinate or timestamp")
    if width is None:
        width = int(x.max()) + 1 if x.size else 1
    if height is None:
        height = int(y.max()) + 1 if y.size else 1
    back = np.flatnonzero(np.diff(t) < 0)
    if back.size:
        i = int(back[0]) + 1
        raise ValidationError(f"{where(i)}: timestamp {t[i]} precedes {t[i - 1]}")
    stream = EventStream(t, x, y, p, width, height)
    return stream.validate()


def _write_binary(stream, path):
    if len(stream) and (stream.x.max(initial=0) > 0xFFFF or stream.y.max(initial=0) > 0xFFFF):
        raise FormatError("coordinates exceed the 16-bit binary record")
    rec = np.zeros(len(stream), dtype=BINARY_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    header = BINARY_MAGIC + struct.pack("<IIQ", stream.width, stream.height, len(stream))
    with open(path, "wb") as f:
        f.write(header)
        f.write(rec.tobytes())


def _read_binary(path, width=None, height=None):
    raw = path.read_bytes()
    if raw[:4] != BINARY_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 20:
        raise FormatError(f"{path}: truncated header")
    w, h, count = struct.unpack("<IIQ", raw[4:20])
    if len(raw) != 20 + count * BINARY_RECORD.itemsize:
        raise FormatError(f"{path}: expected {count} records, file size {len(raw)}")
    rec = np.frombuffer(raw, dtype=BINARY_RECORD, count=count, offset=20)
    return _stream_from_columns(
        rec["t"].astype(np.int64),
        rec["x"].astype(np.int64),
        rec["y"].astype(np.int64),
        rec["p"].astype(np.int64),
        w if width is None else width,
        h if height is None else height,
    )
