"""Event-count motion measures: global (GEA) and pyramid (PEA) accumulation.

GEA is the number of events since the exposure opened. PEA bins events into
square patches of side ``w = min(H, W) // n`` for every scale ``n``, on two
grids offset by 0 and ``w // 2``, and reports the largest scale-weighted
patch count. The scale-1 term is the global count itself, so PEA never
reports less than GEA.
"""

from enum import Enum

import numpy as np

from .errors import ConfigError, ValidationError
from .events import EventSlice

DEFAULT_SCALES = (1, 2, 4)


class Mode(str, Enum):
    GEA = "gea"
    PEA = "pea"


def patch_size(width, height, n):
    return max(1, min(width, height) // n)


def patch_bin(x, y, s, w):
    return (x + s) // w, (y + s) // w


class MotionMeasureState:
    """Running counters for one exposure. Single writer; call ``reset`` per exposure."""

    def __init__(self, width, height, mode=Mode.GEA, scales=DEFAULT_SCALES, area_normalized=False):
        self.width = int(width)
        self.height = int(height)
        self.mode = Mode(mode)
        self.scales = tuple(int(n) for n in scales)
        if not self.scales or min(self.scales) < 1:
            raise ConfigError(f"scales must be positive integers, got {scales}")
        self.area_normalized = area_normalized
        self._layout = []  # (n, s, w, nbx, nby, start)
        start = 0
        for n in self.scales:
            w = patch_size(self.width, self.height, n)
            for s in (0, w // 2):
                nbx = (self.width - 1 + s) // w + 1
                nby = (self.height - 1 + s) // w + 1
                self._layout.append((n, s, w, nbx, nby, start))
                start += nbx * nby
        lay = np.array([row[1:] for row in self._layout], dtype=np.int64)
        self._s = lay[:, 0:1]
        self._w = lay[:, 1:2]
        self._nbx = lay[:, 2:3]
        self._start = lay[:, 4:5]
        self._starts_flat = lay[:, 4].copy()
        self._size = start
        self._factor = np.array(
            [n * n if area_normalized else n for (n, *_rest) in self._layout], dtype=np.int64
        )
        # per-pixel bin index in every grid, so ingestion is one gather
        yy, xx = np.divmod(np.arange(self.width * self.height, dtype=np.int64), self.width)
        self._pixel_bins = self._bin(xx, yy).reshape(-1, xx.size).T.astype(np.int32).copy()
        self.counts = np.zeros(self._size, dtype=np.int64)
        self.global_count = 0

    def reset(self):
        self.counts[:] = 0
        self.global_count = 0

    # -- ingestion ---------------------------------------------------------

    def ingest(self, events):
        """Dispatch on mode; accepts an EventSlice or an EventStream."""
        if self.mode is Mode.GEA:
            return gea_ingest(self, events)
        return pea_ingest(self, events)

    def _bin(self, x, y):
        bx = (x[None, :] + self._s) // self._w
        by = (y[None, :] + self._s) // self._w
        return (self._start + by * self._nbx + bx).ravel()

    # -- reads -------------------------------------------------------------

    def grid(self, n, offset):
        """Patch-count grid for scale ``n``; ``offset`` is 0 (aligned) or 1 (shifted)."""
        rows = [r for r in self._layout if r[0] == n]
        if not rows:
            raise KeyError(f"scale {n} not tracked")
        _, _, _, nbx, nby, start = rows[offset]
        return self.counts[start : start + nbx * nby].reshape(nby, nbx)

    def lea(self, n):
        """Scale-weighted largest patch count at scale ``n``."""
        if n == 1:
            return self.global_count
        maxima = np.maximum.reduceat(self.counts, self._starts_flat)
        sel = [i for i, row in enumerate(self._layout) if row[0] == n]
        if not sel:
            raise KeyError(f"scale {n} not tracked")
        return int(self._factor[sel[0]] * maxima[sel].max())

    def pea(self):
        best = self.global_count
        if self.counts.size:
            maxima = np.maximum.reduceat(self.counts, self._starts_flat) * self._factor
            best = max(best, int(maxima.max()))
        return best

    def measure(self):
        return self.global_count if self.mode is Mode.GEA else self.pea()

    def grid_rows(self):
        """Rows ``(scale, offset, bx, by, count)`` for the debug dump."""
        out = []
        for n, s, w, nbx, nby, start in self._layout:
            g = self.counts[start : start + nbx * nby].reshape(nby, nbx)
            for by in range(nby):
                for bx in range(nbx):
                    out.append((n, s, bx, by, int(g[by, bx])))
        return out

    def dump_csv(self, path):
        with open(path, "w", newline="\n") as f:
            f.write("scale,offset,bx,by,count\n")
            for row in self.grid_rows():
                f.write(",".join(str(v) for v in row) + "\n")


def _events_of(obj):
    return obj.events if isinstance(obj, EventSlice) else obj


def gea_ingest(state, events):
    """Add a slice's size to the global count. Never touches event payloads."""
    state.global_count += len(_events_of(events))
    return state.global_count


def pea_ingest(state, events):
    if state.mode is not Mode.PEA:
        raise ConfigError("pea_ingest requires a PEA-mode state")
    ev = _events_of(events)
    n = len(ev)
    if n == 0:
        return state.pea()
    x, y = ev.x, ev.y
    if x.min() < 0 or x.max() >= state.width or y.min() < 0 or y.max() >= state.height:
        oob = (x < 0) | (x >= state.width) | (y < 0) | (y >= state.height)
        i = int(np.flatnonzero(oob)[0])
        raise ValidationError(f"event {ev[i]} outside the {state.width}x{state.height} sensor")
    idx = state._pixel_bins[y.astype(np.int64) * state.width + x]
    state.counts += np.bincount(idx.ravel(), minlength=state._size)
    state.global_count += n
    return state.pea()


def measure(state):
    return state.measure()
