"""Event-masked, exposure-weighted triplet fusion used as a classical denoiser.

For a frame ``I_0`` and its neighbours ``I_-1``, ``I_+1`` (all re-exposed to
a common target), the exposure-weighted average
``sum(T_k * I_k) / sum(T_k)`` is a low-noise estimate wherever the scene did
not move. Pixels that fired events between the neighbours are kept from
``I_0`` untouched.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .crf import normalize_pixels
from .errors import ShapeError, ValidationError

DEFAULT_DILATION = 1


@dataclass(eq=False)
class EventMask:
    width: int
    height: int
    bits: np.ndarray = field(repr=False)  # 1 = static, 0 = events fired

    @property
    def static_fraction(self):
        return float(self.bits.mean())


@dataclass(eq=False)
class FrameTriplet:
    prev: object
    cur: object
    next: object
    target_exposure: float

    def __post_init__(self):
        if self.prev.t_end != self.cur.t_start or self.cur.t_end != self.next.t_start:
            raise ValidationError(
                "triplet frames are not adjacent: "
                f"[{self.prev.t_start},{self.prev.t_end}) [{self.cur.t_start},{self.cur.t_end}) "
                f"[{self.next.t_start},{self.next.t_end})"
            )

    @property
    def frames(self):
        return (self.prev, self.cur, self.next)

    @property
    def span(self):
        return (self.prev.t_start, self.next.t_end)


def make_triplet(prev, cur, nxt, crf=None):
    """Re-expose three adjacent frames to the longest of their exposures."""
    t_tar = max(prev.exposure, cur.exposure, nxt.exposure)
    normed = [f.replace_pixels(normalize_pixels(f.pixels, f.exposure, t_tar, crf)) for f in (prev, cur, nxt)]
    return FrameTriplet(*normed, target_exposure=t_tar)


def build_mask(stream, window, dilation=DEFAULT_DILATION):
    t0, t1 = window
    fired = np.zeros((stream.height, stream.width), dtype=bool)
    w = stream.window(t0, t1)
    fired[w.y, w.x] = True
    if dilation > 0:
        fired = maximum_filter(fired, size=2 * dilation + 1, mode="constant", cval=False)
    return EventMask(stream.width, stream.height, (~fired).astype(np.uint8))


def _check_shapes(triplet, mask=None):
    shapes = {f.pixels.shape for f in triplet.frames}
    if len(shapes) != 1:
        raise ShapeError(f"triplet frames differ in shape: {sorted(shapes)}")
    if mask is not None and mask.bits.shape != triplet.cur.pixels.shape:
        raise ShapeError(f"mask shape {mask.bits.shape} != frame shape {triplet.cur.pixels.shape}")


def weighted_fuse(triplet):
    _check_shapes(triplet)
    weights = [float(f.exposure) for f in triplet.frames]
    if min(weights) <= 0:
        raise ValidationError("exposures must be positive")
    acc = sum(w * f.pixels for w, f in zip(weights, triplet.frames))
    return acc / sum(weights)


def masked_fuse(triplet, mask):
    _check_shapes(triplet, mask)
    fused = weighted_fuse(triplet)
    return np.where(mask.bits.astype(bool), fused, triplet.cur.pixels)


def fuse_sequence(frames, stream, crf=None, dilation=DEFAULT_DILATION, masked=True):
    """Denoise every interior frame of an exposure sequence.

    The first and last frames lack a neighbour and pass through unchanged.
    Outputs keep each centre frame's timing and exposure scale.
    """
    out = list(frames[:1])
    for k in range(1, len(frames) - 1):
        prev, cur, nxt = frames[k - 1], frames[k], frames[k + 1]
        tri = make_triplet(prev, cur, nxt, crf)
        if masked:
            fused = masked_fuse(tri, build_mask(stream, tri.span, dilation))
        else:
            fused = weighted_fuse(tri)
        out.append(cur.replace_pixels(normalize_pixels(fused, tri.target_exposure, cur.exposure, crf)))
    if len(frames) > 1:
        out.append(frames[-1])
    return out
