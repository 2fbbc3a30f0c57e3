"""PFM / PGM readers and writers for single-channel frames.

PFM is written little-endian (negative scale); rows are stored bottom-to-top
as the format requires. PGM is binary P5 with maxval 255.
"""

import re
from pathlib import Path

import numpy as np

from .errors import FormatError


def write_pfm(path, image, scale=1.0):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2:
        raise FormatError(f"PFM writer expects a 2-D array, got shape {image.shape}")
    h, w = image.shape
    header = f"Pf\n{w} {h}\n{-abs(scale):g}\n".encode("ascii")
    data = np.flipud(image).astype("<f4").tobytes()
    Path(path).write_bytes(header + data)


def _header_tokens(raw, count, path, pattern=rb"\s*(\S+)"):
    pat = re.compile(pattern)
    tokens = []
    pos = 0
    for _ in range(count):
        m = pat.match(raw, pos)
        if m is None:
            raise FormatError(f"{path}: truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the payload
    return tokens, pos + 1


def read_pfm(path):
    raw = Path(path).read_bytes()
    tokens, offset = _header_tokens(raw, 4, path)
    if tokens[0] == b"PF":
        channels = 3
    elif tokens[0] == b"Pf":
        channels = 1
    else:
        raise FormatError(f"{path}: not a PFM file (magic {tokens[0]!r})")
    w, h = int(tokens[1]), int(tokens[2])
    endian = "<" if float(tokens[3]) < 0 else ">"
    n = w * h * channels
    if len(raw) - offset < 4 * n:
        raise FormatError(f"{path}: expected {n} floats")
    data = np.frombuffer(raw, dtype=endian + "f4", count=n, offset=offset)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def quantize(image, peak=1.0):
    """Map float radiance in ``[0, peak]`` to 8-bit, clipping out-of-range values."""
    q = np.rint(np.clip(np.asarray(image, dtype=np.float64) / peak, 0.0, 1.0) * 255.0)
    return q.astype(np.uint8)


def write_pgm(path, image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = quantize(image)
    if image.ndim != 2:
        raise FormatError(f"PGM writer expects a 2-D array, got shape {image.shape}")
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, offset = _header_tokens(raw, 4, path, rb"(?:\s|#[^\n]*\n)*(\S+)")
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if len(raw) - offset < w * h:
        raise FormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=offset)
    return data.reshape(h, w).copy()
