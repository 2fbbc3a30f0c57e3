"""Inverse camera response: calibration from an exposure stack and exposure normalization.

The inverse response ``G`` maps a normalized pixel intensity to log
exposure (up to an additive constant). It is a tenth-order polynomial fitted
so that ``G(I_ij) - ln T_j`` is the same for every exposure ``j`` of a pixel
``i``. Normalizing a frame from exposure ``T`` to ``T_tar`` solves
``G(I') = G(I) + ln T_tar - ln T`` for ``I'`` by bisection.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Legendre, Polynomial

from .errors import CalibrationError, ConfigError, FormatError, InvariantViolation

CRF_DEGREE = 10
MONOTONE_GRID = 1024
_BISECT_ITERS = 64
_DENSITY_BINS = 32


@dataclass(frozen=True)
class CrfCurve:
    coefficients: tuple  # highest order first
    domain: tuple = (0.0, 1.0)
    residual_rms: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.coefficients) != CRF_DEGREE + 1:
            raise ConfigError(f"CRF needs {CRF_DEGREE + 1} coefficients, got {len(self.coefficients)}")
        lo, hi = self.domain
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError(f"bad CRF domain {self.domain}")

    def forward(self, intensity):
        return np.polyval(self.coefficients, intensity)

    __call__ = forward

    def is_monotone(self):
        g = self.forward(np.linspace(*self.domain, MONOTONE_GRID))
        return bool(np.all(np.diff(g) > 0))

    def validate(self):
        if not self.is_monotone():
            raise InvariantViolation("inverse CRF is not strictly increasing on its domain")
        return self

    def inverse(self, log_exposure):
        """Monotone bisection on the calibrated domain; saturates at its ends."""
        y = np.asarray(log_exposure, dtype=np.float64)
        lo = np.full(y.shape, self.domain[0])
        hi = np.full(y.shape, self.domain[1])
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            below = self.forward(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


class LogResponse:
    """Exact inverse response of a linear sensor, ``G = ln``."""

    domain = (0.0, 1.0)

    def forward(self, intensity):
        with np.errstate(divide="ignore"):
            return np.log(intensity)

    __call__ = forward

    def inverse(self, log_exposure):
        return np.exp(log_exposure)

    def validate(self):
        return self


def _dedupe(stack):
    kept = []
    for image, exposure in stack:
        image = np.asarray(image, dtype=np.float64)
        if any(e == exposure and np.array_equal(im, image) for im, e in kept):
            continue
        kept.append((image, exposure))
    return kept


def calibrate_crf(stack, lo=0.05, hi=0.95, max_pixels=4000):
    """Fit the inverse CRF from ``(image, exposure)`` pairs of one static scene.

    Only observations inside ``[lo, hi]`` are used. Returns a ``CrfCurve``
    whose ``residual_rms`` is the RMS of ``G(I_ij) - ln T_j - ln E_i`` over
    the fitted observations, with ``ln E_i`` the per-pixel least-squares
    log irradiance.
    """
    stack = _dedupe(stack)
    if len(stack) < 5:
        raise CalibrationError(f"need >= 5 distinct exposures, got {len(stack)}")
    exposures = np.array([e for _, e in stack], dtype=np.float64)
    if np.any(exposures <= 0):
        raise CalibrationError("exposures must be positive")
    if exposures.max() / exposures.min() < 16:
        raise CalibrationError("exposure stack must span at least a 16x ratio")
    shapes = {im.shape for im, _ in stack}
    if len(shapes) != 1:
        raise CalibrationError(f"stack images differ in shape: {shapes}")

    Z = np.stack([im.ravel() for im, _ in stack], axis=1)  # pixels x exposures
    valid = (Z >= lo) & (Z <= hi)
    usable = np.flatnonzero(valid.sum(axis=1) >= 2)
    if usable.size == 0:
        raise CalibrationError("no pixel is well exposed in two or more frames")
    if usable.size > max_pixels:
        usable = usable[np.linspace(0, usable.size - 1, max_pixels).astype(np.int64)]
    Z, valid = Z[usable], valid[usable]
    if np.unique(np.round(Z[valid], 12)).size <= CRF_DEGREE:
        raise CalibrationError("stack is degenerate: too few distinct intensities")

    rows, cols = np.nonzero(valid)
    z = Z[rows, cols]
    log_t = np.log(exposures)[cols]
    # Legendre basis on [0, 1] keeps the normal equations well conditioned
    basis = np.polynomial.legendre.legvander(2.0 * z - 1.0, CRF_DEGREE)
        # equalize weight across intensity so dense dark observations do not
    # dominate the fit; the curve is then close to a uniform-measure fit
    hist_bins = np.minimum(((z - lo) / (hi - lo) * _DENSITY_BINS).astype(np.int64), _DENSITY_BINS - 1)
    density = np.bincount(hist_bins, minlength=_DENSITY_BINS).astype(np.float64)
    w = 1.0 / density[hist_bins]
    w *= w.size / w.sum()

    def center(a):
        # weighted per-pixel mean eliminates ln E_i
        wa = w.reshape((-1,) + (1,) * (a.ndim - 1)) * a
        sums = np.zeros((Z.shape[0],) + a.shape[1:])
        np.add.at(sums, rows, wa)
        return a - (sums / wsum.reshape((-1,) + (1,) * (a.ndim - 1)))[rows]

    wsum = np.bincount(rows, weights=w, minlength=Z.shape[0])
    sw = np.sqrt(w)
    A = center(basis)[:, 1:]  # the constant term is absorbed by ln E_i
    b = center(log_t)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise CalibrationError("least-squares fit failed")
    resid = A @ coef - b
    rms = float(np.sqrt(np.mean(resid**2)))

    leg = Legendre(np.concatenate([[0.0], coef]), domain=[0.0, 1.0])
    poly = leg.convert(kind=Polynomial, domain=[0.0, 1.0], window=[0.0, 1.0])
    power = np.zeros(CRF_DEGREE + 1)
    power[: poly.coef.size] = poly.coef
    # anchor G(0.5) = 0; only differences of G matter
    power[0] -= np.polynomial.polynomial.polyval(0.5, power)
    domain = (float(max(lo, z.min())), float(min(hi, z.max())))
    curve = CrfCurve(tuple(power[::-1]), domain, rms)
    if not curve.is_monotone():
        raise CalibrationError("fitted inverse CRF is not monotone on the calibrated domain")
    return curve


def normalize_pixels(pixels, exposure, t_tar, crf=None):
    """Re-expose intensities from ``exposure`` to ``t_tar``.

    Without a CRF the sensor is treated as linear and values are scaled
    without clamping (float radiance path). With a CRF the result is clamped
    to ``[0, 1]``.
    """
    if not exposure > 0 or not t_tar > 0:
        raise ConfigError("exposures must be positive")
    pixels = np.asarray(pixels, dtype=np.float64)
    if crf is None:
        return pixels * (t_tar / exposure)
    crf.validate()
    lo, hi = crf.domain
    g = crf.forward(np.clip(pixels, lo, hi)) + np.log(t_tar) - np.log(exposure)
    return np.clip(crf.inverse(g), 0.0, 1.0)


def normalize_intensity(frame, crf, t_tar):
    """Frame re-exposed to ``t_tar``; timing metadata is kept unchanged."""
    return frame.replace_pixels(normalize_pixels(frame.pixels, frame.exposure, t_tar, crf))


def write_crf(curve, path):
    lines = [f"# domain {curve.domain[0]!r} {curve.domain[1]!r}"]
    lines += [repr(c) for c in curve.coefficients]
    Path(path).write_text("\n".join(lines) + "\n")


def read_crf(path):
    coefs = []
    domain = (0.0, 1.0)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 3 and parts[0] == "domain":
                domain = (float(parts[1]), float(parts[2]))
            continue
        try:
            coefs.append(float(line))
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not a number: {line!r}") from None
    if len(coefs) != CRF_DEGREE + 1:
        raise FormatError(f"{path}: expected {CRF_DEGREE + 1} coefficients, got {len(coefs)}")
    return CrfCurve(tuple(coefs), domain)
