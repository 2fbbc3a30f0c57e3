"""PSNR / SSIM and exposure statistics."""

import csv
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import EmptyInputError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5

REPORT_FIELDS = ["scene", "method", "R", "psnr_db", "ssim", "mean_exposure_us"]


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    mse: float


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(err, peak=1.0):
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / err)


def psnr(a, b, peak=1.0):
    """PSNR in dB; identical inputs give ``math.inf``. Colour planes are averaged."""
    a, b = _pair(a, b)
    if peak <= 0:
        raise ValueError("peak must be positive")
    if a.ndim == 3:
        return float(np.mean([psnr(a[..., c], b[..., c], peak) for c in range(a.shape[2])]))
    return psnr_from_mse(float(np.mean((a - b) ** 2)), peak)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    out = correlate1d(img, g, axis=0, mode="reflect")
    out = correlate1d(out, g, axis=1, mode="reflect")
    pad = (g.size - 1) // 2
    return out[pad : img.shape[0] - pad, pad : img.shape[1] - pad]


def ssim(a, b, window=SSIM_WINDOW, k1=0.01, k2=0.03, peak=1.0):
    """Mean SSIM with a Gaussian window (sigma 1.5), valid region only."""
    a, b = _pair(a, b)
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], window, k1, k2, peak) for c in range(a.shape[2])]))
    if min(a.shape) < window:
        raise ShapeError(f"frame {a.shape} smaller than the {window}x{window} window")
    g = gaussian_window(window)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quality_report(estimate, reference, peak=1.0):
    err = mse(estimate, reference)
    return QualityReport(psnr_from_mse(err, peak), ssim(estimate, reference, peak=peak), err)


def exposure_stats(frames):
    """Mean/min/max exposure (microseconds) and a histogram of closure reasons.

    Accepts captured frames or sidecar rows (dicts with ``exposure_us`` and
    ``closure``).
    """
    frames = list(frames)
    if not frames:
        raise EmptyInputError("exposure_stats needs at least one frame")
    if isinstance(frames[0], dict):
        exps = [float(f["exposure_us"]) for f in frames]
        reasons = [getattr(f["closure"], "value", f["closure"]) for f in frames]
    else:
        exps = [float(f.exposure) for f in frames]
        reasons = [getattr(f.closure, "value", f.closure) for f in frames]
    return {
        "mean": sum(exps) / len(exps),
        "min": min(exps),
        "max": max(exps),
        "count": len(exps),
        "closures": dict(Counter(reasons)),
    }


def format_float(v, digits=6):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}f}"


def write_report(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            w.writerow(
                [
                    r["scene"],
                    r["method"],
                    r["R"],
                    format_float(r["psnr_db"], 4),
                    format_float(r["ssim"], 6),
                    format_float(r["mean_exposure_us"], 1),
                ]
            )
