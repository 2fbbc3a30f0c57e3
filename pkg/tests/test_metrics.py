import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neuroshutter.errors import EmptyInputError, ShapeError
from neuroshutter.metrics import exposure_stats, mse, psnr, quality_report, ssim, write_report
from neuroshutter.shutter import CapturedFrame, Closure, read_sidecar, write_sidecar
from oracles import two_pass_mse

unit = st.floats(0, 1)


def test_psnr_examples():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a) == math.inf
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0)


@given(arrays(np.float64, (6, 7), elements=unit), arrays(np.float64, (6, 7), elements=unit))
def test_mse_matches_two_pass_oracle(a, b):
    assert mse(a, b) == pytest.approx(two_pass_mse(a, b), abs=1e-9)
    assert psnr(a, b) == psnr(b, a)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(3)
    ref = rng.random((64, 64))
    z = rng.standard_normal(ref.shape)
    values = [psnr(ref + s * z, ref) for s in (0.01, 0.02, 0.04)]
    assert values[0] > values[1] > values[2]


def test_scaling_with_peak():
    rng = np.random.default_rng(4)
    a, b = rng.random((20, 20)), rng.random((20, 20))
    assert psnr(3 * a, 3 * b, peak=3) == pytest.approx(psnr(a, b))
    assert ssim(3 * a, 3 * b, peak=3) == pytest.approx(ssim(a, b))


def test_ssim_identity():
    a = np.random.default_rng(5).random((16, 16))
    assert ssim(a, a) == 1.0


def test_ssim_checkerboard_anticorrelated():
    a = (np.indices((11, 11)).sum(axis=0) % 2).astype(float)
    assert ssim(a, 1 - a) < 0


@pytest.mark.parametrize("a,b", [(0.2, 0.5), (0.9, 0.1), (0.4, 0.4)])
def test_ssim_constant_closed_form(a, b):
    c1, c2 = 0.01**2, 0.03**2
    expected = (2 * a * b + c1) * c2 / ((a * a + b * b + c1) * c2)
    assert ssim(np.full((12, 12), a), np.full((12, 12), b)) == pytest.approx(expected, rel=1e-9)


def test_ssim_matches_skimage():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(6)
    a = rng.random((40, 50))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_shape_errors():
    with pytest.raises(ShapeError):
        psnr(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_colour_planes_are_averaged():
    rng = np.random.default_rng(8)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    assert psnr(a, b) == pytest.approx(np.mean([psnr(a[..., c], b[..., c]) for c in range(3)]))


def test_quality_report():
    a = np.random.default_rng(9).random((16, 16))
    r = quality_report(a, a)
    assert r.psnr == math.inf and r.ssim == 1.0 and r.mse == 0.0


def frames_of(exposures, closures=None):
    t = 0
    out = []
    for k, e in enumerate(exposures):
        c = closures[k] if closures else Closure.MAX_EXPOSURE
        out.append(CapturedFrame(np.zeros((2, 2)), t, t + e, c, 0))
        t += e
    return out


def test_exposure_stats():
    s = exposure_stats(frames_of([50_000] * 4))
    assert s["mean"] == s["min"] == s["max"] == 50_000
    with pytest.raises(EmptyInputError):
        exposure_stats([])


@given(st.lists(st.tuples(st.integers(1, 10**6), st.sampled_from(list(Closure))), min_size=1, max_size=30))
def test_stats_from_sidecar(tmp_path_factory, items):
    exps, closures = zip(*items)
    frames = frames_of(exps, closures)
    path = tmp_path_factory.mktemp("side") / "s.csv"
    write_sidecar(frames, path)
    rows = read_sidecar(path)
    s = exposure_stats(rows)
    assert s["mean"] == pytest.approx(sum(r["exposure_us"] for r in rows) / len(rows))
    assert sum(s["closures"].values()) == s["count"] == len(frames)
    assert exposure_stats(frames)["mean"] == pytest.approx(s["mean"])


def test_report_csv(tmp_path):
    rows = [{"scene": "s", "method": "NSC_g", "R": 5, "psnr_db": math.inf, "ssim": 1.0, "mean_exposure_us": 12.5}]
    write_report(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "scene,method,R,psnr_db,ssim,mean_exposure_us\ns,NSC_g,5,inf,1.000000,12.5\n"
