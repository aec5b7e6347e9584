import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from demoire import imgcore
from demoire.errors import TooSmall
from demoire.metrics import MetricReport, psnr, ssim


def reference_ssim(a, b):
    return structural_similarity(
        a, b, data_range=1.0, channel_axis=2, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )


def test_psnr_examples(rng):
    a = rng.random((8, 8, 3))
    assert psnr(a, a) == math.inf
    b = np.full((10, 10, 3), 0.5)
    c = b.copy()
    c[..., 0] += np.sqrt(0.03)  # MSE 0.01 over all channels
    assert psnr(c, b) == pytest.approx(20.0, abs=1e-9)
    x = np.full((4, 4, 3), 100.0)
    assert psnr(x + 16, x, max_val=255.0) == pytest.approx(24.0486, abs=1e-3)


def test_psnr_monotone_in_noise(rng):
    img = rng.random((32, 32, 3))
    noise = rng.uniform(-1, 1, img.shape)
    vals = [psnr(img + a * noise, img) for a in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_ssim_identical_and_negative(rng):
    img = 0.25 + 0.5 * imgcore.gaussian_blur(rng.random((48, 48, 3)), 1.5)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    val = ssim(img, 1 - img)
    assert val < 0.5
    assert val == pytest.approx(reference_ssim(img, 1 - img), abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_ssim_matches_reference(seed):
    r = np.random.default_rng(seed)
    a = imgcore.gaussian_blur(r.random((40, 36, 3)), 1.0)
    b = np.clip(a + 0.08 * r.standard_normal(a.shape), 0, 1)
    assert abs(ssim(a, b) - reference_ssim(a, b)) < 1e-3


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_symmetry_bounds_and_flip(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((16, 16, 3)), r.random((16, 16, 3))
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    fa, fb = imgcore.flip_horizontal(a), imgcore.flip_horizontal(b)
    assert ssim(fa, fb) == pytest.approx(s, abs=1e-12)
    assert psnr(fa, fb) == pytest.approx(psnr(a, b), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(TooSmall):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_report_roundtrip(rng):
    rep = MetricReport()
    a = rng.random((16, 16, 3))
    rep.add("same", a, a)
    rep.add("other", rng.random((16, 16, 3)), a)
    d = rep.to_dict()
    assert d["per_image"][0]["psnr_db"] == "inf"
    back = MetricReport.from_dict(d)
    assert back.ids == rep.ids and back.psnr_db == rep.psnr_db and back.ssim == rep.ssim
