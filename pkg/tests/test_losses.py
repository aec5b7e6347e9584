import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from demoire import imgcore, losses
from demoire.errors import DimensionMismatch

small_imgs = arrays(np.float64, (5, 6, 3), elements=st.floats(0, 1))


def _scalar_l1(a, b):
    s, n = 0.0, 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            for c in range(a.shape[2]):
                s += abs(a[y, x, c] - b[y, x, c])
                n += 1
    return s / n


def _scalar_self(mid):
    gr = gb = 0.0
    h, w = mid.shape[:2]
    for y in range(h):
        for x in range(w):
            r, g, b = mid[y, x]
            gr += abs(g - r)
            gb += abs(g - b)
    gr /= h * w
    gb /= h * w
    return max(0.0, gr - gb) / 2.0


def test_l1_examples(rng):
    a = rng.random((8, 8, 3)) * 0.5
    assert losses.l1_loss(a, a) == 0.0
    assert losses.l1_loss(a, a + 0.25) == pytest.approx(0.25, abs=1e-12)
    b = rng.random((8, 8, 3))
    assert abs(losses.l1_loss(a, b) - _scalar_l1(a, b)) < 1e-7


def test_l1_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        losses.l1_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


@given(small_imgs, small_imgs, small_imgs)
@settings(max_examples=50, deadline=None)
def test_l1_triangle(a, b, c):
    assert losses.l1_loss(a, c) <= losses.l1_loss(a, b) + losses.l1_loss(b, c) + 1e-12


def _const(r, g, b):
    img = np.empty((4, 4, 3))
    img[...] = (r, g, b)
    return img


def test_self_supervised_examples():
    assert losses.self_supervised_loss(_const(0.3, 0.3, 0.3)) == 0.0
    assert losses.self_supervised_loss(_const(0.55, 0.5, 0.53)) == pytest.approx(0.01, abs=1e-12)
    assert losses.self_supervised_loss(_const(0.53, 0.5, 0.55)) == 0.0


def test_symmetric_variant():
    assert losses.self_supervised_loss(_const(0.53, 0.5, 0.55), symmetric=True) == pytest.approx(0.04, abs=1e-12)


@given(small_imgs)
@settings(max_examples=100, deadline=None)
def test_self_supervised_oracle(img):
    assert abs(losses.self_supervised_loss(img) - _scalar_self(img)) < 1e-7


@given(small_imgs, st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_self_supervised_permutation_invariant(img, seed):
    flat = img.reshape(-1, 3)
    perm = np.random.default_rng(seed).permutation(len(flat))
    shuffled = flat[perm].reshape(img.shape)
    assert losses.self_supervised_loss(shuffled) == pytest.approx(losses.self_supervised_loss(img), abs=1e-12)


@given(small_imgs)
@settings(max_examples=50, deadline=None)
def test_self_supervised_zero_when_red_closer(img):
    gr, gb = losses.channel_gaps(img)
    val = losses.self_supervised_loss(img)
    assert val >= 0.0
    if gr <= gb:
        assert val == 0.0


# ---------------------------------------------------------------- Canny


def _step(h=32, w=32, c=16):
    img = np.zeros((h, w, 3))
    img[:, c:] = 1.0
    return img


def test_canny_constant_is_empty():
    assert not losses.canny(np.full((20, 20, 3), 0.4)).any()


def test_canny_step_single_column():
    edges = losses.canny(_step())
    cols = np.flatnonzero(edges.any(axis=0))
    assert len(cols) == 1 and cols[0] in (15, 16, 17)
    assert edges[:, cols[0]].all()


def test_canny_binary(rng):
    e = losses.canny(rng.random((24, 24, 3)))
    assert set(np.unique(e)) <= {0.0, 1.0}


def test_canny_depends_only_on_luma(rng):
    img = imgcore.gaussian_blur(rng.random((32, 32, 3)), 1.0) * 0.6 + 0.2
    ycc = imgcore.rgb_to_ycbcr(img)
    ycc[..., 1] = 128 + 10 * rng.standard_normal((32, 32))
    ycc[..., 2] = 120.0
    other = imgcore.ycbcr_to_rgb(ycc)
    np.testing.assert_allclose(imgcore.luma(other), imgcore.luma(img), atol=1e-12)
    np.testing.assert_array_equal(losses.canny(other), losses.canny(img))


def test_edge_loss_missing_column():
    h, w = 32, 40
    target = _step(h, w, 20)
    out = np.zeros_like(target)
    assert losses.edge_loss(out, target) == pytest.approx(1.0 / w)
    assert losses.edge_loss(target, out) == losses.edge_loss(out, target)
    assert losses.edge_loss(target, target) == 0.0


# ---------------------------------------------------------------- perceptual and total


def test_identity_extractor_is_l1(rng):
    a, b = rng.random((10, 10, 3)), rng.random((10, 10, 3))
    assert losses.perceptual_loss(a, b, losses.IdentityExtractor()) == pytest.approx(losses.l1_loss(a, b), abs=1e-12)
    assert losses.perceptual_loss(a, a) == 0.0


def test_pyramid_has_six_planes(rng):
    feats = losses.DEFAULT_EXTRACTOR(rng.random((32, 32, 3)))
    assert [f.shape for f in feats] == [(32, 32)] * 2 + [(16, 16)] * 2 + [(8, 8)] * 2


def test_blur_raises_perceptual(rng):
    sharp = rng.random((32, 32, 3))
    blurred = imgcore.gaussian_blur(sharp, 1.5)
    assert losses.perceptual_loss(blurred, sharp) > losses.perceptual_loss(sharp, sharp)


def test_total_weighting():
    b = losses.LossBreakdown.combine(0.1, 0.01, 0.2, 0.05, losses.LossWeights())
    assert b.total == pytest.approx(0.405, abs=1e-12)
    z = losses.LossBreakdown.combine(0.1, 0.01, 0.2, 0.05, losses.LossWeights(0, 0, 0))
    assert z.total == 0.1


def test_total_loss_zero_at_target(rng):
    t = rng.random((16, 16, 3))
    gray = np.repeat(rng.random((16, 16, 1)), 3, axis=2)
    b = losses.total_loss(t, gray, t)
    assert b.total == 0.0
    assert min(b.basic, b.self_supervised, b.perceptual, b.edge) == 0.0


def test_total_loss_components(rng):
    t = rng.random((24, 24, 3))
    o = np.clip(t + 0.1 * rng.standard_normal(t.shape), 0, 1)
    mid = rng.random((24, 24, 3))
    b = losses.total_loss(o, mid, t)
    assert b.basic == losses.l1_loss(o, t)
    assert b.self_supervised == losses.self_supervised_loss(mid)
    assert b.total == pytest.approx(b.basic + 10 * b.self_supervised + b.perceptual + 0.1 * b.edge)
