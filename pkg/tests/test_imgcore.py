import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from demoire import imgcore as ic
from demoire.errors import OddDimensions


# ---------------------------------------------------------------- colour


def test_red_pixel_ycbcr():
    ycc = ic.rgb_to_ycbcr(np.tile([1.0, 0.0, 0.0], (2, 2, 1)))[0, 0]
    np.testing.assert_allclose(ycc, [76.245, 84.972, 255.0], atol=1e-2)


@pytest.mark.parametrize("v", [0.0, 1.0, 0.5])
def test_gray_has_neutral_chroma(v):
    ycc = ic.rgb_to_ycbcr(np.full((2, 2, 3), v))
    np.testing.assert_allclose(ycc[..., 1:], 128.0, atol=1e-9)
    np.testing.assert_allclose(ycc[..., 0], 255.0 * v, atol=1e-9)


def test_uint8_conversion():
    img = ic.from_uint8(np.full((1, 1, 3), 128, dtype=np.uint8))
    assert img[0, 0, 0] == pytest.approx(128 / 255)
    assert img[0, 0, 0] == pytest.approx(0.50196, abs=1e-5)
    np.testing.assert_array_equal(ic.to_uint8(img), 128)


@given(arrays(np.float64, (4, 5, 3), elements=st.floats(0.05, 0.95)))
@settings(max_examples=50, deadline=None)
def test_ycbcr_roundtrip(img):
    back = ic.ycbcr_to_rgb(ic.rgb_to_ycbcr(img))
    assert np.abs(back - img).max() < 1e-5


def test_luma_is_ycbcr_y(rng):
    img = rng.random((6, 7, 3))
    np.testing.assert_allclose(ic.luma(img) * 255.0, ic.rgb_to_ycbcr(img)[..., 0], atol=1e-9)


# ---------------------------------------------------------------- Bayer


def test_bayer_tile_example():
    img = np.zeros((2, 2, 3))
    img[..., 0], img[..., 1], img[..., 2] = 0.1, 0.2, 0.3
    np.testing.assert_array_equal(ic.bayer_mosaic(img).data, [[0.1, 0.2], [0.2, 0.3]])


def test_bayer_matches_index_walk(rng):
    img = rng.random((6, 8, 3))
    raw = ic.bayer_mosaic(img).data
    for y in range(6):
        for x in range(8):
            ch = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}[(y % 2, x % 2)]
            assert raw[y, x] == img[y, x, ch]
    np.testing.assert_array_equal(ic.bayer_channel_map(6, 8), [[{(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}[(y % 2, x % 2)] for x in range(8)] for y in range(6)])


def test_bayer_rejects_odd():
    with pytest.raises(OddDimensions):
        ic.bayer_mosaic(np.zeros((3, 4, 3)))


def _brute_demosaic(raw):
    """Average same-channel sites among the 3x3 neighbourhood (mirror borders)."""
    h, w = raw.shape
    cmap = ic.bayer_channel_map(h, w)
    out = np.zeros((h, w, 3))

    def mirror(i, n):
        return -i if i < 0 else (2 * (n - 1) - i if i >= n else i)

    for y in range(h):
        for x in range(w):
            for c in range(3):
                if cmap[y, x] == c:
                    out[y, x, c] = raw[y, x]
                    continue
                vals = []
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = mirror(y + dy, h), mirror(x + dx, w)
                        if cmap[yy, xx] == c and (dy, dx) != (0, 0):
                            # green at a red/blue site uses the 4-neighbour cross only
                            if c == 1 and dy != 0 and dx != 0:
                                continue
                            vals.append(raw[yy, xx])
                out[y, x, c] = np.mean(vals)
    return out


def test_demosaic_brute_force_oracle(rng):
    raster = ic.BayerRaster(rng.random((6, 6)))
    np.testing.assert_allclose(ic.demosaic_bilinear(raster), _brute_demosaic(raster.data), atol=1e-12)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=50, deadline=None)
def test_demosaic_constant_exact(r, g, b):
    img = np.empty((8, 10, 3))
    img[...] = (r, g, b)
    np.testing.assert_array_equal(ic.demosaic_bilinear(ic.bayer_mosaic(img)), img)


# ---------------------------------------------------------------- geometry


def test_identity_warp_bit_exact(rng):
    img = rng.random((9, 11, 3))
    np.testing.assert_array_equal(ic.warp_homography(img, ic.Homography.identity()), img)


def test_translation_warp(rng):
    img = rng.random((10, 12, 3))
    h = ic.Homography(np.array([[1.0, 0, 2], [0, 1, 1], [0, 0, 1]]))
    out = ic.warp_homography(img, h)
    # output(x, y) = input(x - 2, y - 1) away from the reflected border
    np.testing.assert_allclose(out[1:, 2:], img[:-1, :-2], atol=1e-12)


def _rot90(n):
    c = (n - 1) / 2.0
    # (x, y) -> (c - (y - c), c + (x - c))
    return ic.Homography(np.array([[0.0, -1, 2 * c], [1, 0, 0], [0, 0, 1]]))


def test_four_rotations_return_home(rng):
    img = rng.random((16, 16, 3))
    h = _rot90(16)
    out = img
    for _ in range(4):
        out = ic.warp_homography(out, h)
    assert np.abs(out - img).max() < 1e-3
    once = ic.warp_homography(img, h)
    np.testing.assert_allclose(once, np.rot90(img, k=-1, axes=(0, 1)), atol=1e-9)


def test_homography_from_points_roundtrip():
    src = [(0, 0), (10, 0), (10, 10), (0, 10)]
    dst = [(1, 0.5), (11, -0.3), (9.5, 10.2), (0.2, 9.7)]
    h = ic.Homography.from_points(src, dst)
    u, v = h.apply(np.array([p[0] for p in src], float), np.array([p[1] for p in src], float))
    np.testing.assert_allclose(np.c_[u, v], dst, atol=1e-9)
    x, y = h.inverse().apply(u, v)
    np.testing.assert_allclose(np.c_[x, y], src, atol=1e-9)


def _bisect_rs(rd, k1, k2):
    lo, hi = 0.0, max(2.0 * rd, 1e-12)
    f = lambda r: r * (1 + k1 * r * r + k2 * r**4) - rd  # noqa: E731
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("k1,k2", [(0.1, 0.02), (-0.12, 0.0), (0.05, -0.01)])
def test_radial_coords_match_bisection(k1, k2):
    w, h = 33, 25
    cx, cy = (w - 1) / 2, (h - 1) / 2
    norm = math.hypot(cx, cy)
    xs = np.array([0.0, 5, 16, 32, 20])
    ys = np.array([0.0, 3, 12, 24, 7])
    sx, sy = ic.radial_source_coords(xs, ys, w, h, k1, k2)
    for x, y, a, b in zip(xs, ys, sx, sy):
        rd = math.hypot(x - cx, y - cy) / norm
        rs = _bisect_rs(rd, k1, k2)
        s = rs / rd if rd > 0 else 1.0
        assert a == pytest.approx(cx + (x - cx) * s, abs=1e-6)
        assert b == pytest.approx(cy + (y - cy) * s, abs=1e-6)


def test_radial_ring_chart_displacement():
    n = 129
    c = (n - 1) / 2
    norm = math.hypot(c, c)
    ys, xs = np.mgrid[0:n, 0:n].astype(float)
    chart = lambda r: 0.5 + 0.5 * np.cos(2 * np.pi * 6 * r)  # noqa: E731
    img = np.repeat(chart(np.hypot(xs - c, ys - c) / norm)[..., None], 3, axis=2)
    k1, k2 = 0.15, 0.03
    out = ic.radial_distort(img, k1, k2)
    rd = np.hypot(xs - c, ys - c) / norm
    rs = np.vectorize(lambda r: _bisect_rs(r, k1, k2))(rd)
    expected = chart(rs)
    inside = rd < 0.69  # source stays within the image
    assert np.abs(out[..., 0] - expected)[inside].max() < 0.015
    np.testing.assert_array_equal(out[64, 64], img[64, 64])


# ---------------------------------------------------------------- filtering


def test_gaussian_impulse_matches_analytic():
    img = np.zeros((21, 21, 3))
    img[10, 10] = 1.0
    out = ic.gaussian_blur(img, 1.0)
    i = np.arange(-3, 4)
    z = np.exp(-(i**2) / 2).sum() ** 2
    for dy in range(-3, 4):
        for dx in range(-3, 4):
            assert out[10 + dy, 10 + dx, 1] == pytest.approx(math.exp(-(dx * dx + dy * dy) / 2) / z, abs=1e-6)
    assert out[10, 14, 0] == 0.0


def test_kernel_radius():
    assert len(ic.gaussian_kernel1d(1.0)) == 7
    assert len(ic.gaussian_kernel1d(1.4)) == 2 * 5 + 1


@given(arrays(np.float64, (12, 9, 3), elements=st.floats(0, 1)), st.floats(0.3, 3.0))
@settings(max_examples=30, deadline=None)
def test_blur_preserves_mean_and_commutes_with_flip(img, sigma):
    out = ic.gaussian_blur(img, sigma)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), img.mean(axis=(0, 1)), atol=1e-9)
    np.testing.assert_allclose(ic.flip_horizontal(out), ic.gaussian_blur(ic.flip_horizontal(img), sigma), atol=1e-12)


def test_resize_constant_and_identity(rng):
    img = rng.random((8, 10, 3))
    np.testing.assert_allclose(ic.resize_bilinear(img, 8, 10), img, atol=1e-12)
    const = np.full((16, 16, 3), 0.3)
    np.testing.assert_allclose(ic.resize_bilinear(const, 5, 7, antialias=True), 0.3, atol=1e-12)


def test_center_crop():
    img = np.arange(5 * 6 * 3, dtype=float).reshape(5, 6, 3)
    np.testing.assert_array_equal(ic.center_crop(img, 3, 2), img[1:4, 2:4])
