import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from demoire import jpeg
from demoire.errors import NonPositiveQuantFactor


def test_dct_matrix_matches_scipy():
    eye = np.eye(8)
    np.testing.assert_allclose(jpeg.dct_matrix(), scipy.fft.dct(eye, axis=0, norm="ortho"), atol=1e-12)


def _oracle_cycle_plane(plane, table):
    """Blockwise quantization round trip through scipy's 2-D DCT."""
    out = np.empty_like(plane)
    for y in range(0, plane.shape[0], 8):
        for x in range(0, plane.shape[1], 8):
            c = scipy.fft.dctn(plane[y : y + 8, x : x + 8], norm="ortho")
            out[y : y + 8, x : x + 8] = scipy.fft.idctn(np.round(c / table) * table, norm="ortho")
    return out


def test_quantize_plane_matches_oracle(rng):
    plane = rng.uniform(-128, 127, (16, 24))
    table = jpeg.LUMINANCE_TABLE * 0.5
    np.testing.assert_allclose(jpeg.quantize_plane(plane, table), _oracle_cycle_plane(plane, table), atol=1e-4)


@pytest.mark.parametrize("qf", [0.5, 1.0, 2.0])
@given(v=st.floats(0.05, 0.95))
@settings(max_examples=20, deadline=None)
def test_constant_gray_dc_bound(qf, v):
    img = np.full((16, 16, 3), v)
    out = jpeg.jpeg_cycle(img, qf)
    # only the DC term survives; its rounding error spreads over the 8x8 block
    bound = (jpeg.LUMINANCE_TABLE[0, 0] * qf / 2) / 8 / 255
    assert np.abs(out - img).max() <= bound + 1e-12


def test_tiny_factor_is_nearly_lossless(rng):
    img = rng.uniform(0.1, 0.9, (24, 16, 3))
    assert np.abs(jpeg.jpeg_cycle(img, 1e-6) - img).max() < 1e-3


def test_non_multiple_of_eight_shape(rng):
    ys, xs = np.mgrid[0:13, 0:10] / 13.0
    img = np.stack([0.2 + 0.5 * xs, 0.3 + 0.4 * ys, 0.5 + 0.2 * xs * ys], axis=2)
    out = jpeg.jpeg_cycle(img, 0.5)
    assert out.shape == img.shape
    assert np.abs(out - img).mean() < 0.01
    padded = np.pad(img, ((0, 3), (0, 6), (0, 0)), mode="reflect")
    np.testing.assert_allclose(out, jpeg.jpeg_cycle(padded, 0.5)[:13, :10], atol=1e-12)


def test_stronger_quantization_loses_more(rng):
    img = rng.random((32, 32, 3))
    errs = [np.abs(jpeg.jpeg_cycle(img, q) - img).mean() for q in (0.1, 0.5, 2.0)]
    assert errs[0] < errs[1] < errs[2]


def test_quality_mode_table():
    luma, _ = jpeg.quant_tables(0.5, "quality")
    np.testing.assert_array_equal(luma, jpeg.LUMINANCE_TABLE)  # IJG quality 50 is the base table


def test_bad_factor():
    with pytest.raises(NonPositiveQuantFactor):
        jpeg.jpeg_cycle(np.zeros((8, 8, 3)), 0.0)


def test_checkerboard_blocking_matches_oracle():
    ys, xs = np.mgrid[0:16, 0:16]
    img = np.repeat((0.3 + 0.45 * ((xs + ys) % 2))[..., None], 3, axis=2)
    out = jpeg.jpeg_cycle(img, 0.5)
    assert not np.array_equal(out, img)
    mse = np.mean((out - img) ** 2)
    assert 0 < mse and np.isfinite(10 * np.log10(1 / mse))
    # levels chosen so no coefficient quotient sits on a rounding tie
    # gray input: Cb = Cr = 128 everywhere, so only the luma plane is quantized
    y = 255.0 * img[..., 0] - 128.0
    y_out = _oracle_cycle_plane(y, jpeg.LUMINANCE_TABLE * 0.5)
    expected = np.clip(y_out + 128.0, 0, 255) / 255.0
    np.testing.assert_allclose(out, np.repeat(expected[..., None], 3, axis=2), atol=1e-4)
