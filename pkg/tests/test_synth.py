import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demoire import imgcore, synth
from demoire.errors import ConfigError, DimensionMismatch, ImageTooSmall
from demoire.prng import item_seed

from conftest import natural_crops

SMALL = synth.SynthConfig(output_size=64)


def test_subpixel_single_pixel():
    out = synth.subpixel_expand(np.array([[[0.2, 0.5, 0.9]]]))
    np.testing.assert_array_equal(out[0], [[0.2, 0, 0], [0, 0.5, 0], [0, 0, 0.9]])


def test_subpixel_white():
    out = synth.subpixel_expand(np.ones((1, 1, 3)))
    np.testing.assert_array_equal(out[0], np.eye(3))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_subpixel_energy(h, w, seed):
    img = np.random.default_rng(seed).random((h, w, 3))
    out = synth.subpixel_expand(img)
    assert out.shape == (h, 3 * w, 3)
    np.testing.assert_allclose(out.sum(axis=(0, 1)), img.sum(axis=(0, 1)), rtol=1e-12)


def test_chroma_match_identity(rng):
    img = rng.uniform(0.1, 0.9, (8, 8, 3))
    assert np.abs(synth.chroma_match(img, img) - img).max() < 1e-5


def test_chroma_match_removes_offset(rng):
    ref = rng.uniform(0.2, 0.8, (10, 12, 3))
    ycc = imgcore.rgb_to_ycbcr(ref)
    ycc[..., 1] += 10.0
    syn = imgcore.ycbcr_to_rgb(ycc)
    out = synth.chroma_match(syn, ref)
    assert abs(imgcore.rgb_to_ycbcr(out)[..., 1].mean() - ycc[..., 1].mean() + 10.0) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_chroma_match_random_pairs(seed):
    r = np.random.default_rng(seed)
    syn, ref = r.random((16, 16, 3)), r.random((16, 16, 3))
    gcb, gcr = synth.chroma_gap(synth.chroma_match(syn, ref), ref)
    assert gcb < 0.5 and gcr < 0.5


def test_chroma_match_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        synth.chroma_match(np.zeros((4, 4, 3)), np.zeros((4, 6, 3)))


@pytest.fixture(scope="module")
def crops():
    return natural_crops(10, size=96, seed=3)


def test_pair_deterministic(crops):
    a = synth.synthesize_pair(crops[0], SMALL, 99)
    b = synth.synthesize_pair(crops[0], SMALL, 99)
    assert a.clean.tobytes() == b.clean.tobytes()
    assert a.moire.tobytes() == b.moire.tobytes()
    assert a.params == b.params


def test_pair_shapes_and_range(crops):
    p = synth.synthesize_indexed(crops[1], SMALL, 3)
    assert p.clean.shape == p.moire.shape == (64, 64, 3)
    assert p.per_item_seed == item_seed(SMALL.seed, 3)
    for img in (p.clean, p.moire):
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_different_seeds_differ(crops):
    for k, img in enumerate(crops):
        a = synth.synthesize_pair(img, SMALL, 2 * k)
        b = synth.synthesize_pair(img, SMALL, 2 * k + 1)
        assert a.params != b.params
        differ = np.any(a.moire != b.moire, axis=2).mean()
        assert differ >= 0.01


def test_pair_chroma_gap(crops):
    for k, img in enumerate(crops):
        p = synth.synthesize_indexed(img, SMALL, k)
        assert max(synth.chroma_gap(p.moire, p.clean)) < 0.5


def test_too_small():
    with pytest.raises(ImageTooSmall):
        synth.synthesize_pair(np.zeros((40, 80, 3)), SMALL, 0)


@pytest.mark.parametrize(
    "kw",
    [
        {"output_size": 63},
        {"output_size": 32},
        {"jpeg_quant_factor": 0.0},
        {"jpeg_quant_mode": "nope"},
        {"blur_sigma_range": (0.0, 1.0)},
        {"distortion_k1_range": (0.2, 0.1)},
        {"subpixel_layout": "pentile"},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        synth.SynthConfig(**kw)


def test_config_dict_roundtrip():
    cfg = synth.SynthConfig(seed=5, output_size=128, jpeg_quant_mode="quality")
    assert synth.SynthConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        synth.SynthConfig.from_dict({"bogus": 1})
