"""Clean-to-moire pair synthesis.

The pipeline emulates photographing an LED screen: the clean image is
rendered as RGB subpixel stripes, viewed through a random perspective and
lens distortion, optically low-passed, sampled by a Bayer sensor at the
output resolution, demosaiced and JPEG-compressed. A final chroma
correction pulls the moire image's average Cb/Cr back to the clean image.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import imgcore
from .errors import ConfigError, DimensionMismatch, ImageTooSmall
from .imgcore import Homography
from .jpeg import QUANT_MODES, jpeg_cycle
from .prng import Xoshiro256, item_seed

SUBPIXEL_LAYOUTS = ("vertical_rgb_stripes",)
STRIPE = 3  # horizontal expansion of the stripe layout


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    subpixel_layout: str = "vertical_rgb_stripes"
    homography_jitter: float = 0.04
    distortion_k1_range: tuple[float, float] = (-0.12, 0.12)
    distortion_k2_range: tuple[float, float] = (-0.02, 0.02)
    blur_sigma_range: tuple[float, float] = (0.3, 1.0)
    jpeg_quant_factor: float = 0.5
    jpeg_quant_mode: str = "table_scale"
    output_size: int = 256

    def __post_init__(self):
        for name in ("distortion_k1_range", "distortion_k2_range", "blur_sigma_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not lo <= hi:
                raise ConfigError(f"{name} is empty: {(lo, hi)}")
        if self.blur_sigma_range[0] <= 0:
            raise ConfigError("blur sigma must be positive")
        if not self.jpeg_quant_factor > 0:
            raise ConfigError("jpeg_quant_factor must be positive")
        if self.jpeg_quant_mode not in QUANT_MODES:
            raise ConfigError(f"jpeg_quant_mode must be one of {QUANT_MODES}")
        if self.subpixel_layout not in SUBPIXEL_LAYOUTS:
            raise ConfigError(f"subpixel_layout must be one of {SUBPIXEL_LAYOUTS}")
        if self.output_size < 64 or self.output_size % 2:
            raise ConfigError("output_size must be even and at least 64")
        if not 0 <= self.homography_jitter < 0.5:
            raise ConfigError("homography_jitter must lie in [0, 0.5)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown SynthConfig keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


@dataclass
class MoirePair:
    clean: np.ndarray
    moire: np.ndarray
    config_snapshot: SynthConfig
    per_item_seed: int
    params: dict = field(default_factory=dict)


def subpixel_expand(img: np.ndarray) -> np.ndarray:
    """Render each pixel as three vertical stripes carrying R, G and B only."""
    img = np.asarray(img, dtype=np.float64)
    h, w, _ = img.shape
    out = np.zeros((h, STRIPE * w, 3))
    for c in range(3):
        out[:, c::STRIPE, c] = img[:, :, c]
    return out


def chroma_match(syn: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Shift ``syn``'s Cb and Cr planes so their means equal those of ``ref``."""
    syn = imgcore.as_image(syn, "syn")
    ref = imgcore.as_image(ref, "ref")
    if syn.shape != ref.shape:
        raise DimensionMismatch(f"chroma_match shapes differ: {syn.shape} vs {ref.shape}")
    ys = imgcore.rgb_to_ycbcr(syn)
    yr = imgcore.rgb_to_ycbcr(ref)
    for c in (1, 2):
        ys[:, :, c] += yr[:, :, c].mean() - ys[:, :, c].mean()
    return imgcore.ycbcr_to_rgb(np.clip(ys, 0.0, 255.0))


def chroma_gap(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Absolute difference of mean Cb and mean Cr (0-255 scale)."""
    ya, yb = imgcore.rgb_to_ycbcr(a), imgcore.rgb_to_ycbcr(b)
    return (
        abs(float(ya[:, :, 1].mean() - yb[:, :, 1].mean())),
        abs(float(ya[:, :, 2].mean() - yb[:, :, 2].mean())),
    )


def prepare_clean(img: np.ndarray, size: int) -> np.ndarray:
    """Center-crop to a square and resize (anti-aliased) to ``size``."""
    img = imgcore.as_image(img)
    side = min(img.shape[:2])
    if side < size:
        raise ImageTooSmall(f"clean image {img.shape[:2]} smaller than output size {size}")
    sq = imgcore.center_crop(img, side, side)
    if side == size:
        return sq.copy()
    return np.clip(imgcore.resize_bilinear(sq, size, size, antialias=True), 0.0, 1.0)


def random_corner_homography(width: int, height: int, jitter: float, rng: Xoshiro256) -> Homography:
    """Homography moving each image corner by up to ``jitter`` of the image size per axis."""
    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )
    moved = corners.copy()
    for k in range(4):
        moved[k, 0] += rng.uniform(-jitter, jitter) * width
        moved[k, 1] += rng.uniform(-jitter, jitter) * height
    return Homography.from_points(corners, moved)


def draw_params(cfg: SynthConfig, rng: Xoshiro256, expanded_width: int, height: int) -> dict:
    """All random draws for one item, in a fixed order."""
    h = random_corner_homography(expanded_width, height, cfg.homography_jitter, rng)
    return {
        "homography": h.matrix.tolist(),
        "k1": rng.uniform(*cfg.distortion_k1_range),
        "k2": rng.uniform(*cfg.distortion_k2_range),
        "sigma": rng.uniform(*cfg.blur_sigma_range),
    }


def register_clean(target: np.ndarray, params: dict) -> np.ndarray:
    """Map the clean image through the same perspective and lens geometry as the moire path.

    Output pixel ``x`` is sampled on the stripe grid at ``3x + 1`` (the
    center of its three subpixels), so the registered clean image lines up
    with the moire image pixel for pixel.
    """
    size_y, size_x = target.shape[:2]
    ys, xs = np.mgrid[0:size_y, 0:size_x].astype(np.float64)
    xe = STRIPE * xs + (STRIPE - 1) / 2.0
    sx, sy = imgcore.radial_source_coords(xe, ys, STRIPE * size_x, size_y, params["k1"], params["k2"])
    sx, sy = Homography(np.array(params["homography"])).inverse().apply(sx, sy)
    return imgcore.sample_bilinear(target, (sx - (STRIPE - 1) / 2.0) / STRIPE, sy)


def capture(screen: np.ndarray, params: dict, size: int) -> np.ndarray:
    """Camera model on the stripe-rendered screen, up to the raw sensor values.

    The optical low-pass width is given in sensor pixels, so it spans
    ``STRIPE`` times as many stripe columns horizontally. Point sampling at
    the sensor grid aliases the stripes into moire; the exposure gain
    ``STRIPE`` restores the brightness lost to the stripe duty cycle.
    """
    x = imgcore.warp_homography(screen, Homography(np.array(params["homography"])))
    x = imgcore.radial_distort(x, params["k1"], params["k2"])
    sigma = params["sigma"]
    x = imgcore.gaussian_blur(x, sigma, sigma_x=STRIPE * sigma)
    x = imgcore.resize_bilinear(x, size, size) * STRIPE
    return np.clip(x, 0.0, 1.0)


def synthesize_pair(clean: np.ndarray, cfg: SynthConfig, seed: int) -> MoirePair:
    """Generate a (clean, moire) pair from a clean image and a per-item seed.

    Stages: subpixel stripes, random perspective, radial distortion, optical
    blur, sensor sampling, RGGB mosaic, bilinear demosaic, JPEG
    quantization, chroma correction against the registered clean image.
    """
    size = cfg.output_size
    target = prepare_clean(clean, size)
    rng = Xoshiro256(seed)

    screen = subpixel_expand(target)
    params = draw_params(cfg, rng, screen.shape[1], screen.shape[0])
    x = capture(screen, params, size)
    x = imgcore.demosaic_bilinear(imgcore.bayer_mosaic(x))
    x = jpeg_cycle(x, cfg.jpeg_quant_factor, cfg.jpeg_quant_mode)
    registered = np.clip(register_clean(target, params), 0.0, 1.0)
    moire = chroma_match(x, registered)
    return MoirePair(
        clean=registered, moire=moire, config_snapshot=cfg, per_item_seed=int(seed), params=params
    )


def synthesize_indexed(clean: np.ndarray, cfg: SynthConfig, index: int) -> MoirePair:
    """:func:`synthesize_pair` with the seed derived from ``cfg.seed`` and the item index."""
    return synthesize_pair(clean, cfg, item_seed(cfg.seed, index))
