"""Training losses: L1, green-guided self-supervision, perceptual, edge.

These are the reference (numpy, non-differentiable) evaluations. The
network trainer builds the same quantities from differentiable ops in
:mod:`demoire.net.lossgraph` and is tested against these.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import imgcore
from .errors import BadThresholds, DimensionMismatch, NonPositiveSigma


@dataclass(frozen=True)
class LossWeights:
    lambda_s: float = 10.0
    lambda_p: float = 1.0
    lambda_edge: float = 0.1

    def __post_init__(self):
        if min(self.lambda_s, self.lambda_p, self.lambda_edge) < 0:
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    basic: float
    self_supervised: float
    perceptual: float
    edge: float
    total: float

    @classmethod
    def combine(cls, basic, self_supervised, perceptual, edge, w: LossWeights) -> "LossBreakdown":
        total = basic + w.lambda_s * self_supervised + w.lambda_p * perceptual + w.lambda_edge * edge
        return cls(float(basic), float(self_supervised), float(perceptual), float(edge), float(total))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CannyParams:
    sigma: float = 1.4
    low: float = 0.1
    high: float = 0.2


def _pair(out, target):
    out = np.asarray(out, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if out.shape != target.shape:
        raise DimensionMismatch(f"shape mismatch: {out.shape} vs {target.shape}")
    return out, target


def l1_loss(out: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute difference over pixels and channels."""
    out, target = _pair(out, target)
    return float(np.mean(np.abs(out - target)))


def channel_gaps(mid: np.ndarray) -> tuple[float, float]:
    """Mean |G - R| and mean |G - B| of an RGB image."""
    mid = np.asarray(mid, dtype=np.float64)
    r, g, b = mid[..., 0], mid[..., 1], mid[..., 2]
    return float(np.mean(np.abs(g - r))), float(np.mean(np.abs(g - b)))


def self_supervised_loss(mid: np.ndarray, symmetric: bool = False) -> float:
    """Green-guided penalty on the intermediate image.

    Default form: ``max(0, |G - R| - |G - B|) / 2`` with mean-absolute norms.
    ``symmetric=True`` uses ``(|G - R| + |G - B|) / 2`` instead.
    """
    gr, gb = channel_gaps(mid)
    if symmetric:
        return (gr + gb) / 2.0
    return max(0.0, gr - gb) / 2.0


# --------------------------------------------------------------------------
# Canny
# --------------------------------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def correlate3(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation with half-sample symmetric padding."""
    p = np.pad(plane, 1, mode="symmetric")
    h, w = plane.shape
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            if kernel[dy, dx]:
                out += kernel[dy, dx] * p[dy : dy + h, dx : dx + w]
    return out


def sobel(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return correlate3(plane, SOBEL_X), correlate3(plane, SOBEL_Y)


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep ridge pixels along the gradient direction quantized to 4 bins.

    Ties are broken towards the later neighbour (``>=`` behind, ``>``
    ahead) so a symmetric two-pixel ridge keeps exactly one pixel.
    """
    h, w = mag.shape
    p = np.pad(mag, 1, mode="constant")
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # neighbour offsets (dy, dx) along the gradient for each bin
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros((h, w), dtype=bool)
    for sel, (dy, dx) in bins:
        ahead = p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = p[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep |= sel & (mag >= behind) & (mag > ahead)
    return keep & (mag > 0)


def canny(img: np.ndarray, sigma: float = 1.4, low: float = 0.1, high: float = 0.2) -> np.ndarray:
    """Binary Canny edge map of the image luma.

    Thresholds are fractions of the maximum gradient magnitude. Weak pixels
    survive when 8-connected to a strong one.
    """
    if not 0 < low < high <= 1:
        raise BadThresholds(f"need 0 < low < high <= 1, got low={low}, high={high}")
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    arr = np.asarray(img, dtype=np.float64)
    plane = imgcore.luma(arr) if arr.ndim == 3 else arr
    smooth = imgcore.gaussian_blur(plane, sigma)
    gx, gy = sobel(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12:
        return np.zeros(plane.shape)
    thin = _non_max_suppression(mag, gx, gy)
    strong = thin & (mag >= high * peak)
    weak = thin & (mag >= low * peak)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros(plane.shape)
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels].astype(np.float64)


def edge_loss(out: np.ndarray, target: np.ndarray, params: CannyParams = CannyParams()) -> float:
    """Mean absolute difference of the two binary Canny maps."""
    out, target = _pair(out, target)
    a = canny(out, params.sigma, params.low, params.high)
    b = canny(target, params.sigma, params.low, params.high)
    return float(np.mean(np.abs(a - b)))


# --------------------------------------------------------------------------
# perceptual features
# --------------------------------------------------------------------------


class IdentityExtractor:
    """Features are the raw R, G and B planes."""

    def __call__(self, img: np.ndarray) -> list[np.ndarray]:
        img = np.asarray(img, dtype=np.float64)
        return [img[..., c] for c in range(img.shape[-1])]


class GradientPyramidExtractor:
    """Fixed multi-scale gradient bank on luma.

    Three dyadic scales (each coarser level is a Gaussian blur with
    ``sigma`` followed by 2x decimation); at each scale the Sobel x and y
    responses (scaled by 1/8) give two planes, six in total. Stands in for a
    pretrained convolutional feature network.
    """

    def __init__(self, levels: int = 3, sigma: float = 1.0):
        self.levels = levels
        self.sigma = sigma

    def __call__(self, img: np.ndarray) -> list[np.ndarray]:
        plane = imgcore.luma(np.asarray(img, dtype=np.float64))
        feats = []
        for level in range(self.levels):
            if level:
                plane = imgcore.gaussian_blur(plane, self.sigma)[::2, ::2]
            gx, gy = sobel(plane)
            feats += [gx / 8.0, gy / 8.0]
        return feats


DEFAULT_EXTRACTOR = GradientPyramidExtractor()


def perceptual_loss(out: np.ndarray, target: np.ndarray, fx=DEFAULT_EXTRACTOR) -> float:
    """Mean over feature planes of the mean absolute feature difference."""
    out, target = _pair(out, target)
    fo, ft = fx(out), fx(target)
    return float(np.mean([np.mean(np.abs(a - b)) for a, b in zip(fo, ft)]))


def total_loss(
    out: np.ndarray,
    mid: np.ndarray,
    target: np.ndarray,
    w: LossWeights = LossWeights(),
    fx=DEFAULT_EXTRACTOR,
    canny_params: CannyParams = CannyParams(),
    symmetric_self_loss: bool = False,
) -> LossBreakdown:
    """Weighted loss; the self-supervised term reads ``mid``, the rest compare ``out`` to ``target``."""
    out, target = _pair(out, target)
    _pair(mid, target)
    return LossBreakdown.combine(
        l1_loss(out, target),
        self_supervised_loss(mid, symmetric_self_loss),
        perceptual_loss(out, target, fx),
        edge_loss(out, target, canny_params),
        w,
    )
