"""Pixel-level primitives: color conversion, Bayer CFA, resampling, blur.

Images are plain ``numpy`` arrays of shape ``(height, width, 3)`` holding
float64 values in [0, 1]. YCbCr images use the same layout on the 0-255
scale (full-range BT.601, as used by JPEG). Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    ImageTooSmall,
    NonPositiveSigma,
    OddDimensions,
    SingularHomography,
)

RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])

LUMA_WEIGHTS = RGB_TO_YCBCR[0]


def as_image(img, name: str = "image") -> np.ndarray:
    """Validate and return ``img`` as a float64 (H, W, 3) array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatch(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ImageTooSmall(f"{name} must be at least 2x2, got {arr.shape[:2]}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr[:, :, :3].astype(np.float64) / 255.0


# --------------------------------------------------------------------------
# color
# --------------------------------------------------------------------------


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] to full-range BT.601 YCbCr on the 0-255 scale (clamped)."""
    rgb = as_image(img) * 255.0
    ycc = rgb @ RGB_TO_YCBCR.T + _CHROMA_OFFSET
    return np.clip(ycc, 0.0, 255.0)


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr` (before clamping); output clamped to [0, 1]."""
    ycc = as_image(img, "YCbCr image")
    rgb = (ycc - _CHROMA_OFFSET) @ YCBCR_TO_RGB.T
    return np.clip(rgb / 255.0, 0.0, 1.0)


def luma(img: np.ndarray) -> np.ndarray:
    """Unclamped BT.601 luma plane of an RGB image, on the [0, 1] scale."""
    return np.asarray(img, dtype=np.float64) @ LUMA_WEIGHTS


# --------------------------------------------------------------------------
# Bayer CFA
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BayerRaster:
    """Single-plane RGGB mosaic.

    Site ``(2i, 2j)`` holds red, ``(2i, 2j+1)`` and ``(2i+1, 2j)`` hold green,
    ``(2i+1, 2j+1)`` holds blue.
    """

    data: np.ndarray
    phase: str = "RGGB"

    def __post_init__(self):
        h, w = np.shape(self.data)
        if h % 2 or w % 2:
            raise OddDimensions(f"Bayer raster needs even dimensions, got {h}x{w}")
        if self.phase != "RGGB":
            raise ValueError(f"unsupported CFA phase {self.phase!r}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def bayer_channel_map(height: int, width: int) -> np.ndarray:
    """Integer plane giving the channel (0=R, 1=G, 2=B) sampled at each site."""
    rows = np.arange(height)[:, None] % 2
    cols = np.arange(width)[None, :] % 2
    return rows + cols


def bayer_mosaic(img: np.ndarray) -> BayerRaster:
    """Keep one channel per pixel following the RGGB tile."""
    img = as_image(img)
    h, w, _ = img.shape
    if h % 2 or w % 2:
        raise OddDimensions(f"Bayer mosaic needs even dimensions, got {h}x{w}")
    raw = np.empty((h, w))
    raw[0::2, 0::2] = img[0::2, 0::2, 0]
    raw[0::2, 1::2] = img[0::2, 1::2, 1]
    raw[1::2, 0::2] = img[1::2, 0::2, 1]
    raw[1::2, 1::2] = img[1::2, 1::2, 2]
    return BayerRaster(raw)


def demosaic_bilinear(raster: BayerRaster) -> np.ndarray:
    """Bilinear CFA interpolation with whole-sample reflective borders.

    Whole-sample reflection keeps the CFA phase of the mirrored border
    pixels, so a padded site is always of the same color as the one it
    copies. Neighbour sums are formed pairwise, which makes the result exact
    for constant-color inputs.
    """
    raw = np.asarray(raster.data, dtype=np.float64)
    h, w = raw.shape
    p = np.pad(raw, 1, mode="reflect")
    # views of the padded raster shifted by (dy, dx)
    def at(dy, dx):
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    cross = (at(-1, 0) + at(1, 0)) + (at(0, -1) + at(0, 1))
    diag = (at(-1, -1) + at(-1, 1)) + (at(1, -1) + at(1, 1))
    horiz = at(0, -1) + at(0, 1)
    vert = at(-1, 0) + at(1, 0)

    out = np.empty((h, w, 3))
    r_site = (slice(0, None, 2), slice(0, None, 2))
    g_r_row = (slice(0, None, 2), slice(1, None, 2))
    g_b_row = (slice(1, None, 2), slice(0, None, 2))
    b_site = (slice(1, None, 2), slice(1, None, 2))

    # red
    out[r_site + (0,)] = raw[r_site]
    out[g_r_row + (0,)] = horiz[g_r_row] / 2
    out[g_b_row + (0,)] = vert[g_b_row] / 2
    out[b_site + (0,)] = diag[b_site] / 4
    # green
    out[r_site + (1,)] = cross[r_site] / 4
    out[g_r_row + (1,)] = raw[g_r_row]
    out[g_b_row + (1,)] = raw[g_b_row]
    out[b_site + (1,)] = cross[b_site] / 4
    # blue
    out[r_site + (2,)] = diag[r_site] / 4
    out[g_r_row + (2,)] = vert[g_r_row] / 2
    out[g_b_row + (2,)] = horiz[g_b_row] / 2
    out[b_site + (2,)] = raw[b_site]
    return np.clip(out, 0.0, 1.0)


# --------------------------------------------------------------------------
# geometric resampling
# --------------------------------------------------------------------------


def reflect_coords(t: np.ndarray, n: int) -> np.ndarray:
    """Fold continuous coordinates into [0, n-1] by whole-sample reflection."""
    if n == 1:
        return np.zeros_like(t)
    period = 2.0 * (n - 1)
    t = np.abs(np.mod(t, period))
    return np.where(t > n - 1, period - t, t)


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup of ``img`` at fractional (x, y) positions.

    Out-of-range positions are reflected back into the image first.
    """
    h, w = img.shape[:2]
    xs = reflect_coords(np.asarray(xs, dtype=np.float64), w)
    ys = reflect_coords(np.asarray(ys, dtype=np.float64), h)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.minimum(x0, w - 1)
    y0 = np.minimum(y0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


@dataclass(frozen=True)
class Homography:
    """Projective map from source to destination pixel coordinates (x, y, 1)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise SingularHomography(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)) or abs(m[2, 2]) < 1e-12:
            raise SingularHomography("homography has a zero or non-finite (3,3) entry")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-9:
            raise SingularHomography("homography is not invertible")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_points(cls, src, dst) -> "Homography":
        """Exact homography taking four source points onto four destination points."""
        src = np.asarray(src, dtype=np.float64)
        dst = np.asarray(dst, dtype=np.float64)
        a = np.zeros((8, 8))
        b = np.zeros(8)
        for k, ((x, y), (u, v)) in enumerate(zip(src, dst)):
            a[2 * k] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
            a[2 * k + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
            b[2 * k] = u
            b[2 * k + 1] = v
        try:
            sol = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SingularHomography("degenerate point configuration") from exc
        return cls(np.append(sol, 1.0).reshape(3, 3))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)

    def apply(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.matrix
        den = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
        return (
            (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / den,
            (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / den,
        )

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def warp_homography(img: np.ndarray, h: Homography) -> np.ndarray:
    """Warp by inverse mapping every output pixel through ``h``."""
    img = as_image(img)
    if not isinstance(h, Homography):
        h = Homography(h)
    if np.array_equal(h.matrix, np.eye(3)):
        return img.copy()
    rows, cols = img.shape[:2]
    ys, xs = np.mgrid[0:rows, 0:cols].astype(np.float64)
    sx, sy = h.inverse().apply(xs, ys)
    return sample_bilinear(img, sx, sy)


def _invert_radius(rd: np.ndarray, k1: float, k2: float, max_iter: int = 20, tol: float = 1e-8):
    """Solve ``rd = rs * (1 + k1 rs^2 + k2 rs^4)`` for ``rs`` with Newton steps."""
    rs = rd.copy()
    done = np.zeros(rd.shape, dtype=bool)
    for _ in range(max_iter):
        r2 = rs * rs
        f = rs * (1.0 + k1 * r2 + k2 * r2 * r2) - rd
        df = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(done, 0.0, f / df)
        rs = rs - step
        done |= np.abs(step) < tol
        if done.all():
            break
    r2 = rs * rs
    resid = np.abs(rs * (1.0 + k1 * r2 + k2 * r2 * r2) - rd)
    bad = ~done | ~np.isfinite(rs) | (rs < 0) | ~(resid < 1e-6)
    return np.where(bad, rd, rs)


def radial_source_coords(xs, ys, width: int, height: int, k1: float, k2: float):
    """Source positions that :func:`radial_distort` samples for destination pixels (xs, ys)."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    norm = math.hypot(cx, cy)
    dx = (np.asarray(xs, dtype=np.float64) - cx) / norm
    dy = (np.asarray(ys, dtype=np.float64) - cy) / norm
    rd = np.hypot(dx, dy)
    rs = _invert_radius(rd, float(k1), float(k2))
    scale = np.where(rd > 0, rs / np.where(rd > 0, rd, 1.0), 1.0)
    return cx + dx * scale * norm, cy + dy * scale * norm


def radial_distort(img: np.ndarray, k1: float, k2: float) -> np.ndarray:
    """Polynomial radial lens distortion about the image center.

    Radii are normalized by the half-diagonal. Each destination pixel at
    radius ``rd`` samples the source at the ``rs`` solving
    ``rd = rs (1 + k1 rs^2 + k2 rs^4)``.
    """
    img = as_image(img)
    if k1 == 0 and k2 == 0:
        return img.copy()
    rows, cols = img.shape[:2]
    ys, xs = np.mgrid[0:rows, 0:cols].astype(np.float64)
    sx, sy = radial_source_coords(xs, ys, cols, rows, k1, k2)
    return sample_bilinear(img, sx, sy)


# --------------------------------------------------------------------------
# filtering and resizing
# --------------------------------------------------------------------------


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian of radius ``ceil(3 sigma)``, normalized to sum 1."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int, mode: str = "symmetric") -> np.ndarray:
    """Correlate ``arr`` with a 1-D odd-length kernel along ``axis`` with padding ``mode``."""
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    p = np.pad(arr, pad, mode=mode)
    n = arr.shape[axis]
    out = np.zeros(arr.shape, dtype=np.float64)
    for i, k in enumerate(kernel):
        out += k * np.take(p, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img: np.ndarray, sigma: float, sigma_x: float | None = None) -> np.ndarray:
    """Separable Gaussian blur with half-sample symmetric padding.

    ``sigma_x`` overrides the horizontal width for an anisotropic blur.
    Symmetric (edge-repeating) padding with a symmetric kernel conserves the
    total mass of each channel.
    """
    ky = gaussian_kernel1d(sigma)
    kx = ky if sigma_x is None else gaussian_kernel1d(sigma_x)
    arr = np.asarray(img, dtype=np.float64)
    return convolve_axis(convolve_axis(arr, ky, 0), kx, 1)


def resize_bilinear(img: np.ndarray, height: int, width: int, antialias: bool = False) -> np.ndarray:
    """Resample to ``(height, width)`` using pixel-center alignment.

    With ``antialias`` the image is Gaussian-prefiltered along each axis that
    shrinks, with sigma ``(scale - 1) / 2``.
    """
    arr = np.asarray(img, dtype=np.float64)
    rows, cols = arr.shape[:2]
    sy, sx = rows / height, cols / width
    if antialias:
        for axis, s in ((0, sy), (1, sx)):
            if s > 1:
                arr = convolve_axis(arr, gaussian_kernel1d((s - 1) / 2.0), axis)
    ys = (np.arange(height) + 0.5) * sy - 0.5
    xs = (np.arange(width) + 0.5) * sx - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return sample_bilinear(arr, gx, gy)


def center_crop(img: np.ndarray, height: int, width: int) -> np.ndarray:
    rows, cols = img.shape[:2]
    if rows < height or cols < width:
        raise ImageTooSmall(f"cannot crop {rows}x{cols} to {height}x{width}")
    top = (rows - height) // 2
    left = (cols - width) // 2
    return img[top : top + height, left : left + width]


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])
