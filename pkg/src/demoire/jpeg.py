"""Baseline-JPEG style 8x8 DCT quantization round trip (no entropy coding).

Only the lossy part of JPEG matters for synthesis noise, so the codec
stops after dequantization: YCbCr, level shift, orthonormal DCT-II per
block, quantize with the Annex K tables, reconstruct.
"""

from __future__ import annotations

import numpy as np

from .errors import NonPositiveQuantFactor
from .imgcore import as_image, rgb_to_ycbcr, ycbcr_to_rgb

BLOCK = 8

LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMINANCE_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)

QUANT_MODES = ("table_scale", "quality")


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` so that ``C @ x`` transforms a column."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos((2 * i + 1) * k * np.pi / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    return c


_DCT = dct_matrix()


def quality_scaled_table(table: np.ndarray, quality: float) -> np.ndarray:
    """IJG quality scaling of a base table (quality in (0, 100])."""
    quality = float(np.clip(quality, 1e-6, 100.0))
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((table * scale + 50.0) / 100.0), 1.0, 255.0)


def quant_tables(quant_factor: float, mode: str = "table_scale") -> tuple[np.ndarray, np.ndarray]:
    """Luma and chroma step tables for a quantization factor.

    ``table_scale`` multiplies the Annex K tables by the factor;
    ``quality`` reads the factor as IJG quality ``100 * factor``.
    """
    if not quant_factor > 0:
        raise NonPositiveQuantFactor(f"quant_factor must be positive, got {quant_factor}")
    if mode == "table_scale":
        return LUMINANCE_TABLE * quant_factor, CHROMINANCE_TABLE * quant_factor
    if mode == "quality":
        q = 100.0 * quant_factor
        return quality_scaled_table(LUMINANCE_TABLE, q), quality_scaled_table(CHROMINANCE_TABLE, q)
    raise ValueError(f"unknown quantization mode {mode!r}; expected one of {QUANT_MODES}")


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3)


def _unblocks(blocks: np.ndarray) -> np.ndarray:
    nh, nw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(nh * BLOCK, nw * BLOCK)


def quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT, quantize, dequantize and invert one level-shifted plane.

    Plane dimensions must be multiples of 8.
    """
    blocks = _blocks(plane)
    coeffs = _DCT @ blocks @ _DCT.T
    coeffs = np.round(coeffs / table) * table
    return _unblocks(_DCT.T @ coeffs @ _DCT)


def jpeg_cycle(img: np.ndarray, quant_factor: float = 0.5, mode: str = "table_scale") -> np.ndarray:
    """Run an RGB image through JPEG quantization noise and back (4:4:4, no subsampling)."""
    luma_table, chroma_table = quant_tables(quant_factor, mode)
    img = as_image(img)
    h, w, _ = img.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect") if ph or pw else img
    ycc = rgb_to_ycbcr(padded) - 128.0
    out = np.empty_like(ycc)
    out[:, :, 0] = quantize_plane(ycc[:, :, 0], luma_table)
    out[:, :, 1] = quantize_plane(ycc[:, :, 1], chroma_table)
    out[:, :, 2] = quantize_plane(ycc[:, :, 2], chroma_table)
    rgb = ycbcr_to_rgb(np.clip(out + 128.0, 0.0, 255.0))
    return rgb[:h, :w]
