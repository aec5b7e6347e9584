"""Random rectangular patch masks at a target coverage ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ImageTooSmallForPatches, RatioOutOfRange
from .prng import Xoshiro256

COVERAGE_TOLERANCE = 0.02
MIN_SIDE = 8
MAX_SIDE = 32


@dataclass(frozen=True)
class PatchMask:
    """Boolean mask (``True`` = hidden) with the rectangles that produced it.

    Rectangles are ``(x, y, w, h)`` already clipped to the image.
    """

    bits: np.ndarray
    patches: tuple[tuple[int, int, int, int], ...]
    target_ratio: float

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def realized_ratio(self) -> float:
        return float(self.bits.sum()) / self.bits.size

    def visible_plane(self) -> np.ndarray:
        """1.0 where the pixel is visible, 0.0 where it is masked."""
        return (~self.bits).astype(np.float64)

    @classmethod
    def empty(cls, height: int, width: int) -> "PatchMask":
        return cls(np.zeros((height, width), dtype=bool), (), 0.0)


def generate_mask(width: int, height: int, ratio: float, seed: int) -> PatchMask:
    """Drop random rectangles until the masked fraction reaches ``ratio``.

    Side lengths are uniform in [8, 32]. The top-left corner is uniform over
    every placement that overlaps the image (rectangles may hang over the
    border and are clipped), which keeps the per-pixel hit probability the
    same near the borders as in the interior. If the last rectangle pushes
    coverage beyond ``ratio + 0.02``, randomly chosen masked pixels are
    released until coverage is back inside the tolerance.
    """
    if not 0.0 < ratio < 1.0:
        raise RatioOutOfRange(f"mask ratio must lie in (0, 1), got {ratio}")
    if width < MAX_SIDE or height < MAX_SIDE:
        raise ImageTooSmallForPatches(f"mask needs at least {MAX_SIDE}x{MAX_SIDE}, got {width}x{height}")
    rng = Xoshiro256(seed)
    bits = np.zeros((height, width), dtype=bool)
    total = width * height
    goal = ratio * total
    covered = 0
    patches = []
    while covered < goal:
        pw = rng.randint(MIN_SIDE, MAX_SIDE)
        ph = rng.randint(MIN_SIDE, MAX_SIDE)
        x = rng.randint(1 - pw, width - 1)
        y = rng.randint(1 - ph, height - 1)
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + pw, width), min(y + ph, height)
        region = bits[y0:y1, x0:x1]
        covered += region.size - int(region.sum())
        region[...] = True
        patches.append((x0, y0, x1 - x0, y1 - y0))

    excess = covered - int(np.floor((ratio + COVERAGE_TOLERANCE) * total))
    if excess > 0:
        flat = np.flatnonzero(bits.ravel())
        # partial Fisher-Yates over the masked indices
        for i in range(excess):
            j = rng.randint(i, len(flat) - 1)
            flat[i], flat[j] = flat[j], flat[i]
        bits.ravel()[flat[:excess]] = False
    return PatchMask(bits, tuple(patches), float(ratio))


def apply_mask(img: np.ndarray, mask: PatchMask) -> tuple[np.ndarray, np.ndarray]:
    """Zero the masked pixels; return (masked image, visibility plane)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] != mask.bits.shape:
        raise DimensionMismatch(f"image {img.shape[:2]} vs mask {mask.bits.shape}")
    masked = np.where(mask.bits[:, :, None], 0.0, img)
    return masked, mask.visible_plane()
