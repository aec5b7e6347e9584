"""PSNR and single-scale SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TooSmall

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not max_val > 0:
        raise ValueError("max_val must be positive")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation with the 1-D window ``g``."""
    n = len(g)
    h, w = plane.shape
    tmp = sum(g[i] * plane[i : h - n + 1 + i, :] for i in range(n))
    return sum(g[i] * tmp[:, i : w - n + 1 + i] for i in range(n))


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    data_range: float = 1.0,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
) -> float:
    """Mean SSIM over valid window positions and channels (Gaussian window)."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < window:
        raise TooSmall(f"SSIM needs at least {window}x{window}, got {a.shape[:2]}")
    g = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


@dataclass
class MetricReport:
    ids: list[str] = field(default_factory=list)
    psnr_db: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, item_id: str, restored: np.ndarray, reference: np.ndarray) -> None:
        self.ids.append(item_id)
        self.psnr_db.append(psnr(restored, reference))
        self.ssim.append(ssim(restored, reference))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db)) if self.psnr_db else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    def to_dict(self) -> dict:
        return {
            "per_image": [
                {"id": i, "psnr_db": _json_float(p), "ssim": s}
                for i, p, s in zip(self.ids, self.psnr_db, self.ssim)
            ],
            "mean_psnr_db": _json_float(self.mean_psnr),
            "mean_ssim": self.mean_ssim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        rep = cls()
        for row in d["per_image"]:
            rep.ids.append(row["id"])
            rep.psnr_db.append(float(row["psnr_db"]))
            rep.ssim.append(float(row["ssim"]))
        return rep


def _json_float(x: float):
    """JSON has no infinity; encode it as the string "inf"."""
    return "inf" if math.isinf(x) else x
