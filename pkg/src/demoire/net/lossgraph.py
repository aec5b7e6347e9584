"""Differentiable counterparts of :mod:`demoire.losses` on NCHW tensors."""

from __future__ import annotations

import numpy as np

from .. import imgcore, losses
from ..losses import CannyParams, LossBreakdown, LossWeights
from . import tensor as T
from .tensor import Tensor

SURROGATE_EPS = 1e-6


def _const(arr: np.ndarray, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype))


def l1(out: Tensor, target: Tensor) -> Tensor:
    return T.mean(T.absolute(T.add(out, T.neg(target))))


def self_supervised(mid: Tensor, symmetric: bool = False) -> Tensor:
    r, g, b = (T.channels(mid, c, c + 1) for c in range(3))
    gr = T.mean(T.absolute(T.add(g, T.neg(r))))
    gb = T.mean(T.absolute(T.add(g, T.neg(b))))
    if symmetric:
        return T.mul(T.add(gr, gb), 0.5)
    return T.mul(T.relu(T.add(gr, T.neg(gb))), 0.5)


def luma(x: Tensor) -> Tensor:
    w = imgcore.LUMA_WEIGHTS.reshape(1, 3, 1, 1)
    return T.conv2d(x, _const(w, x.dtype), padding=0)


def blur(plane: Tensor, sigma: float) -> Tensor:
    """Separable Gaussian blur with symmetric padding on a single-channel tensor."""
    k = imgcore.gaussian_kernel1d(sigma)
    r = len(k) // 2
    out = T.conv2d(plane, _const(k.reshape(1, 1, 1, -1), plane.dtype), padding=(0, r), pad_mode="symmetric")
    return T.conv2d(out, _const(k.reshape(1, 1, -1, 1), plane.dtype), padding=(r, 0), pad_mode="symmetric")


def sobel(plane: Tensor) -> tuple[Tensor, Tensor]:
    kx = _const(losses.SOBEL_X.reshape(1, 1, 3, 3), plane.dtype)
    ky = _const(losses.SOBEL_Y.reshape(1, 1, 3, 3), plane.dtype)
    return (
        T.conv2d(plane, kx, padding=1, pad_mode="symmetric"),
        T.conv2d(plane, ky, padding=1, pad_mode="symmetric"),
    )


def gradient_pyramid(x: Tensor, levels: int = 3, sigma: float = 1.0) -> list[Tensor]:
    """Same planes as :class:`demoire.losses.GradientPyramidExtractor`."""
    plane = luma(x)
    feats = []
    for level in range(levels):
        if level:
            plane = T.subsample2(blur(plane, sigma))
        gx, gy = sobel(plane)
        feats += [T.mul(gx, 0.125), T.mul(gy, 0.125)]
    return feats


def identity_features(x: Tensor) -> list[Tensor]:
    return [T.channels(x, c, c + 1) for c in range(x.shape[1])]


def feature_fn(fx):
    """Map a numpy extractor onto its differentiable twin."""
    if isinstance(fx, losses.GradientPyramidExtractor):
        return lambda x: gradient_pyramid(x, fx.levels, fx.sigma)
    if isinstance(fx, losses.IdentityExtractor):
        return identity_features
    raise TypeError(f"no differentiable version of extractor {type(fx).__name__}")


def perceptual(out: Tensor, target: Tensor, fx=losses.DEFAULT_EXTRACTOR) -> Tensor:
    feats = feature_fn(fx)
    fo, ft = feats(out), feats(target)
    terms = [l1(a, b) for a, b in zip(fo, ft)]
    acc = terms[0]
    for t in terms[1:]:
        acc = T.add(acc, t)
    return T.mul(acc, 1.0 / len(terms))


def gradient_magnitude(x: Tensor, sigma: float) -> Tensor:
    gx, gy = sobel(blur(luma(x), sigma))
    return T.sqrt(T.add(T.square(gx), T.square(gy)), SURROGATE_EPS)


def edge(out: Tensor, target: Tensor, params: CannyParams = CannyParams()) -> Tensor:
    """Canny-map L1 in the forward pass; gradient of a smoothed Sobel-magnitude L1 backwards."""
    value = losses.edge_loss(_to_image(out), _to_image(target), params)
    surrogate = l1(gradient_magnitude(out, params.sigma), T.stop_gradient(gradient_magnitude(target, params.sigma)))
    return T.straight_through(surrogate, value)


def _to_image(t: Tensor) -> np.ndarray:
    return np.asarray(t.value[0].transpose(1, 2, 0), dtype=np.float64)


def total(
    out: Tensor,
    mid: Tensor,
    target: Tensor,
    w: LossWeights = LossWeights(),
    fx=losses.DEFAULT_EXTRACTOR,
    canny_params: CannyParams = CannyParams(),
    symmetric_self_loss: bool = False,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted loss graph plus its float breakdown.

    Terms whose weight is zero are evaluated for reporting but kept out of the graph.
    """
    basic = l1(out, target)
    parts = {
        "self_supervised": (w.lambda_s, lambda: self_supervised(mid, symmetric_self_loss)),
        "perceptual": (w.lambda_p, lambda: perceptual(out, target, fx)),
        "edge": (w.lambda_edge, lambda: edge(out, target, canny_params)),
    }
    acc = basic
    values = {}
    for name, (weight, build) in parts.items():
        term = build()
        values[name] = term.item()
        if weight:
            acc = T.add(acc, T.mul(term, weight))
    breakdown = LossBreakdown.combine(basic.item(), values["self_supervised"], values["perceptual"], values["edge"], w)
    return acc, breakdown
