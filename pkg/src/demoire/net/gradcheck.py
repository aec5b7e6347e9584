"""Central finite-difference checks of the analytic gradients."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import UnknownOp
from ..prng import Xoshiro256
from . import lossgraph
from . import tensor as T
from .model import NetConfig, drdb_forward, feature_aggregator, forward_tensors, init_params, make_mask
from .tensor import Tensor

FD_STEP = 1e-5
MIN_COORDS = 50
DENOM_FLOOR = 1e-7


@dataclass
class GradCheckReport:
    op: str
    max_rel_error: float
    n_coords: int
    tolerance: float
    passed: bool
    kink_skips: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Case:
    inputs: dict  # name -> Tensor; all of them are differentiated
    fn: object  # callable(inputs) -> Tensor
    tolerance: float


def _randn(rng: Xoshiro256, *shape, scale: float = 1.0) -> np.ndarray:
    return scale * rng.normal_array(int(np.prod(shape))).reshape(shape)


def _leaves(d: dict) -> dict:
    return {k: Tensor(v, requires_grad=True) for k, v in d.items()}


def _case_conv2d(rng):
    inputs = _leaves({"x": _randn(rng, 1, 4, 8, 8), "w": _randn(rng, 3, 4, 3, 3, scale=0.3), "b": _randn(rng, 3)})
    return _Case(inputs, lambda p: T.conv2d(p["x"], p["w"], p["b"]), 1e-4)


def _case_conv2d_strided(rng):
    inputs = _leaves({"x": _randn(rng, 1, 4, 8, 8), "w": _randn(rng, 3, 4, 3, 3, scale=0.3), "b": _randn(rng, 3)})
    return _Case(inputs, lambda p: T.conv2d(p["x"], p["w"], p["b"], stride=2), 1e-4)


def _case_conv2d_dilated(rng):
    inputs = _leaves({"x": _randn(rng, 1, 4, 8, 8), "w": _randn(rng, 3, 4, 3, 3, scale=0.3)})
    return _Case(inputs, lambda p: T.conv2d(p["x"], p["w"], dilation=2, pad_mode="symmetric"), 1e-4)


def _case_linear(rng):
    inputs = _leaves({"x": _randn(rng, 2, 6), "w": _randn(rng, 5, 6), "b": _randn(rng, 5)})
    return _Case(inputs, lambda p: T.linear(p["x"], p["w"], p["b"]), 1e-6)


def _case_sigmoid(rng):
    return _Case(_leaves({"x": _randn(rng, 4, 16, scale=2.0)}), lambda p: T.sigmoid(p["x"]), 1e-6)


def _case_leaky_relu(rng):
    return _Case(_leaves({"x": _randn(rng, 4, 16)}), lambda p: T.leaky_relu(p["x"], 0.2), 1e-6)


def _small_net_cfg(**kw) -> NetConfig:
    return NetConfig(base_channels=8, seed=7, out_init_scale=1.0, **kw)


def _block_params(rng, prefix, cfg):
    params = init_params(cfg, np.float64)
    keep = {k: v for k, v in params.items() if k.startswith(prefix)}
    # nonzero biases so every parameter matters
    for k, v in keep.items():
        if k.endswith(".b"):
            v.value = _randn(rng, *v.shape, scale=0.1)
    return keep


def _case_drdb(rng):
    cfg = _small_net_cfg()
    inputs = _block_params(rng, "ed1.level0.drdb", cfg)
    inputs["x"] = Tensor(_randn(rng, 1, 8, 8, 8), requires_grad=True)
    return _Case(inputs, lambda p: drdb_forward(p, "ed1.level0.drdb", p["x"], cfg), 1e-4)


def _case_fa(rng):
    cfg = _small_net_cfg()
    inputs = _block_params(rng, "ed1.level0.fa", cfg)
    inputs["x"] = Tensor(_randn(rng, 1, 8, 8, 8), requires_grad=True)
    return _Case(inputs, lambda p: feature_aggregator(p, "ed1.level0.fa", p["x"], cfg), 1e-4)


def _case_losses(rng):
    target = Tensor(0.2 + 0.6 * rng.random_array(3 * 32 * 32).reshape(1, 3, 32, 32))
    inputs = _leaves({"out": 0.2 + 0.6 * rng.random_array(3 * 32 * 32).reshape(1, 3, 32, 32)})

    def fn(p):
        return T.add(
            T.add(lossgraph.l1(p["out"], target), lossgraph.perceptual(p["out"], target)),
            lossgraph.self_supervised(p["out"], symmetric=True),
        )

    return _Case(inputs, fn, 1e-4)


def _case_network(rng):
    cfg = _small_net_cfg(encoder_levels=2)
    params = init_params(cfg, np.float64)
    for k, v in params.items():
        if k.endswith(".b"):
            v.value = _randn(rng, *v.shape, scale=0.05)
    x = Tensor(0.1 + 0.8 * rng.random_array(3 * 64 * 64).reshape(1, 3, 64, 64))
    mask = make_mask(64, 64, cfg.mask_ratio, 11)

    def fn(p):
        outs = forward_tensors(p, x, cfg, mask)
        return T.concat([outs["mid"], outs["out"]], axis=1)

    return _Case(params, fn, 1e-3)


REGISTRY = {
    "conv2d": _case_conv2d,
    "conv2d_strided": _case_conv2d_strided,
    "conv2d_dilated": _case_conv2d_dilated,
    "linear": _case_linear,
    "sigmoid": _case_sigmoid,
    "leaky_relu": _case_leaky_relu,
    "drdb": _case_drdb,
    "fa": _case_fa,
    "losses": _case_losses,
    "network": _case_network,
}


def _scalar(case: _Case, proj: np.ndarray) -> Tensor:
    return T.total(T.mul(case.fn(case.inputs), proj))


def _traced(case: _Case, proj: np.ndarray) -> tuple[float, list]:
    with T.trace_kinks() as trace:
        value = _scalar(case, proj).item()
    return value, trace


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    op_name: str, tolerance: float | None = None, seed: int = 0, n_coords: int = MIN_COORDS, step: float = FD_STEP
) -> GradCheckReport:
    """Compare backprop against central differences of a random projection of the op output.

    Coordinates are drawn uniformly over all differentiated inputs. The
    relative error is ``|a - n| / max(|a|, |n|, 1e-7)``. A coordinate whose
    two probes land on different branches of a piecewise op (leaky rectifier,
    absolute value, clipped logit) is redrawn, since the difference quotient
    there measures the kink rather than the derivative.
    """
    if op_name not in REGISTRY:
        raise UnknownOp(f"no gradient check registered for {op_name!r}; known: {sorted(REGISTRY)}")
    rng = Xoshiro256(seed)
    case = REGISTRY[op_name](rng)
    tol = case.tolerance if tolerance is None else tolerance
    out_shape = case.fn(case.inputs).shape
    proj = _randn(rng, *out_shape)

    for t in case.inputs.values():
        t.zero_grad()
    _scalar(case, proj).backward()
    names = list(case.inputs)
    analytic = {k: case.inputs[k].grad if case.inputs[k].grad is not None else np.zeros(case.inputs[k].shape) for k in names}

    sizes = np.array([case.inputs[k].value.size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n_coords = max(n_coords, MIN_COORDS)
    worst = 0.0
    done = skips = 0
    while done < n_coords:
        if skips > 20 * n_coords:
            raise RuntimeError(f"{op_name}: too many finite-difference probes straddle kinks")
        flat = rng.randint(0, int(offsets[-1]) - 1)
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        k = names[i]
        idx = np.unravel_index(flat - offsets[i], case.inputs[k].shape)
        arr = case.inputs[k].value
        orig = arr[idx]
        arr[idx] = orig + step
        up, up_branches = _traced(case, proj)
        arr[idx] = orig - step
        down, down_branches = _traced(case, proj)
        arr[idx] = orig
        if not _same_branches(up_branches, down_branches):
            skips += 1
            continue
        done += 1
        numeric = (up - down) / (2 * step)
        a = float(analytic[k][idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), DENOM_FLOOR)
        worst = max(worst, err)
    return GradCheckReport(op_name, worst, n_coords, tol, worst < tol, skips)
