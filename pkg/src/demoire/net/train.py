"""Adam training loop, learning-rate schedule and checkpoints."""

from __future__ import annotations

import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import losses
from ..errors import CheckpointConfigMismatch, ConfigError, NonFiniteLoss, NonFiniteValue
from ..losses import CannyParams, LossBreakdown, LossWeights
from ..prng import item_seed
from . import lossgraph
from .model import NetConfig, DemoireNet, forward_tensors, image_to_tensor, make_mask

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 1
    lr_halving_interval: int = 30000
    max_iterations: int = 200
    weights: LossWeights = field(default_factory=LossWeights)
    symmetric_self_loss: bool = False
    canny: CannyParams = field(default_factory=CannyParams)
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.batch_size != 1:
            raise ConfigError("only batch_size 1 is supported")
        if self.lr_halving_interval < 1 or self.max_iterations < 0:
            raise ConfigError("iteration counts must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {sorted(unknown)}")
        if isinstance(d.get("weights"), dict):
            d["weights"] = LossWeights(**d["weights"])
        if isinstance(d.get("canny"), dict):
            d["canny"] = CannyParams(**d["canny"])
        return cls(**d)


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    """Step schedule: halve every ``lr_halving_interval`` iterations."""
    return cfg.lr * 0.5 ** (iteration // cfg.lr_halving_interval)


class TrainState:
    """Network parameters, Adam moments and the iteration counter."""

    def __init__(self, net: DemoireNet, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.iteration = 0
        self.m = {k: np.zeros_like(p.value) for k, p in net.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in net.params.items()}

    @classmethod
    def create(cls, net_cfg: NetConfig, cfg: TrainConfig) -> "TrainState":
        return cls(DemoireNet(net_cfg, dtype=np.dtype(cfg.dtype)), cfg)

    def mask_seed(self) -> int:
        # a fresh mask every step, reproducible from the seed and counter
        return item_seed(self.cfg.seed ^ self.net.cfg.seed, self.iteration)

    def adam_update(self, grads: dict) -> None:
        cfg = self.cfg
        t = self.iteration + 1
        lr = learning_rate(cfg, self.iteration)
        c1 = 1.0 - cfg.beta1**t
        c2 = 1.0 - cfg.beta2**t
        for k, p in self.net.params.items():
            g = grads.get(k)
            if g is None:
                g = np.zeros_like(p.value)
            m, v = self.m[k], self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            step = lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_epsilon)
            p.value = (p.value - step).astype(p.value.dtype)


def loss_graph(state: TrainState, moire: np.ndarray, clean: np.ndarray, mask_seed: int):
    net, cfg = state.net, state.cfg
    x = image_to_tensor(moire, net.dtype)
    target = image_to_tensor(clean, net.dtype)
    mask = make_mask(x.shape[2], x.shape[3], net.cfg.mask_ratio if net.cfg.use_mask_stage else 0.0, mask_seed)
    outs = forward_tensors(net.params, x, net.cfg, mask)
    return lossgraph.total(
        outs["out"], outs["mid"], target, cfg.weights, losses.DEFAULT_EXTRACTOR, cfg.canny, cfg.symmetric_self_loss
    )


def train_step(pair, state: TrainState) -> LossBreakdown:
    """One forward/backward/Adam step on a (clean, moire) pair."""
    for p in state.net.params.values():
        p.zero_grad()
    try:
        loss, breakdown = loss_graph(state, pair.moire, pair.clean, state.mask_seed())
        if not np.isfinite(breakdown.total):
            raise NonFiniteValue("total loss is non-finite")
        loss.backward()
        grads = {k: p.grad for k, p in state.net.params.items()}
        for k, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteValue(f"gradient of {k} is non-finite")
    except NonFiniteValue as exc:
        raise NonFiniteLoss(f"iteration {state.iteration}: {exc}") from exc
    state.adam_update(grads)
    for p in state.net.params.values():
        p.zero_grad()
    state.iteration += 1
    return breakdown


def train(pairs, state: TrainState, iterations: int | None = None, log=None) -> list[LossBreakdown]:
    """Cycle over ``pairs`` in order for ``iterations`` steps (default: the config budget)."""
    n = state.cfg.max_iterations if iterations is None else iterations
    history = []
    for _ in range(n):
        pair = pairs[state.iteration % len(pairs)]
        b = train_step(pair, state)
        history.append(b)
        if log is not None:
            log(state.iteration, b)
    return history


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "net_config": state.net.cfg.to_dict(),
        "train_config": state.cfg.to_dict(),
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for k, p in state.net.params.items():
        arrays["param/" + k] = p.value
        arrays["m/" + k] = state.m[k]
        arrays["v/" + k] = state.v[k]
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, expect_net: NetConfig | None = None) -> TrainState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointConfigMismatch(f"unsupported checkpoint version {meta.get('version')}")
        net_cfg = NetConfig.from_dict(meta["net_config"])
        if expect_net is not None and expect_net != net_cfg:
            raise CheckpointConfigMismatch("checkpoint network config differs from the requested one")
        cfg = TrainConfig.from_dict(meta["train_config"])
        state = TrainState.create(net_cfg, cfg)
        for k, p in state.net.params.items():
            if "param/" + k not in data:
                raise CheckpointConfigMismatch(f"checkpoint lacks parameter {k}")
            p.value = data["param/" + k].copy()
            state.m[k] = data["m/" + k].copy()
            state.v[k] = data["v/" + k].copy()
        state.iteration = int(meta["iteration"])
    return state
