"""Two-stage masked encoder-decoder demoireing network.

Stage one (preprocess conv + encoder-decoder) produces the intermediate
image ``i_mid``. A random patch mask hides part of ``i_mid``; stage two
reconstructs the final image ``i_out`` from the masked image and the mask
plane.

Each encoder-decoder runs, per scale, a dilated residual dense block
(DRDB) followed by a feature aggregator (FA) whose per-channel fusion
weights come from a three-layer MLP.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import masking
from ..errors import ConfigError, OddDimensions
from ..prng import Xoshiro256
from . import tensor as T
from .tensor import Tensor

MIN_SIDE = 64
STAGE2_BASES = ("input", "masked_mid")


@dataclass(frozen=True)
class NetConfig:
    base_channels: int = 16
    encoder_levels: int = 2
    drdb_layers: int = 3
    drdb_growth: int = 8
    drdb_dilation: int = 2
    fa_mlp_hidden: int = 0  # 0 means twice the channel count of the block
    mask_ratio: float = 0.6
    seed: int = 0
    leaky_slope: float = 0.2
    global_residual: bool = True
    out_init_scale: float = 0.0  # zero start: each stage begins as the identity on its residual base
    stage2_base: str = "input"  # residual base of the second stage: "input" or "masked_mid"
    use_fa: bool = True
    use_mask_stage: bool = True

    def __post_init__(self):
        for name in ("base_channels", "encoder_levels", "drdb_layers", "drdb_growth", "drdb_dilation"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.stage2_base not in STAGE2_BASES:
            raise ConfigError(f"stage2_base must be one of {STAGE2_BASES}")
        if self.fa_mlp_hidden < 0:
            raise ConfigError("fa_mlp_hidden must be non-negative")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must lie in [0, 1)")

    def width(self, level: int) -> int:
        return self.base_channels * 2**level

    def mlp_hidden(self, channels: int) -> int:
        return self.fa_mlp_hidden or 2 * channels

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown NetConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class NetOutputs:
    i_mid: np.ndarray
    i_with_mask: np.ndarray
    mask: masking.PatchMask
    i_out: np.ndarray


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------


class ParamBuilder:
    """Creates named parameters with Kaiming fan-in initialization."""

    def __init__(self, seed: int, slope: float, dtype=np.float64):
        self.rng = Xoshiro256(seed)
        self.gain = np.sqrt(2.0 / (1.0 + slope**2))
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value.astype(self.dtype), requires_grad=True)

    def conv(self, name: str, cin: int, cout: int, k: int, scale: float = 1.0) -> None:
        fan_in = cin * k * k
        std = scale * self.gain / np.sqrt(fan_in)
        self._add(name + ".w", std * self.rng.normal_array(cout * cin * k * k).reshape(cout, cin, k, k))
        self._add(name + ".b", np.zeros(cout))

    def dense(self, name: str, nin: int, nout: int) -> None:
        std = self.gain / np.sqrt(nin)
        self._add(name + ".w", std * self.rng.normal_array(nout * nin).reshape(nout, nin))
        self._add(name + ".b", np.zeros(nout))


def _dense_block_params(pb: ParamBuilder, prefix: str, c: int, cfg: NetConfig) -> None:
    for i in range(cfg.drdb_layers):
        pb.conv(f"{prefix}.layer{i}", c + i * cfg.drdb_growth, cfg.drdb_growth, 3)
    pb.conv(f"{prefix}.fuse", c + cfg.drdb_layers * cfg.drdb_growth, c, 1)


def _fa_params(pb: ParamBuilder, prefix: str, c: int, cfg: NetConfig) -> None:
    _dense_block_params(pb, prefix + ".dense", c, cfg)
    hidden = cfg.mlp_hidden(c)
    pb.dense(prefix + ".mlp0", 2 * c, hidden)
    pb.dense(prefix + ".mlp1", hidden, hidden)
    pb.dense(prefix + ".mlp2", hidden, c)


def _ed_params(pb: ParamBuilder, prefix: str, cin: int, cfg: NetConfig) -> None:
    pb.conv(prefix + ".in", cin, cfg.width(0), 3)
    for level in range(cfg.encoder_levels + 1):
        c = cfg.width(level)
        if level:
            pb.conv(f"{prefix}.down{level}", cfg.width(level - 1), c, 3)
        _dense_block_params(pb, f"{prefix}.level{level}.drdb", c, cfg)
        if cfg.use_fa:
            _fa_params(pb, f"{prefix}.level{level}.fa", c, cfg)
    for level in range(cfg.encoder_levels, 0, -1):
        pb.conv(f"{prefix}.up{level}", cfg.width(level), cfg.width(level - 1), 3)
    # small output init keeps the residual path dominant at the start
    pb.conv(prefix + ".out", cfg.width(0), 3, 3, scale=cfg.out_init_scale if cfg.global_residual else 1.0)


def init_params(cfg: NetConfig, dtype=np.float64) -> dict[str, Tensor]:
    """Fresh parameters for the full network, drawn from ``cfg.seed``."""
    pb = ParamBuilder(cfg.seed, cfg.leaky_slope, dtype)
    _ed_params(pb, "ed1", 3, cfg)
    if cfg.use_mask_stage:
        _ed_params(pb, "ed2", 4, cfg)
    return pb.params


# --------------------------------------------------------------------------
# blocks
# --------------------------------------------------------------------------


def conv(p: dict, name: str, x: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
    return T.conv2d(x, p[name + ".w"], p[name + ".b"], stride=stride, dilation=dilation)


def dense_block(p: dict, prefix: str, x: Tensor, cfg: NetConfig) -> Tensor:
    """Densely connected dilated 3x3 convs, then a 1x1 fusion back to the input width."""
    feats = [x]
    for i in range(cfg.drdb_layers):
        inp = feats[0] if len(feats) == 1 else T.concat(feats, axis=1)
        y = conv(p, f"{prefix}.layer{i}", inp, dilation=cfg.drdb_dilation)
        feats.append(T.leaky_relu(y, cfg.leaky_slope))
    return conv(p, prefix + ".fuse", T.concat(feats, axis=1))


def drdb_forward(p: dict, prefix: str, x: Tensor, cfg: NetConfig) -> Tensor:
    """Dilated residual dense block: ``x + dense_block(x)``."""
    return T.add(x, dense_block(p, prefix, x, cfg))


def fusion_weights(p: dict, prefix: str, y: Tensor, x: Tensor, cfg: NetConfig) -> Tensor:
    pooled = T.global_avg_pool(T.concat([y, x], axis=1))
    h = T.leaky_relu(T.linear(pooled, p[prefix + ".mlp0.w"], p[prefix + ".mlp0.b"]), cfg.leaky_slope)
    h = T.leaky_relu(T.linear(h, p[prefix + ".mlp1.w"], p[prefix + ".mlp1.b"]), cfg.leaky_slope)
    return T.sigmoid(T.linear(h, p[prefix + ".mlp2.w"], p[prefix + ".mlp2.b"]))


def feature_aggregator(p: dict, prefix: str, x: Tensor, cfg: NetConfig) -> Tensor:
    """``w * Y + (1 - w) * x`` with ``Y`` the refined features and ``w`` per-channel MLP weights."""
    y = dense_block(p, prefix + ".dense", x, cfg)
    w = fusion_weights(p, prefix, y, x, cfg)
    n, c = w.shape
    w4 = T.reshape(w, (n, c, 1, 1))
    return T.add(x, T.mul(w4, T.add(y, T.neg(x))))


def encoder_decoder(p: dict, prefix: str, x: Tensor, cfg: NetConfig) -> Tensor:
    """Returns 3-channel logits at the input resolution."""
    slope = cfg.leaky_slope
    f = T.leaky_relu(conv(p, prefix + ".in", x), slope)
    skips = []
    for level in range(cfg.encoder_levels + 1):
        if level:
            f = T.leaky_relu(conv(p, f"{prefix}.down{level}", f, stride=2), slope)
        f = drdb_forward(p, f"{prefix}.level{level}.drdb", f, cfg)
        if cfg.use_fa:
            f = feature_aggregator(p, f"{prefix}.level{level}.fa", f, cfg)
        skips.append(f)
    d = skips[-1]
    for level in range(cfg.encoder_levels, 0, -1):
        d = T.leaky_relu(conv(p, f"{prefix}.up{level}", T.upsample_nearest(d, 2)), slope)
        d = T.add(d, skips[level - 1])
    return conv(p, prefix + ".out", d)


def fill_masked(with_mask: Tensor, visible: np.ndarray) -> Tensor:
    """Replace hidden pixels by the mean color of the visible ones."""
    n, _, h, w = with_mask.shape
    nvis = float(visible.sum())
    if nvis == visible.size:
        return with_mask
    means = T.mul(T.global_avg_pool(with_mask), (h * w) / max(nvis, 1.0))
    hidden = (1.0 - visible).astype(with_mask.dtype).reshape(1, 1, h, w)
    return T.add(with_mask, T.mul(T.reshape(means, (n, 3, 1, 1)), hidden))


# --------------------------------------------------------------------------
# full network
# --------------------------------------------------------------------------


def image_to_tensor(img: np.ndarray, dtype=np.float64) -> Tensor:
    return Tensor(np.ascontiguousarray(np.asarray(img, dtype=dtype).transpose(2, 0, 1)[None]))


def tensor_to_image(t: Tensor) -> np.ndarray:
    return np.asarray(t.value[0].transpose(1, 2, 0), dtype=np.float64)


def make_mask(height: int, width: int, ratio: float, seed: int) -> masking.PatchMask:
    if ratio <= 0.0:
        return masking.PatchMask.empty(height, width)
    return masking.generate_mask(width, height, ratio, seed)


def forward_tensors(p: dict, x: Tensor, cfg: NetConfig, mask: masking.PatchMask) -> dict:
    """Differentiable forward pass; returns the intermediate tensors by name."""
    _, _, h, w = x.shape
    if h % 2 or w % 2:
        raise OddDimensions(f"network input must have even dimensions, got {h}x{w}")
    if min(h, w) < MIN_SIDE:
        raise OddDimensions(f"network input must be at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")
    logits = encoder_decoder(p, "ed1", x, cfg)
    if cfg.global_residual:
        logits = T.add(logits, T.logit(x))
    mid = T.sigmoid(logits)
    if not cfg.use_mask_stage:
        return {"mid": mid, "with_mask": mid, "visible": np.ones((h, w)), "out": mid}

    visible = mask.visible_plane().astype(x.dtype)
    with_mask = T.mul(mid, visible.reshape(1, 1, h, w))
    inp = T.concat([with_mask, Tensor(visible.reshape(1, 1, h, w))], axis=1)
    logits2 = encoder_decoder(p, "ed2", inp, cfg)
    if cfg.global_residual:
        base = x if cfg.stage2_base == "input" else fill_masked(with_mask, visible)
        logits2 = T.add(logits2, T.logit(base))
    out = T.sigmoid(logits2)
    return {"mid": mid, "with_mask": with_mask, "visible": visible, "out": out}


class DemoireNet:
    """Network configuration plus its parameter tensors."""

    def __init__(self, cfg: NetConfig = NetConfig(), params: dict | None = None, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = params if params is not None else init_params(cfg, self.dtype)

    def num_parameters(self) -> int:
        return int(sum(t.value.size for t in self.params.values()))

    def forward(self, i_moire: np.ndarray, mask_seed: int, mask_ratio: float | None = None) -> dict:
        ratio = self.cfg.mask_ratio if mask_ratio is None else mask_ratio
        x = image_to_tensor(i_moire, self.dtype)
        mask = make_mask(x.shape[2], x.shape[3], ratio if self.cfg.use_mask_stage else 0.0, mask_seed)
        outs = forward_tensors(self.params, x, self.cfg, mask)
        outs["mask"] = mask
        return outs

    def __call__(self, i_moire: np.ndarray, mask_seed: int = 0, mask_ratio: float | None = None) -> NetOutputs:
        return network_forward(i_moire, self, mask_seed, mask_ratio)

    def restore(self, i_moire: np.ndarray) -> np.ndarray:
        """Inference: run both stages with no patches hidden."""
        return network_forward(i_moire, self, 0, mask_ratio=0.0).i_out


def network_forward(i_moire: np.ndarray, net: DemoireNet, mask_seed: int, mask_ratio: float | None = None) -> NetOutputs:
    outs = net.forward(i_moire, mask_seed, mask_ratio)
    return NetOutputs(
        i_mid=tensor_to_image(outs["mid"]),
        i_with_mask=tensor_to_image(outs["with_mask"]),
        mask=outs["mask"],
        i_out=tensor_to_image(outs["out"]),
    )
