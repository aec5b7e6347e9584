"""Controlled toy-budget sweeps over mask ratio, loss terms and network components.

Every setting starts from the same seeds, trains for the same number of
iterations on the same pairs and is scored on the same held-out pairs. The
report records raw numbers only; nothing here decides which setting wins.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, UnwritableOutput
from ..losses import LossBreakdown, LossWeights
from ..metrics import MetricReport
from ..net import train as trainer
from ..net.model import NetConfig
from . import report
from .commands import evaluate_pairs, mean_breakdown

AXES = ("mask_ratio", "loss_combo", "components")
MASK_RATIOS = (0.15, 0.3, 0.45, 0.6, 0.75, 0.85)
LOSS_COMBOS = ("B", "B+S", "B+P", "B+E", "B+S+P", "B+S+E", "B+E+P", "all")
COMPONENTS = ("base", "FA", "ME", "FA+ME")
MIN_BUDGET = 100
TAIL = 10  # the loss breakdown is averaged over this many final steps


@dataclass
class AblationReport:
    axis: str
    settings: list[str]
    metrics: list[MetricReport]
    losses: list[LossBreakdown]
    runtime_s: list[float]
    iterations: int
    eval_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown ablation axis {self.axis!r}")
        if not self.settings:
            raise ConfigError("an ablation needs at least one setting")
        if not len(self.settings) == len(self.metrics) == len(self.losses) == len(self.runtime_s):
            raise ConfigError("ablation report lists have different lengths")

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "iterations": self.iterations,
            "eval_ids": self.eval_ids,
            "entries": [
                {"setting": s, "metrics": m.to_dict(), "loss": b.to_dict(), "runtime_s": t}
                for s, m, b, t in zip(self.settings, self.metrics, self.losses, self.runtime_s)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationReport":
        e = d["entries"]
        return cls(
            axis=d["axis"],
            settings=[x["setting"] for x in e],
            metrics=[MetricReport.from_dict(x["metrics"]) for x in e],
            losses=[LossBreakdown(**x["loss"]) for x in e],
            runtime_s=[float(x["runtime_s"]) for x in e],
            iterations=int(d["iterations"]),
            eval_ids=list(d["eval_ids"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AblationReport":
        return cls.from_dict(json.loads(text))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"ablation_{self.axis}.json").write_text(self.to_json())
        except OSError as exc:
            raise UnwritableOutput(f"cannot write to {out}: {exc}") from exc
        rows = [
            [s, m.mean_psnr, m.mean_ssim, b.basic, b.self_supervised, b.perceptual, b.edge, b.total, t]
            for s, m, b, t in zip(self.settings, self.metrics, self.losses, self.runtime_s)
        ]
        header = ["setting", "mean_psnr_db", "mean_ssim", "basic", "self_supervised", "perceptual", "edge", "total", "runtime_s"]
        report.write_csv(out / f"ablation_{self.axis}.csv", header, rows)
        report.plot_ablation(
            self.settings,
            [m.mean_psnr for m in self.metrics],
            [m.mean_ssim for m in self.metrics],
            out / f"ablation_{self.axis}.png",
            f"{self.axis} sweep, {self.iterations} iterations",
        )


def combo_weights(combo: str, full: LossWeights = LossWeights()) -> LossWeights:
    """Zero the weights of the terms missing from ``combo`` (B is always on)."""
    if combo == "all":
        return full
    terms = combo.split("+")
    if combo not in LOSS_COMBOS or terms[0] != "B":
        raise ConfigError(f"unknown loss combo {combo!r}; choose from {LOSS_COMBOS}")
    return LossWeights(
        full.lambda_s if "S" in terms else 0.0,
        full.lambda_p if "P" in terms else 0.0,
        full.lambda_edge if "E" in terms else 0.0,
    )


def component_config(setting: str, net: NetConfig) -> NetConfig:
    if setting not in COMPONENTS:
        raise ConfigError(f"unknown component setting {setting!r}; choose from {COMPONENTS}")
    return dataclasses.replace(net, use_fa="FA" in setting, use_mask_stage="ME" in setting)


def run_sweep(axis: str, settings, configure, train_pairs, eval_pairs, iterations: int, log=None) -> AblationReport:
    """Train and evaluate one model per setting.

    ``configure(setting) -> (NetConfig, TrainConfig)``; ``eval_pairs`` is a
    list of (id, clean, moire).
    """
    if iterations < MIN_BUDGET:
        raise ConfigError(f"ablation budget must be at least {MIN_BUDGET} iterations, got {iterations}")
    settings = [str(s) for s in settings]
    metrics, breakdowns, runtimes = [], [], []
    for setting in settings:
        t0 = time.perf_counter()
        net_cfg, train_cfg = configure(setting)
        state = trainer.TrainState.create(net_cfg, train_cfg)
        history = trainer.train(train_pairs, state, iterations)
        rep, _ = evaluate_pairs(eval_pairs, lambda moire, clean: state.net.restore(moire))
        metrics.append(rep)
        breakdowns.append(mean_breakdown(history[-TAIL:]))
        runtimes.append(time.perf_counter() - t0)
        if log is not None:
            log(f"{axis}={setting}: PSNR {rep.mean_psnr:.3f} dB, SSIM {rep.mean_ssim:.4f}, {runtimes[-1]:.1f} s")
    return AblationReport(axis, settings, metrics, breakdowns, runtimes, iterations, [p[0] for p in eval_pairs])


def ablate_mask_ratio(net: NetConfig, tcfg: trainer.TrainConfig, train_pairs, eval_pairs, iterations, ratios=MASK_RATIOS, log=None):
    def configure(r):
        return dataclasses.replace(net, mask_ratio=float(r)), tcfg

    return run_sweep("mask_ratio", [f"{float(r):g}" for r in ratios], configure, train_pairs, eval_pairs, iterations, log)


def ablate_losses(net: NetConfig, tcfg: trainer.TrainConfig, train_pairs, eval_pairs, iterations, combos=LOSS_COMBOS, log=None):
    def configure(c):
        return net, dataclasses.replace(tcfg, weights=combo_weights(c, tcfg.weights))

    return run_sweep("loss_combo", combos, configure, train_pairs, eval_pairs, iterations, log)


def ablate_components(net: NetConfig, tcfg: trainer.TrainConfig, train_pairs, eval_pairs, iterations, settings=COMPONENTS, log=None):
    def configure(s):
        return component_config(s, net), tcfg

    return run_sweep("components", settings, configure, train_pairs, eval_pairs, iterations, log)
