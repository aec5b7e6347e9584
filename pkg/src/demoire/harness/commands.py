"""Implementations behind the command line subcommands."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import losses, synth
from ..errors import ConfigError, MissingFiles, UnwritableOutput
from ..metrics import MetricReport
from ..net import train as trainer
from ..net.gradcheck import REGISTRY, gradient_check
from ..net.model import NetConfig
from ..prng import item_seed
from . import report
from .config import RunConfig, dump_config
from .io import DEFAULT_FRACTIONS, DatasetManifest, ManifestEntry, assign_splits, list_images, read_image, write_png

BUILTIN_RESTORERS = ("identity", "copy-input")


def _map(fn, items, threads: int):
    """Ordered map; results do not depend on the thread count."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableOutput(f"cannot create {out}: {exc}") from exc
    return out


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------


def cmd_synth(
    input_dir, output_dir, cfg: synth.SynthConfig, count: int | None = None, fractions=DEFAULT_FRACTIONS, threads: int = 1
) -> DatasetManifest:
    """Synthesize ``count`` pairs (cycling over the sorted inputs) and write PNGs plus ``manifest.json``."""
    sources = list_images(input_dir)
    count = len(sources) if count is None else count
    if count < 1:
        raise ConfigError("count must be positive")
    out = _prepare_out(output_dir)
    labels = assign_splits(count, cfg.seed, fractions)

    def make(i: int) -> ManifestEntry:
        src = read_image(sources[i % len(sources)])
        seed = item_seed(cfg.seed, i)
        pair = synth.synthesize_pair(src, cfg, seed)
        ident = f"{i:05d}"
        clean_rel, moire_rel = f"clean/{ident}.png", f"moire/{ident}.png"
        write_png(out / clean_rel, pair.clean)
        write_png(out / moire_rel, pair.moire)
        return ManifestEntry(ident, clean_rel, moire_rel, labels[i], seed)

    entries = _map(make, range(count), threads)
    manifest = DatasetManifest(cfg.seed, cfg, entries, root=out)
    manifest.write(out / "manifest.json")
    return manifest


# --------------------------------------------------------------------------
# restorers and eval
# --------------------------------------------------------------------------


def load_restorer(spec: str, expect_net: NetConfig | None = None):
    """``fn(moire, clean) -> restored`` for a builtin name or a checkpoint path."""
    if spec == "identity":
        return lambda moire, clean: clean.copy()
    if spec == "copy-input":
        return lambda moire, clean: moire.copy()
    path = Path(spec)
    if not path.is_file():
        raise MissingFiles(f"restorer must be one of {BUILTIN_RESTORERS} or a checkpoint file, got {spec!r}")
    state = trainer.load_checkpoint(path, expect_net)
    return lambda moire, clean: state.net.restore(moire)


def evaluate_pairs(pairs, restore, threads: int = 1) -> tuple[MetricReport, list]:
    """``pairs`` is a list of (id, clean, moire). Returns the report and restored images."""

    def run(item):
        ident, clean, moire = item
        return restore(moire, clean)

    restored = _map(run, pairs, threads)
    rep = MetricReport()
    for (ident, clean, _), out in zip(pairs, restored):
        rep.add(ident, out, clean)
    return rep, restored


def load_split(manifest: DatasetManifest, split: str) -> list:
    manifest.validate()
    entries = manifest.select(split)
    if not entries:
        raise ConfigError(f"split {split!r} is empty")
    return [(e.id, *manifest.load_pair(e)) for e in entries]


def cmd_eval(
    manifest_path, split: str, restorer: str, out_dir=None, threads: int = 1, expect_net: NetConfig | None = None
) -> MetricReport:
    manifest = DatasetManifest.read(manifest_path)
    pairs = load_split(manifest, split)
    restore = load_restorer(restorer, expect_net)
    rep, restored = evaluate_pairs(pairs, restore, threads)
    if out_dir is not None:
        out = _prepare_out(out_dir)
        report.write_csv(out / "metrics.csv", ["id", "psnr_db", "ssim"], report.metric_rows(rep))
        (out / "metrics.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
        name = Path(restorer).name
        report.plot_metrics(rep, out / "metrics.png", f"{name} on {split} split")
        shown = [(i, m, r, c) for (i, c, m), r in list(zip(pairs, restored))[:3]]
        report.plot_examples(shown, out / "examples.png")
    return rep


def cmd_eval_noref(input_dir, out_dir=None, symmetric: bool = False) -> list[tuple[str, float, float, float]]:
    """Unpaired images: per-image mean |G-R|, mean |G-B| and the self-supervised statistic.

    These numbers are a channel-consistency diagnostic only and are not
    comparable with PSNR or SSIM.
    """
    rows = []
    for p in list_images(input_dir):
        img = read_image(p)
        gr, gb = losses.channel_gaps(img)
        rows.append((p.name, gr, gb, losses.self_supervised_loss(img, symmetric)))
    if out_dir is not None:
        out = _prepare_out(out_dir)
        report.write_csv(out / "noref.csv", ["file", "mean_abs_g_minus_r", "mean_abs_g_minus_b", "self_supervised"], [list(r) for r in rows])
    return rows


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def manifest_pairs(manifest: DatasetManifest, split: str) -> list[synth.MoirePair]:
    out = []
    for ident, clean, moire in load_split(manifest, split):
        out.append(synth.MoirePair(clean, moire, manifest.config_snapshot, 0, {"id": ident}))
    return out


def cmd_train(
    manifest_path, cfg: RunConfig, out_dir, iterations: int | None = None, resume=None, log=None
) -> trainer.TrainState:
    manifest = DatasetManifest.read(manifest_path)
    pairs = manifest_pairs(manifest, "train")
    if resume is not None:
        state = trainer.load_checkpoint(resume, cfg.net)
    else:
        state = trainer.TrainState.create(cfg.net, cfg.train)
    history = trainer.train(pairs, state, iterations, log)
    out = _prepare_out(out_dir)
    trainer.save_checkpoint(state, out / "checkpoint.npz")
    (out / "config.json").write_text(dump_config(cfg))
    start = state.iteration - len(history)
    report.write_csv(
        out / "losses.csv",
        ["iteration", "basic", "self_supervised", "perceptual", "edge", "total"],
        [[start + k + 1, b.basic, b.self_supervised, b.perceptual, b.edge, b.total] for k, b in enumerate(history)],
    )
    if history:
        report.plot_loss_curve([b.total for b in history], out / "losses.png")
    return state


# --------------------------------------------------------------------------
# gradcheck
# --------------------------------------------------------------------------


def cmd_gradcheck(ops=None, seed: int = 0, out_dir=None) -> list:
    ops = list(REGISTRY) if not ops else ops
    reports = [gradient_check(op, seed=seed) for op in ops]
    if out_dir is not None:
        out = _prepare_out(out_dir)
        report.write_csv(
            out / "gradcheck.csv",
            ["op", "max_rel_error", "tolerance", "passed", "n_coords", "kink_skips"],
            [[r.op, r.max_rel_error, r.tolerance, r.passed, r.n_coords, r.kink_skips] for r in reports],
        )
    return reports


def mean_breakdown(history) -> losses.LossBreakdown:
    keys = ("basic", "self_supervised", "perceptual", "edge", "total")
    vals = {k: float(np.mean([getattr(b, k) for b in history])) for k in keys}
    return losses.LossBreakdown(**vals)
