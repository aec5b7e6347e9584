"""``demoire`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from ..errors import DemoireError
from . import ablation, commands
from .config import load_config
from .io import DEFAULT_FRACTIONS, DatasetManifest


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    common.add_argument("--config", default=None, help="JSON config file with synth/train/net sections")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")

    p = argparse.ArgumentParser(prog="demoire", description="Synthetic moire data, toy training and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesize a paired dataset")
    s.add_argument("--input", required=True, help="directory of clean source images")
    s.add_argument("--count", type=int, default=None, help="number of pairs (default: one per source)")
    s.add_argument("--fractions", type=_floats, default=list(DEFAULT_FRACTIONS), help="train,val,test fractions")

    e = sub.add_parser("eval", parents=[common], help="score a restorer on a manifest split")
    e.add_argument("--manifest", help="dataset manifest.json")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--restorer", default="copy-input", help="identity, copy-input or a checkpoint path")
    e.add_argument("--no-reference", metavar="DIR", default=None, help="unpaired images: report channel statistics only")

    t = sub.add_parser("train", parents=[common], help="train on the train split of a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--iters", type=int, default=None, help="iterations (default: train.max_iterations)")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")

    for name, helptext in (("ablate-mask", "sweep the mask ratio"), ("ablate-loss", "sweep loss-term combinations")):
        a = sub.add_parser(name, parents=[common], help=helptext)
        a.add_argument("--manifest", required=True)
        a.add_argument("--split", default="val", choices=("train", "val", "test"), help="evaluation split")
        a.add_argument("--iters", type=int, default=ablation.MIN_BUDGET, help="training iterations per setting")
        if name == "ablate-mask":
            a.add_argument("--ratios", type=_floats, default=list(ablation.MASK_RATIOS))
        else:
            a.add_argument("--combos", type=_names, default=list(ablation.LOSS_COMBOS))

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    g.add_argument("--ops", type=_names, default=None, help="comma-separated op names (default: all)")
    return p


def _say(msg: str) -> None:
    print(msg, flush=True)


def run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)

    if args.command == "synth":
        out = args.out or "dataset"
        m = commands.cmd_synth(args.input, out, cfg.synth, args.count, tuple(args.fractions), args.threads)
        counts = m.split_counts
        _say(f"wrote {len(m.entries)} pairs to {out} (train {counts['train']}, val {counts['val']}, test {counts['test']})")
        return 0

    if args.command == "eval":
        if args.no_reference:
            rows = commands.cmd_eval_noref(args.no_reference, args.out, cfg.train.symmetric_self_loss)
            _say("file,mean_abs_g_minus_r,mean_abs_g_minus_b,self_supervised  (no-reference; not comparable to PSNR/SSIM)")
            for name, gr, gb, ss in rows:
                _say(f"{name},{gr:.6f},{gb:.6f},{ss:.6f}")
            return 0
        if not args.manifest:
            raise DemoireError("eval needs --manifest or --no-reference")
        expect = cfg.net if args.config else None
        rep = commands.cmd_eval(args.manifest, args.split, args.restorer, args.out, args.threads, expect)
        _say("id,psnr_db,ssim")
        for i, p, s in zip(rep.ids, rep.psnr_db, rep.ssim):
            _say(f"{i},{p:.4f},{s:.6f}")
        _say(f"mean,{rep.mean_psnr:.4f},{rep.mean_ssim:.6f}")
        return 0

    if args.command == "train":
        out = args.out or "run"

        def log(it, b):
            if it % 10 == 0:
                _say(f"iter {it}: total {b.total:.5f} (L1 {b.basic:.5f}, S {b.self_supervised:.5f}, P {b.perceptual:.5f}, E {b.edge:.5f})")

        state = commands.cmd_train(args.manifest, cfg, out, args.iters, args.resume, log)
        _say(f"saved checkpoint at iteration {state.iteration} to {out}/checkpoint.npz")
        return 0

    if args.command in ("ablate-mask", "ablate-loss"):
        manifest = DatasetManifest.read(args.manifest)
        train_pairs = commands.manifest_pairs(manifest, "train")
        eval_pairs = commands.load_split(manifest, args.split)
        if args.command == "ablate-mask":
            rep = ablation.ablate_mask_ratio(cfg.net, cfg.train, train_pairs, eval_pairs, args.iters, args.ratios, _say)
        else:
            rep = ablation.ablate_losses(cfg.net, cfg.train, train_pairs, eval_pairs, args.iters, args.combos, _say)
        out = args.out or "ablation"
        rep.write(out)
        _say(f"wrote {out}/ablation_{rep.axis}.json")
        return 0

    if args.command == "gradcheck":
        reports = commands.cmd_gradcheck(args.ops, args.seed or 0, args.out)
        for r in reports:
            _say(f"{r.op}: max rel error {r.max_rel_error:.3e} (tol {r.tolerance:g}) {'PASS' if r.passed else 'FAIL'}")
        return 0 if all(r.passed for r in reports) else 1
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except DemoireError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
