"""Command-line entry point: ``structstyle <subcommand> ...``.

Exit codes: 0 success, 1 operational failure, 2 usage error.
Environment: ``STRUCTSTYLE_MODEL_DIR`` resolves relative ``--model`` paths,
``STRUCTSTYLE_VGG`` supplies the default loss-network weight file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import jsonschema

from . import asset_pipeline, figures, images, loss_network, stylizer
from .errors import StyleError
from .losses import LossWeights, compute_style_targets, pair_key
from .training import CONFIG_SCHEMA, TrainingConfig, train
from .transformer import load_checkpoint

log = logging.getLogger("structstyle")

MODEL_DIR_ENV = "STRUCTSTYLE_MODEL_DIR"
VGG_ENV = "STRUCTSTYLE_VGG"


class UsageError(Exception):
    pass


def parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for part in text.split(","):
        part = part.strip().lower()
        w, sep, h = part.partition("x")
        if not sep or not w.isdigit() or not h.isdigit():
            raise argparse.ArgumentTypeError(f"bad size {part!r}; expected WxH, e.g. 512x288")
        sizes.append((int(w), int(h)))
    return sizes


def _model_path(p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and not path.exists() and os.environ.get(MODEL_DIR_ENV):
        path = Path(os.environ[MODEL_DIR_ENV]) / path
    return path


def _vgg_path(args) -> str:
    p = args.vgg or os.environ.get(VGG_ENV)
    if not p:
        raise UsageError(f"no loss-network weights: pass --vgg or set {VGG_ENV}")
    return p


def _weights(args, base: LossWeights | None = None) -> LossWeights:
    if args.weights:
        w = LossWeights.from_dict(json.loads(Path(args.weights).read_text()))
    else:
        w = base or LossWeights()
    if args.structure_scale is not None:
        w = w.scale_structure(args.structure_scale)
    if args.tv_weight is not None:
        w.tv = args.tv_weight
    if args.content_weight is not None:
        w.content = {k: args.content_weight for k in w.content}
    return w


def _add_weight_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("loss weights")
    g.add_argument("--weights", help="JSON file with content/texture/structure/tv tables")
    g.add_argument("--structure-scale", type=float, help="multiply every structure weight (0 disables the term)")
    g.add_argument("--tv-weight", type=float)
    g.add_argument("--content-weight", type=float)


def cmd_train(args) -> dict:
    overrides = {
        "style": args.style, "corpus": args.corpus, "vgg_weights": args.vgg or os.environ.get(VGG_ENV),
        "out_dir": args.out, "crop_size": args.crop_size, "max_steps": args.steps, "max_seconds": args.seconds,
        "learning_rate": args.lr, "seed": args.seed, "batch_size": args.batch_size,
        "checkpoint_every_steps": args.checkpoint_every, "precision": args.precision,
    }
    if args.config:
        cfg = TrainingConfig.from_file(args.config, **overrides)
    else:
        missing = [f"--{k}" for k in ("style", "corpus", "out") if getattr(args, k) is None]
        if missing:
            raise UsageError(f"train needs {', '.join(missing)} (or --config)")
        if overrides["vgg_weights"] is None:
            raise UsageError(f"no loss-network weights: pass --vgg or set {VGG_ENV}")
        cfg = TrainingConfig(**{k: v for k, v in overrides.items() if v is not None})
    cfg.weights = _weights(args, base=cfg.weights)
    if not Path(cfg.corpus).is_dir():
        raise StyleError(f"corpus directory {cfg.corpus} does not exist")

    def progress(step, rec):
        if step % 10 == 0:
            log.info("step %d total %.4g", step, rec["total"])

    report = train(cfg, progress=progress)
    out = Path(cfg.out_dir)
    figs = [str(figures.loss_curves(report.steps, out / "loss_curves.png"))]
    return {
        "command": "train",
        "steps": len(report.steps),
        "initial_total": report.steps[0]["total"] if report.steps else None,
        "final_total": report.steps[-1]["total"] if report.steps else None,
        "checkpoints": [{k: c[k] for k in ("step", "path", "elapsed", "digest")} for c in report.checkpoints],
        "report": str(out / "report.json"),
        "log": str(out / "train_log.jsonl"),
        "figures": figs,
        "throughput": report.throughput,
    }


def cmd_stylize(args) -> dict:
    ckpt = load_checkpoint(_model_path(args.model))
    img = images.read_image(args.input)
    out = stylizer.stylize(ckpt, img)
    images.write_image(args.output, out)
    return {"command": "stylize", "input": args.input, "output": args.output, "width": int(img.shape[1]),
            "height": int(img.shape[0]), "alpha": img.shape[2] == 4, "model_digest": ckpt.digest}


def cmd_optimize(args) -> dict:
    net = loss_network.load_weights(_vgg_path(args))
    res = stylizer.optimize_image(images.read_image(args.content), images.read_image(args.style), net,
                                  _weights(args), iters=args.iters, step_size=args.step_size, dtype=args.precision)
    images.write_image(args.output, res.image)
    figs = []
    if args.figures:
        figs.append(str(figures.trajectory(res.losses, Path(args.figures) / "optimize_trajectory.png")))
    return {"command": "optimize", "output": args.output, "iters": res.updates, "initial_total": res.losses[0],
            "final_total": res.losses[-1], "final_terms": res.terms[-1], "rejected_steps": res.rejected,
            "figures": figs}


def cmd_restyle_assets(args) -> dict:
    ckpt = load_checkpoint(_model_path(args.model))
    report = asset_pipeline.restyle_assets(args.input, args.output, ckpt, overwrite=args.overwrite,
                                           workers=args.workers)
    if args.report:
        report.write_jsonl(args.report)
    failed = [{"path": e.path, "reason": e.reason} for e in report.entries if e.status == "failed"]
    return {"command": "restyle-assets", "counts": report.counts, "report": args.report, "failed": failed}


def cmd_benchmark(args) -> dict:
    t0 = time.perf_counter()
    ckpt = load_checkpoint(_model_path(args.model))
    load_s = time.perf_counter() - t0
    rep = stylizer.benchmark(ckpt, args.sizes, runs=args.runs)
    rep.load_seconds = load_s
    d = {"command": "benchmark", **rep.to_dict(), "figures": []}
    if args.figures:
        d["figures"].append(str(figures.benchmark_chart(rep.rows, Path(args.figures) / "benchmark.png")))
    return d


def cmd_inspect(args) -> dict:
    net = loss_network.load_weights(_vgg_path(args))
    img = images.read_image(args.input)
    maps = stylizer.inspect_activations(net, img, args.layers.split(","))
    figs = []
    if args.figures:
        figs = [str(p) for p in figures.activation_maps(maps, args.figures, image=img, stem=Path(args.input).stem)]
    layers = [{"layer": k, "height": int(m.shape[0]), "width": int(m.shape[1]), "mean": float(m.mean()),
               "max": float(m.max())} for k, m in maps.items()]
    return {"command": "inspect", "layers": layers, "figures": figs}


def cmd_targets(args) -> dict:
    net = loss_network.load_weights(_vgg_path(args))
    targets = compute_style_targets(net, images.read_image(args.style), _weights(args), style_id=Path(args.style).stem)
    digest = targets.save(args.output)
    return {"command": "targets", "output": args.output, "digest": digest, "style_id": targets.style_id,
            "grams": {k: int(v.shape[0]) for k, v in targets.grams.items()},
            "cross_grams": {pair_key(k): int(v.shape[0]) for k, v in targets.cross_grams.items()}}


def cmd_vgg_convert(args) -> dict:
    digest = loss_network.convert_torchvision(args.torchvision, args.output)
    return {"command": "vgg-convert", "output": args.output, "digest": digest}


def cmd_vgg_surrogate(args) -> dict:
    digest = loss_network.write_surrogate(args.output, seed=args.seed)
    return {"command": "vgg-surrogate", "output": args.output, "digest": digest, "seed": args.seed}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a machine-readable report on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="structstyle", description="Structure-preserving neural style transfer.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    t = sub.add_parser("train", parents=[common], help="train a transformation network for one style")
    t.add_argument("--config", help="TOML training config; flags override its values")
    t.add_argument("--style")
    t.add_argument("--corpus")
    t.add_argument("--out", help="output directory for checkpoints, logs and figures")
    t.add_argument("--vgg", help=f"loss-network weight container (default ${VGG_ENV})")
    t.add_argument("--crop-size", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--seconds", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--precision", choices=["float32", "float64"])
    _add_weight_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("stylize", parents=[common], help="apply a trained checkpoint to one image")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", dest="output", required=True)
    s.set_defaults(func=cmd_stylize)

    o = sub.add_parser("optimize", parents=[common], help="stylize by direct pixel optimisation (no checkpoint)")
    o.add_argument("--content", required=True)
    o.add_argument("--style", required=True)
    o.add_argument("--out", dest="output", required=True)
    o.add_argument("--vgg")
    o.add_argument("--iters", type=int, default=200)
    o.add_argument("--step-size", type=float, default=0.02)
    o.add_argument("--precision", choices=["float32", "float64"], default="float32")
    o.add_argument("--figures", help="directory for the loss-trajectory plot")
    _add_weight_flags(o)
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("restyle-assets", parents=[common], help="restyle an asset directory, keeping alpha masks")
    r.add_argument("--model", required=True)
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", dest="output", required=True)
    r.add_argument("--overwrite", action="store_true")
    r.add_argument("--report", help="write a JSONL per-file report here")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_restyle_assets)

    b = sub.add_parser("benchmark", parents=[common], help="time forward passes at given sizes")
    b.add_argument("--model", required=True)
    b.add_argument("--sizes", type=parse_sizes, default=parse_sizes("512x288,1920x1080"))
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--figures", help="directory for the latency chart")
    b.set_defaults(func=cmd_benchmark)

    i = sub.add_parser("inspect", parents=[common], help="render per-layer activation magnitude maps")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--vgg")
    i.add_argument("--layers", default="relu1_1,relu3_1")
    i.add_argument("--figures", help="directory for the activation images")
    i.set_defaults(func=cmd_inspect)

    g = sub.add_parser("targets", parents=[common], help="precompute style targets into a container file")
    g.add_argument("--style", required=True)
    g.add_argument("--out", dest="output", required=True)
    g.add_argument("--vgg")
    _add_weight_flags(g)
    g.set_defaults(func=cmd_targets)

    c = sub.add_parser("vgg-convert", parents=[common], help="convert a torchvision vgg19 state dict")
    c.add_argument("--torchvision", required=True, help="path to vgg19-*.pth")
    c.add_argument("--out", dest="output", required=True)
    c.set_defaults(func=cmd_vgg_convert)

    v = sub.add_parser("vgg-surrogate", parents=[common], help="write deterministic stand-in VGG19 weights")
    v.add_argument("--out", dest="output", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_vgg_surrogate)
    return p


def _print_human(result: dict) -> None:
    for k, v in result.items():
        if k == "command":
            continue
        if isinstance(v, (list, dict)):
            v = json.dumps(v)
            if len(v) > 200:
                v = v[:197] + "..."
        print(f"{k}: {v}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help (0) or an argparse usage error (2)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"structstyle {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except jsonschema.ValidationError as exc:
        print(f"structstyle {args.command}: invalid training config: {exc.message}", file=sys.stderr)
        print(json.dumps(CONFIG_SCHEMA, indent=1), file=sys.stderr)
        return 2
    except (StyleError, OSError, ValueError, KeyError) as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result))
    else:
        _print_human(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
