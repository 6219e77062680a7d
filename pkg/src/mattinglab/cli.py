"""Command-line surface: gen, train-classifier, train-discriminator, trimap,
train, eval, stats, ablate, gradcheck.

Every run writes a ``run_manifest.json`` into its output directory recording
the subcommand, a hash of the effective configuration, the seed, and the
package version, so identical deterministic runs produce byte-identical
artifacts. Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics, semantics, synth, training
from .verification import operator_suite, loss_suite

OUT_ROOT_ENV = "MATTINGLAB_OUT"


class CliError(ValueError):
    pass


def _out_dir(args):
    root = Path(getattr(args, "out", None) or os.environ.get(OUT_ROOT_ENV, "."))
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_manifest(out_dir, command, config, seed, artifacts):
    blob = json.dumps(config, sort_keys=True).encode()
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "config": config,
        "seed": seed,
        "version": __version__,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _load_config(args):
    cfg = training.TrainConfig()
    if getattr(args, "config", None):
        cfg = training.TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
    for key in ("seed", "steps", "batch_size"):
        v = getattr(args, key.replace("_", "-").replace("-", "_"), None)
        if v is not None:
            setattr(cfg, key, v)
    return cfg


def _bar_svg(path, labels, values, title, width=480, height=260):
    """Tiny static SVG bar chart (no plotting dependency at run time)."""
    vmax = max(values) if values else 1.0
    n = max(len(values), 1)
    bw = (width - 60) / n
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="10" y="16" font-size="13">{title}</text>']
    for i, (lb, v) in enumerate(zip(labels, values)):
        h = 0 if vmax == 0 else (height - 70) * (v / vmax)
        x = 40 + i * bw
        y = height - 40 - h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bw * 0.8:.1f}" '
                     f'height="{h:.1f}" fill="#4878a8"/>')
        parts.append(f'<text x="{x:.1f}" y="{height - 24}" font-size="10">{lb}</text>')
        parts.append(f'<text x="{x:.1f}" y="{y - 4:.1f}" font-size="10">{v:.3g}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args):
    out = _out_dir(args)
    catalog = synth.ClassCatalog()
    if args.classes != catalog.n:
        catalog = synth.ClassCatalog(names=catalog.names[:args.classes])
    manifest = synth.generate_dataset(out, count=args.count, seed=args.seed,
                                      size=args.size, catalog=catalog,
                                      background_dir=args.backgrounds)
    _write_manifest(out, "gen", {"count": args.count, "size": args.size,
                                 "classes": list(catalog.names)},
                    args.seed, [out / "manifest.json"])
    print(f"wrote {len(manifest['samples'])} samples to {out}")
    return 0


def _train_patch(args, trainer, default_ckpt):
    out = _out_dir(args)
    cfg = _load_config(args)
    log_path = out / "train_log.jsonl"
    res = trainer(args.data, cfg, log_path=log_path)
    ckpt = out / (args.ckpt_name or default_ckpt)
    training.save_checkpoint(ckpt, res.graph, step=cfg.steps, config=cfg.as_dict())
    curve_path = out / "accuracy_curve.json"
    curve_path.write_text(json.dumps(res.accuracy_curve, indent=2, sort_keys=True))
    _write_manifest(out, args.command, cfg.as_dict(), cfg.seed,
                    [ckpt, log_path, curve_path])
    print(f"held-out accuracy {res.accuracy:.3f}; checkpoint {ckpt}")
    return 0


def cmd_train_classifier(args):
    return _train_patch(args, training.train_classifier, "classifier.ckpt")


def cmd_train_discriminator(args):
    return _train_patch(args, training.train_discriminator, "discriminator.ckpt")


def cmd_trimap(args):
    classifier = training.restore_graph(training.load_checkpoint(args.classifier))
    built = training.ensure_score_maps(args.data, classifier, split=args.split,
                                       force=args.force)
    print(f"built score maps for {built} samples under {args.data}")
    return 0


def cmd_train(args):
    out = _out_dir(args)
    cfg = _load_config(args)
    classifier = discriminator = None
    if cfg.use_scores:
        if not args.classifier:
            raise CliError("config enables the semantic trimap; pass --classifier")
        classifier = training.restore_graph(training.load_checkpoint(args.classifier))
    if cfg.use_discriminator:
        if not args.discriminator:
            raise CliError("config enables discriminator losses; pass --discriminator")
        discriminator = training.restore_graph(training.load_checkpoint(args.discriminator))
    log_path = out / "train_log.jsonl"
    res = training.train_matting(args.data, cfg, classifier=classifier,
                                 discriminator=discriminator, log_path=log_path)
    ckpt = out / "matting.ckpt"
    training.save_checkpoint(ckpt, res.graph, step=cfg.steps, config=cfg.as_dict())
    report_path = out / "report.json"
    report_path.write_text(res.report.to_json(indent=2))
    _write_manifest(out, "train", cfg.as_dict(), cfg.seed,
                    [ckpt, log_path, report_path])
    print(json.dumps(res.report.overall, sort_keys=True))
    return 0


def cmd_eval(args):
    root = Path(args.gt)
    manifest = synth.load_manifest(root)
    names = manifest["classes"]
    per_sample, labels = [], []
    for entry in manifest["samples"]:
        if args.split and entry["split"] != args.split:
            continue
        pred_path = Path(args.pred) / f"{entry['id']}.png"
        if not pred_path.exists():
            raise CliError(f"missing prediction {pred_path}")
        from . import imaging
        pred = imaging.load_gray_png(pred_path)
        sample = synth.load_sample(root / entry["id"])
        per_sample.append(metrics.evaluate_pair(pred, sample.alpha,
                                                sample.regions.unknown))
        labels.append(entry["class_label"])
    if not per_sample:
        raise CliError("no samples evaluated")
    report = metrics.class_report(per_sample, labels, names)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(report.to_json(indent=2))
    print(json.dumps(report.overall, sort_keys=True))
    return 0


def cmd_stats(args):
    out = _out_dir(args)
    root = Path(args.data)
    manifest = synth.load_manifest(root)
    names = manifest["classes"]
    triples = []
    for entry in manifest["samples"]:
        s = synth.load_sample(root / entry["id"])
        triples.append((s.alpha, s.regions.unknown, s.class_label))
    rep = metrics.dataset_stats(triples, names)
    path = out / "stats.json"
    path.write_text(rep.to_json(indent=2))
    artifacts = [path]
    if args.svg:
        for axis in ("alpha_ratio", "mean_gradient"):
            svg = out / f"stats_{axis}.svg"
            _bar_svg(svg, list(rep.per_class),
                     [rep.per_class[n][f"{axis}_mean"] for n in rep.per_class],
                     f"per-class {axis}")
            artifacts.append(svg)
    _write_manifest(out, "stats", {"data": str(args.data)}, manifest.get("seed"),
                    artifacts)
    print(f"stats for {len(triples)} samples -> {path}")
    return 0


def cmd_ablate(args):
    out = _out_dir(args)
    cfg = _load_config(args)
    classifier = training.restore_graph(training.load_checkpoint(args.classifier))
    discriminator = training.restore_graph(training.load_checkpoint(args.discriminator))
    seeds = tuple(int(s) for s in args.seeds.split(","))
    table = training.run_ablation(args.data, cfg, classifier, discriminator,
                                  seeds=seeds, log_dir=out)
    path = out / "ablation.json"
    path.write_text(json.dumps(table, indent=2, sort_keys=True))
    csv_path = out / "ablation.csv"
    rows = ["config,sad,mse_e3,grad,conn"]
    for name, _ in training.ABLATION_ROWS:
        m = table[name]["median"]
        rows.append(f"{name},{m['sad']:.4f},{m['mse_e3']:.4f},{m['grad']:.4f},{m['conn']:.4f}")
    csv_path.write_text("\n".join(rows) + "\n")
    artifacts = [path, csv_path]
    if args.svg:
        svg = out / "ablation_sad.svg"
        _bar_svg(svg, [n for n, _ in training.ABLATION_ROWS],
                 [table[n]["median"]["sad"] for n, _ in training.ABLATION_ROWS],
                 "held-out SAD by configuration")
        artifacts.append(svg)
    _write_manifest(out, "ablate", cfg.as_dict(), cfg.seed, artifacts)
    print((Path(csv_path)).read_text())
    return 0


def cmd_gradcheck(args):
    worst_op, op_rows = operator_suite(instances=args.instances, seed=args.seed)
    worst_loss, loss_rows = loss_suite(seed=args.seed)
    for name, err, kinks in op_rows:
        print(f"op  {name:16s} max_rel_err {err:.3e}  kinks {kinks}")
    for name, err in loss_rows:
        print(f"loss {name:15s} max_rel_err {err:.3e}")
    ok = worst_op < args.op_tolerance and worst_loss < args.loss_tolerance
    print(f"worst operator {worst_op:.3e} (tol {args.op_tolerance}), "
          f"worst loss {worst_loss:.3e} (tol {args.loss_tolerance}): "
          + ("PASS" if ok else "FAIL"))
    return 0 if ok else 2


def build_parser():
    p = argparse.ArgumentParser(prog="mattinglab", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--classes", type=int, default=6)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=160)
    g.add_argument("--backgrounds", default=None, help="optional PNG directory")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    for name, fn in (("train-classifier", cmd_train_classifier),
                     ("train-discriminator", cmd_train_discriminator)):
        t = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a dataset")
        t.add_argument("--data", required=True)
        t.add_argument("--config", default=None)
        t.add_argument("--seed", type=int, default=None)
        t.add_argument("--steps", type=int, default=None)
        t.add_argument("--batch-size", type=int, default=None, dest="batch_size")
        t.add_argument("--ckpt-name", default=None)
        t.add_argument("--out", required=True)
        t.set_defaults(fn=fn)

    t = sub.add_parser("trimap", help="build semantic score maps for a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--classifier", required=True)
    t.add_argument("--split", default=None)
    t.add_argument("--force", action="store_true")
    t.set_defaults(fn=cmd_trimap)

    t = sub.add_parser("train", help="train the matting network")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--classifier", default=None)
    t.add_argument("--discriminator", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate predicted mattes against a dataset")
    e.add_argument("--pred", required=True, help="directory of <id>.png mattes")
    e.add_argument("--gt", required=True, help="dataset directory")
    e.add_argument("--split", default=None)
    e.add_argument("--report", required=True)
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("stats", help="per-class alpha statistics")
    s.add_argument("--data", required=True)
    s.add_argument("--svg", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_stats)

    a = sub.add_parser("ablate", help="run the four-row toggle ablation")
    a.add_argument("--data", required=True)
    a.add_argument("--config", default=None)
    a.add_argument("--classifier", required=True)
    a.add_argument("--discriminator", required=True)
    a.add_argument("--seeds", default="0,1,2")
    a.add_argument("--svg", action="store_true")
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_ablate)

    c = sub.add_parser("gradcheck", help="operator and loss gradient sweep")
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--op-tolerance", type=float, default=1e-5)
    c.add_argument("--loss-tolerance", type=float, default=1e-5)
    c.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (CliError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # runtime failure
        print(f"runtime failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
