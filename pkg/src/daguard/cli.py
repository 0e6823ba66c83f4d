"""Command-line entry point: ``daguard <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import jsonschema

from . import idx
from .attack import extract_scores, fit_threshold, read_scores_csv, write_scores_csv
from .data import Domain
from .experiment import (
    ExperimentConfig,
    build_datasets,
    format_summary,
    read_records_csv,
    run_experiment,
    split_all,
    summarize,
    with_overrides,
    write_summary_csv,
)
from .imaging import DEFAULT_SEVERITY, PERTURBATIONS, perturb, similarity
from .metrics import (
    embed2d,
    generalization_errors,
    prediction_distributions,
    write_embedding_csv,
    write_gen_errors_csv,
    write_pred_dist_csv,
)
from .numcore import load_model, make_rng, save_model
from .trainers import METHODS, DaJob, train

log = logging.getLogger("daguard")


def _load_config(args, kind: str = "q1_effectiveness") -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(kind=kind)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = [args.seed]
    if getattr(args, "method", None):
        overrides["methods"] = args.method
    train_over = dict(cfg.train)
    if getattr(args, "lambda_mmd", None) is not None:
        train_over["lambda_mmd"] = args.lambda_mmd
    if getattr(args, "epochs", None) is not None:
        train_over["epochs"] = args.epochs
    if train_over != cfg.train:
        overrides["train"] = train_over
    if getattr(args, "kind", None):
        sev = {} if args.severity is None else {"severity": args.severity}
        overrides["sweep"] = {**cfg.sweep, "perturbations": [{"kind": args.kind, **sev}]}
    return with_overrides(cfg, **overrides) if overrides else cfg


def _splits(cfg: ExperimentConfig, seed: int):
    return split_all(build_datasets(cfg.data, seed, (cfg.source, cfg.target)), cfg.data, seed)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    method = args.method[0] if args.method else cfg.methods[-1]
    splits = _splits(cfg, seed)
    job = DaJob(splits.get(cfg.source, splits[cfg.target]), splits[cfg.target], method, cfg.train_config(method, seed))
    art = train(job)
    save_model(args.out, art.model, {"method": method, "seed": seed, "source": cfg.source, "target": cfg.target})
    last = art.history[-1]
    print(f"saved {args.out} ({method}, {len(art.history)} epochs, final "
          + ", ".join(f"{k}={v:.6f}" for k, v in last.items() if k != "epoch") + ")")
    return 0


def _print_report(rep) -> None:
    print(f"p_thresh={rep.p_thresh:.6f}")
    print(f"p_inference={rep.p_inference:.6f}")
    print(f"adv_mi={rep.adv_mi:.6f}")
    print(f"plain_accuracy={rep.plain_accuracy:.6f}")
    print(f"n_members={rep.n_members} n_nonmembers={rep.n_nonmembers}")


def cmd_attack(args) -> int:
    if args.scores:
        scores = read_scores_csv(args.scores)
    else:
        if not args.model:
            raise ValueError("attack needs --scores or --model")
        model, meta = load_model(args.model)
        cfg = _load_config(args)
        seed = meta.get("seed", cfg.seeds[0]) if args.seed is None else args.seed
        split = _splits(cfg, seed)[cfg.source if args.side == "source" else cfg.target]
        scores = extract_scores(model, split.train, split.non_train)
    if args.export_scores:
        write_scores_csv(args.export_scores, scores)
    _print_report(fit_threshold(scores))
    return 0


def cmd_metrics(args) -> int:
    model, meta = load_model(args.model)
    cfg = _load_config(args)
    seed = meta.get("seed", cfg.seeds[0]) if args.seed is None else args.seed
    split = _splits(cfg, seed)[cfg.target]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cats = [int(c) for c in args.categories.split(",")] if args.categories else None
    gen = generalization_errors(model, split)
    write_gen_errors_csv(out / "gen_errors.csv", gen)
    write_pred_dist_csv(out / "pred_dist.csv", prediction_distributions(model, split, cats))
    write_embedding_csv(out / "embedding.csv", embed2d(model, [split.train, split.non_train], membership=[True, False]))
    print(f"mean gen_error={gen.mean_gen_error:.6f} (undefined categories: {gen.n_undefined}); wrote {out}")
    return 0


def cmd_perturb(args) -> int:
    ds = idx.load_idx(args.images, args.labels)
    out = perturb(ds, args.kind, args.severity, make_rng(args.seed))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    idx.write_images(f"{prefix}-images.idx3-ubyte", out.images())
    if out.labels is not None:
        idx.write_labels(f"{prefix}-labels.idx1-ubyte", out.labels)
    print(f"wrote {prefix}-images.idx3-ubyte ({len(out)} images, {args.kind})")
    return 0


def _domain_from_path(path: str) -> Domain:
    p = Path(path)
    files = sorted(f for f in p.iterdir() if f.is_file() and idx.is_idx_images(f)) if p.is_dir() else [p]
    if not files:
        raise ValueError(f"no IDX image files in {path}")
    return Domain(tuple(idx.load_idx(f) for f in files))


def cmd_similarity(args) -> int:
    print(f"{similarity(_domain_from_path(args.a), _domain_from_path(args.b)):.6f}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.out
    records = run_experiment(cfg, out)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records ({failed} failed) -> {Path(out) / 'records.csv'}")
    return 0


def cmd_report(args) -> int:
    rows = summarize(read_records_csv(args.records))
    print(format_summary(rows))
    if args.out:
        write_summary_csv(args.out, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daguard", description="Domain-adaptation defenses against membership inference.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_method=True):
        p.add_argument("--config", help="experiment JSON config (data, train parameters)")
        p.add_argument("--seed", type=int)
        if with_method:
            p.add_argument("--method", action="append", choices=METHODS)
            p.add_argument("--lambda", dest="lambda_mmd", type=float)
            p.add_argument("--epochs", type=int)

    p = sub.add_parser("train", help="train one model and save it")
    add_common(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="threshold membership inference")
    add_common(p, with_method=False)
    p.add_argument("--model")
    p.add_argument("--scores", help="CSV with columns score,is_member")
    p.add_argument("--side", choices=["target", "source"], default="target")
    p.add_argument("--export-scores")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("metrics", help="generalization gaps, prediction distributions, 2-D embedding")
    add_common(p, with_method=False)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="directory for CSV output")
    p.add_argument("--categories", help="comma-separated category ids")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("perturb", help="perturb an IDX image set")
    p.add_argument("--images", required=True)
    p.add_argument("--labels")
    p.add_argument("--kind", required=True, choices=PERTURBATIONS)
    p.add_argument("--severity", type=float, help=f"defaults: {DEFAULT_SEVERITY}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("similarity", help="pHash similarity of two image domains")
    p.add_argument("--a", required=True, help="IDX image file or directory of them")
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("experiment", help="run a full experiment from a config")
    add_common(p)
    p.add_argument("--out")
    p.add_argument("--kind", choices=PERTURBATIONS, help="override the perturbation sweep")
    p.add_argument("--severity", type=float)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--out", help="write summary CSV here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, TypeError, jsonschema.ValidationError) as exc:
        print(f"daguard {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
