"""Command-line surface for the pipeline.

Subcommands: scan, clean, synth, train, dump-logits, optimize-weights,
evaluate. Every failure exits nonzero with a single machine-parsable line
``error[Code]: message`` on stderr. Commands that write into an output
directory echo the fully resolved configuration (flag > config file >
built-in default) plus the random seed as ``run_config.json``, which is
enough to reproduce the run in deterministic mode.

Config file: JSON with optional sections ``preprocess``, ``synth``,
``train``, and ``ensemble``; keys mirror the corresponding flags with
underscores (e.g. ``{"train": {"learning_rate": 0.001}}``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .backbones import BACKBONE_KINDS, BackboneSpec, build_model, forward_logits
from .data_ingest import (
    clean_dataset,
    load_manifest,
    save_manifest,
    scan_dataset,
    split_train_holdout,
)
from .errors import LabelMismatch, MemberMissing, PipelineError
from .fusion import (
    EnsembleSpec,
    denconrest_spec,
    denconst_spec,
    fusion_objective,
    normalize_weights,
    optimize_weights,
    read_logit_csv,
    write_logit_csv,
)
from .metrics import emit_report, evaluate_ensemble, evaluate_model
from .preprocess import PreprocessConfig
from .synthetic import SynthesisConfig, generate_corpus
from .trainer import (
    TrainConfig,
    load_records_as_tensors,
    load_checkpoint,
    peek_checkpoint_spec,
    train,
)

logger = logging.getLogger(__name__)

PRESETS = {"denconst": denconst_spec, "denconrest": denconrest_spec}


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"config file must hold a JSON object: {path}")
    return raw


def _resolve(flag_value, file_cfg: dict, section: str, key: str, default):
    """Precedence: explicit flag > config-file entry > built-in default."""
    if flag_value is not None:
        return flag_value
    if key in file_cfg.get(section, {}):
        return file_cfg[section][key]
    return default


def _write_run_config(outdir: Path, resolved: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run_config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def _preprocess_config(args, file_cfg: dict) -> PreprocessConfig:
    section = file_cfg.get("preprocess", {})
    return PreprocessConfig(
        target_size=int(section.get("target_size", 224)),
        channel_mean=tuple(section.get("channel_mean", (0.485, 0.456, 0.406))),
        channel_std=tuple(section.get("channel_std", (0.229, 0.224, 0.225))),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_scan(args) -> int:
    manifest = scan_dataset(args.root, verify=not args.no_verify,
                            workers=args.workers)
    out = Path(args.out)
    save_manifest(manifest, out)
    print(f"manifest: {out}")
    for split, by_class in manifest.counts.items():
        for label, n in by_class.items():
            print(f"  {split}/{label}: {n}")
    flagged = manifest.flagged_records()
    if flagged:
        print(f"  flagged (corrupted/unreadable): {len(flagged)}")
    return 0


def cmd_clean(args) -> int:
    manifest = scan_dataset(args.root, verify=True, workers=args.workers)
    report = clean_dataset(manifest, mode=args.mode)
    print(f"mode: {report.mode}")
    print(f"removed: {report.removed}")
    for rid, reason in sorted(report.reasons.items()):
        print(f"  {reason}: {rid}")
    return 0


def cmd_synth(args) -> int:
    file_cfg = _load_config_file(args.config)
    sec = "synth"
    config = SynthesisConfig(
        per_class_train=args.per_class_train,
        per_class_test=args.per_class_test,
        image_size=_resolve(args.image_size, file_cfg, sec, "image_size", 256),
        follicle_count_range=tuple(
            _resolve(args.follicle_count, file_cfg, sec,
                     "follicle_count_range", (3, 12))
        ),
        follicle_radius_range=tuple(
            _resolve(args.follicle_radius, file_cfg, sec,
                     "follicle_radius_range", (6, 18))
        ),
        speckle_grain=_resolve(args.speckle_grain, file_cfg, sec,
                               "speckle_grain", 2.0),
        seed=args.seed,
    )
    outdir = Path(args.out)
    manifest = generate_corpus(config, outdir)
    _write_run_config(outdir, {"command": "synth", "seed": args.seed,
                               "synthesis": config.__dict__})
    total = sum(sum(v.values()) for v in manifest.counts.values())
    print(f"generated {total} images under {outdir}")
    return 0


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    sec = "train"
    outdir = Path(args.out)
    config = TrainConfig(
        learning_rate=float(_resolve(args.lr, file_cfg, sec,
                                     "learning_rate", 1e-4)),
        batch_size=_resolve(args.batch_size, file_cfg, sec, "batch_size", None),
        epochs=int(_resolve(args.epochs, file_cfg, sec, "epochs", 100)),
        seed=args.seed,
        mixed_precision=bool(
            _resolve(args.mixed_precision or None, file_cfg, sec,
                     "mixed_precision", False)
        ),
        checkpoint_dir=outdir,
        holdout_fraction=float(
            _resolve(args.holdout_fraction, file_cfg, sec,
                     "holdout_fraction", 0.1)
        ),
        holdout_seed=int(_resolve(args.holdout_seed, file_cfg, sec,
                                  "holdout_seed", 0)),
    )
    preprocess_cfg = _preprocess_config(args, file_cfg)
    manifest = scan_dataset(args.root)
    spec = BackboneSpec(kind=args.backbone, scale=args.scale,
                        pretrained=args.pretrained)
    model = build_model(spec, seed=args.seed)
    report = train(model, manifest, config, preprocess_cfg)
    _write_run_config(outdir, {
        "command": "train",
        "backbone": args.backbone,
        "scale": args.scale,
        "seed": args.seed,
        "train": {k: str(v) if isinstance(v, Path) else v
                  for k, v in config.__dict__.items()},
        "preprocess": preprocess_cfg.__dict__,
        "root": str(Path(args.root).resolve()),
    })
    final_loss = report.per_epoch_loss[-1] if report.per_epoch_loss else None
    print(f"checkpoint: {report.final_checkpoint}")
    print(f"epochs: {len(report.per_epoch_loss)}  final_loss: {final_loss}")
    return 0


def cmd_dump_logits(args) -> int:
    file_cfg = _load_config_file(args.config)
    preprocess_cfg = _preprocess_config(args, file_cfg)
    spec = peek_checkpoint_spec(args.checkpoint)
    handle = load_checkpoint(spec, args.checkpoint)
    manifest = scan_dataset(args.root)
    if args.split == "holdout":
        _, records = split_train_holdout(
            manifest, fraction=args.holdout_fraction, seed=args.holdout_seed
        )
    else:
        records = manifest.valid_records(args.split)
    x, _ = load_records_as_tensors(records, preprocess_cfg)
    logits = forward_logits(handle, x.numpy())
    write_logit_csv(
        args.out,
        [manifest.record_id(r) for r in records],
        [r.label for r in records],
        logits.values,
    )
    print(f"wrote {len(records)} logit rows to {args.out}")
    return 0


def cmd_optimize_weights(args) -> int:
    ids_ref: list[str] | None = None
    labels_ref: list[str] | None = None
    members: list[str] = []
    matrices = []
    for path in args.logits:
        ids, labels, values = read_logit_csv(path)
        if ids_ref is None:
            ids_ref, labels_ref = ids, labels
        elif ids != ids_ref or labels != labels_ref:
            raise LabelMismatch(
                f"logit files disagree on records or labels: {path}"
            )
        members.append(Path(path).stem)
        matrices.append(values)
    if args.labels_from:
        manifest = load_manifest(args.labels_from)
        by_id = {manifest.record_id(r): r.label for r in manifest.records}
        for rid, lbl in zip(ids_ref, labels_ref):
            if by_id.get(rid, lbl) != lbl:
                raise LabelMismatch(
                    f"label for {rid} disagrees with manifest {args.labels_from}"
                )
    weights = optimize_weights(
        matrices, labels_ref, objective=args.objective, step=args.step
    )
    achieved = fusion_objective(matrices, labels_ref, weights,
                                objective=args.objective)
    spec = EnsembleSpec(
        members=members,
        weights=[float(w) for w in normalize_weights(weights)],
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(spec.to_json() + "\n", encoding="utf-8")
    print(f"ensemble spec: {out}")
    print(f"{args.objective} on optimization split: {achieved:.6f}")
    for m, w in zip(members, spec.weights):
        print(f"  {m}: {w:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    file_cfg = _load_config_file(args.config)
    preprocess_cfg = _preprocess_config(args, file_cfg)
    manifest = scan_dataset(args.root)
    outdir = Path(args.out)

    models = {}
    for ckpt in args.checkpoint:
        spec = peek_checkpoint_spec(ckpt)
        handle = load_checkpoint(spec, ckpt)
        models[handle.model_id] = handle

    ensemble: EnsembleSpec | None = None
    ensemble_name = ""
    if args.ensemble:
        ensemble = EnsembleSpec.from_json(
            Path(args.ensemble).read_text(encoding="utf-8")
        )
        ensemble_name = Path(args.ensemble).stem
    elif args.preset:
        ensemble = PRESETS[args.preset]()
        ensemble_name = args.preset
    if ensemble is not None:
        missing = [m for m in ensemble.members if m not in models]
        if missing:
            raise MemberMissing(
                f"preset/spec needs checkpoints for: {missing}"
            )

    reports = [
        evaluate_model(models[mid], manifest, args.split, preprocess_cfg)
        for mid in sorted(models)
    ]
    if ensemble is not None:
        reports.append(
            evaluate_ensemble(ensemble, models, manifest, args.split,
                              preprocess_cfg, model_id=ensemble_name)
        )
    paths = emit_report(reports, outdir)
    _write_run_config(outdir, {
        "command": "evaluate",
        "root": str(Path(args.root).resolve()),
        "split": args.split,
        "checkpoints": [str(c) for c in args.checkpoint],
        "ensemble": ensemble.to_json() if ensemble else None,
        "preprocess": preprocess_cfg.__dict__,
        "seed": 0,
    })
    for r in reports:
        print(f"{r.model_id}: accuracy={r.accuracy:.4f} precision={r.precision:.4f} "
              f"recall={r.recall:.4f} f1={r.f1:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcos-ensemble",
        description="PCOS ultrasound classification: train five backbone "
                    "families and fuse their logits.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="inventory a corpus and write its manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--out", default="manifest.json")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--no-verify", action="store_true",
                   help="skip the full-decode integrity pass")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("clean", help="quarantine or delete flagged images")
    p.add_argument("--root", required=True)
    p.add_argument("--mode", choices=("dry_run", "quarantine", "delete"),
                   default="quarantine")
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class-train", type=int, required=True)
    p.add_argument("--per-class-test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--speckle-grain", type=float, default=None)
    p.add_argument("--follicle-count", type=int, nargs=2, default=None,
                   metavar=("LO", "HI"))
    p.add_argument("--follicle-radius", type=int, nargs=2, default=None,
                   metavar=("LO", "HI"))
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fine-tune one backbone on a corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--backbone", choices=BACKBONE_KINDS, required=True)
    p.add_argument("--scale", choices=("tiny", "paper"), default="tiny")
    p.add_argument("--pretrained", action="store_true",
                   help="paper scale only; weights read from MODEL_CACHE_DIR")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--holdout-fraction", type=float, default=None)
    p.add_argument("--holdout-seed", type=int, default=None)
    p.add_argument("--mixed-precision", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dump-logits",
                       help="write one member's logits for a split as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--split", choices=("train", "test", "holdout"),
                   required=True,
                   help="'holdout' is the seeded optimization split "
                        "reserved from train")
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--holdout-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_dump_logits)

    p = sub.add_parser("optimize-weights",
                       help="grid-search simplex weights from logit CSVs")
    p.add_argument("--logits", nargs="+", required=True)
    p.add_argument("--labels-from", default=None,
                   help="manifest JSON to cross-check labels against")
    p.add_argument("--objective", choices=("f1", "accuracy"), default="f1")
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize_weights)

    p = sub.add_parser("evaluate",
                       help="evaluate checkpoints and optionally an ensemble")
    p.add_argument("--root", required=True)
    p.add_argument("--checkpoint", nargs="+", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ensemble", default=None,
                       help="EnsembleSpec JSON (e.g. from optimize-weights)")
    group.add_argument("--preset", choices=tuple(PRESETS), default=None)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
