"""Command-line entry points.

Subcommands: gen-data, pretrain, linear-eval, finetune, distill, embed,
augment-preview. Every command reads an optional JSON config file; flags
override file values, which override the selected profile. Exit codes:
0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import spec_by_name
from .byol import BYOLPretrainer
from .config import config_hash, resolve_config
from .data import load_dataset, save_dataset, split_dataset
from .errors import SkelByolError
from .evaluate import (
    KnowledgeDistiller,
    LinearProbe,
    SemiSupervisedFineTuner,
    export_embeddings,
    sample_label_fraction,
)
from .graphs import graph_by_name
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.network import ArchDescriptor
from .synthetic import generate_synthetic_dataset


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _common_flags(sub: argparse.ArgumentParser, data: bool = True) -> None:
    sub.add_argument("--config", type=Path, default=None, help="JSON run config file")
    sub.add_argument("--profile", choices=("desk", "paper"), default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", type=Path, required=True, help="output directory")
    if data:
        sub.add_argument("--data", type=Path, required=True,
                         help="dataset directory or manifest path")


def _load_cfg(args, extra_overrides: dict | None = None) -> dict:
    overrides = dict(extra_overrides or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
    return resolve_config(args.config, overrides, profile=args.profile)


def _train_splits(args, cfg):
    ds = load_dataset(args.data)
    return split_dataset(ds, cfg["data"]["test_fraction"], cfg["data"]["split_seed"])


def _arch_from_cfg(cfg) -> ArchDescriptor:
    return ArchDescriptor.from_dict(cfg["arch"])


def cmd_gen_data(args) -> int:
    overrides: dict = {"data": {}}
    for key, flag in (("class_count", "classes"), ("samples_per_class", "samples_per_class"),
                      ("views_per_sample", "views"), ("frames_raw", "frames_raw")):
        value = getattr(args, flag)
        if value is not None:
            overrides["data"][key] = value
    cfg = _load_cfg(args, overrides)
    d = cfg["data"]
    ds = generate_synthetic_dataset(
        class_count=d["class_count"],
        samples_per_class=d["samples_per_class"],
        views_per_sample=d["views_per_sample"],
        frames=d["frames_raw"],
        graph=graph_by_name(d["graph"]),
        seed=cfg["seed"],
        sample_noise=d["sample_noise"],
        view_noise=d["view_noise"],
        amplitude=d["amplitude"],
        max_view_angle=d["max_view_angle"],
    )
    manifest = save_dataset(ds, args.out)
    n_views = sum(len(s.views) for s in ds.samples)
    print(f"wrote {manifest}")
    print(f"classes={ds.class_count} samples={len(ds.samples)} views={n_views} "
          f"frames={d['frames_raw']} joints={ds.graph.joint_count}")
    return 0


def cmd_pretrain(args) -> int:
    overrides: dict = {"train": {}, "augmentation": {}}
    for key in ("epochs", "batch_size", "base_lr", "warmup_epochs", "width_multiplier"):
        value = getattr(args, key)
        if value is not None:
            overrides["train"][key] = value
    if args.mvs is not None:
        overrides["train"]["mvs_enabled"] = args.mvs == "on"
    if args.spec1 is not None:
        overrides["augmentation"]["spec1"] = args.spec1
    if args.spec2 is not None:
        overrides["augmentation"]["spec2"] = args.spec2
    cfg = _load_cfg(args, overrides)
    chash = config_hash(cfg)
    train_ds, _ = _train_splits(args, cfg)
    t = cfg["train"]
    trainer = BYOLPretrainer(
        epochs=t["epochs"], batch_size=t["batch_size"], base_lr=t["base_lr"],
        start_lr=t["start_lr"], warmup_epochs=t["warmup_epochs"],
        weight_decay=t["weight_decay"], sgd_momentum=t["sgd_momentum"],
        lambda_base=t["lambda_base"], bn_alpha=t["bn_alpha"], seed=cfg["seed"],
        mvs_enabled=t["mvs_enabled"], spec1=cfg["augmentation"]["spec1"],
        spec2=cfg["augmentation"]["spec2"], arch=_arch_from_cfg(cfg),
        width_multiplier=t["width_multiplier"], frames=cfg["data"]["frames"],
        center=cfg["data"]["center"], rotate=cfg["data"]["rotate"], dtype=t["dtype"],
    )
    trainer.fit(train_ds)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(args.out / "online.ckpt", trainer.online_, trainer.arch_,
                           role="online", step=trainer.step_,
                           meta={"config_hash": chash})
    with open(args.out / "metrics.jsonl", "w") as fh:
        for record in trainer.metrics_:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    results = {
        "protocol": "pretrain",
        "config_hash": chash,
        "checkpoint_path": str(ckpt),
        "epochs": t["epochs"],
        "steps": trainer.step_,
        "final_loss": trainer.metrics_[-1]["loss"] if trainer.metrics_ else None,
        "final_embed_std": trainer.metrics_[-1]["embed_std"] if trainer.metrics_ else None,
        "resolved_config": cfg,
    }
    _write_json(args.out / "results.json", results)
    print(json.dumps({k: results[k] for k in ("final_loss", "final_embed_std", "steps")}))
    print(f"wrote {ckpt}")
    return 0


def cmd_linear_eval(args) -> int:
    overrides: dict = {"eval": {}}
    if args.epochs is not None:
        overrides["eval"]["probe_epochs"] = args.epochs
    cfg = _load_cfg(args, overrides)
    chash = config_hash(cfg)
    train_ds, test_ds = _train_splits(args, cfg)
    e = cfg["eval"]
    probe = LinearProbe(
        encoder=str(args.encoder), epochs=e["probe_epochs"],
        batch_size=e["probe_batch_size"], lr=e["probe_lr"],
        milestones=tuple(e["milestones"]), seed=cfg["seed"],
        frames=cfg["data"]["frames"], center=cfg["data"]["center"],
        rotate=cfg["data"]["rotate"], dtype=cfg["train"]["dtype"],
    )
    probe.fit(train_ds)
    top1 = probe.score(test_ds)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(args.out / "classifier.ckpt", probe.classifier_, probe.arch_,
                           role="classifier", step=0, meta={"config_hash": chash})
    results = {
        "protocol": "linear_probe",
        "fraction": 1.0,
        "seeds": [cfg["seed"]],
        "top1_mean": top1,
        "top1_std": 0.0,
        "config_hash": chash,
        "checkpoint_path": str(ckpt),
    }
    _write_json(args.out / "results.json", results)
    print(f"linear probe top-1: {top1:.4f}")
    return 0


def cmd_finetune(args) -> int:
    overrides: dict = {"eval": {}}
    if args.epochs is not None:
        overrides["eval"]["finetune_epochs"] = args.epochs
    if args.fractions is not None:
        overrides["eval"]["fractions"] = [float(x) for x in args.fractions.split(",")]
    if args.subset_seeds is not None:
        overrides["eval"]["subset_seeds"] = [int(x) for x in args.subset_seeds.split(",")]
    cfg = _load_cfg(args, overrides)
    chash = config_hash(cfg)
    train_ds, test_ds = _train_splits(args, cfg)
    e = cfg["eval"]
    args.out.mkdir(parents=True, exist_ok=True)
    grid = {}
    for fraction in e["fractions"]:
        per_seed = {}
        for sseed in e["subset_seeds"]:
            subset = sample_label_fraction(train_ds, fraction, sseed)
            tuner = SemiSupervisedFineTuner(
                encoder=str(args.encoder), epochs=e["finetune_epochs"],
                batch_size=e["finetune_batch_size"], lr=e["finetune_lr"],
                encoder_lr_scale=e["encoder_lr_scale"], seed=sseed,
                frames=cfg["data"]["frames"], center=cfg["data"]["center"],
                rotate=cfg["data"]["rotate"], dtype=cfg["train"]["dtype"],
            )
            tuner.fit(train_ds, subset)
            top1 = tuner.score(test_ds)
            name = f"finetune_f{int(round(fraction * 100)):03d}_s{sseed}.ckpt"
            save_checkpoint(args.out / name, tuner.classifier_, tuner.arch_,
                            role="classifier", step=tuner.total_steps_,
                            meta={"config_hash": chash, "fraction": fraction,
                                  "subset_seed": sseed})
            per_seed[str(sseed)] = top1
        values = list(per_seed.values())
        grid[str(fraction)] = {
            "protocol": "semi_supervised",
            "fraction": fraction,
            "seeds": e["subset_seeds"],
            "top1_mean": float(np.mean(values)),
            "top1_std": float(np.std(values)),
            "per_seed": per_seed,
            "config_hash": chash,
        }
        print(f"fraction {fraction}: top-1 {np.mean(values):.4f} +/- {np.std(values):.4f}")
    _write_json(args.out / "results.json", grid)
    return 0


def cmd_distill(args) -> int:
    overrides: dict = {"distill": {}}
    if args.epochs is not None:
        overrides["distill"]["epochs"] = args.epochs
    if args.student_width is not None:
        overrides["distill"]["student_width"] = args.student_width
    cfg = _load_cfg(args, overrides)
    chash = config_hash(cfg)
    train_ds, test_ds = _train_splits(args, cfg)
    d = cfg["distill"]
    distiller = KnowledgeDistiller(
        teacher=str(args.teacher), student_arch=_arch_from_cfg(cfg),
        student_width=d["student_width"], temperature=d["temperature"],
        epochs=d["epochs"], batch_size=d["batch_size"], base_lr=d["base_lr"],
        weight_decay=d["weight_decay"], seed=d["student_seed"],
        frames=cfg["data"]["frames"], center=cfg["data"]["center"],
        rotate=cfg["data"]["rotate"], dtype=cfg["train"]["dtype"],
    )
    distiller.fit(train_ds)
    top1 = distiller.score(test_ds)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(args.out / "student.ckpt", distiller.classifier_,
                           distiller.arch_, role="classifier", step=0,
                           meta={"config_hash": chash, "teacher": str(args.teacher)})
    results = {
        "protocol": "distill",
        "fraction": None,
        "seeds": [d["student_seed"]],
        "top1_mean": top1,
        "top1_std": 0.0,
        "config_hash": chash,
        "checkpoint_path": str(ckpt),
        "student_width": d["student_width"],
        "temperature": d["temperature"],
    }
    _write_json(args.out / "results.json", results)
    print(f"distilled student top-1: {top1:.4f}")
    return 0


def cmd_embed(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data)
    path = export_embeddings(
        str(args.encoder), ds, args.out, frames=cfg["data"]["frames"],
        center=cfg["data"]["center"], rotate=cfg["data"]["rotate"],
        dtype=cfg["train"]["dtype"],
    )
    print(f"wrote {path}")
    return 0


def cmd_augment_preview(args) -> int:
    from dataclasses import replace

    from .augment import apply_pipeline
    from .preprocess import preprocess_dataset

    cfg = _load_cfg(args)
    ds = load_dataset(args.data)
    prepped = preprocess_dataset(ds, cfg["data"]["frames"], cfg["data"]["center"],
                                 cfg["data"]["rotate"])
    take = min(args.count, len(prepped.samples))
    subset = replace(prepped, samples=prepped.samples[:take], extras={})
    spec = spec_by_name(args.preset)
    rng_root = cfg["seed"]

    def aug(seq):
        rng = np.random.default_rng([rng_root, 0x7E, seq.action_id, seq.camera_id])
        return apply_pipeline(seq, spec, rng, prepped.graph)

    augmented = subset.map_sequences(aug)
    save_dataset(subset, args.out / "before")
    save_dataset(augmented, args.out / "after")
    print(f"wrote {args.out / 'before'} and {args.out / 'after'} ({take} samples, preset={args.preset})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelbyol",
        description="Self-supervised skeleton representation learning toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-view dataset")
    _common_flags(p, data=False)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--samples-per-class", dest="samples_per_class", type=int, default=None)
    p.add_argument("--views", type=int, default=None)
    p.add_argument("--frames-raw", dest="frames_raw", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="self-supervised pre-training")
    _common_flags(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--base-lr", dest="base_lr", type=float, default=None)
    p.add_argument("--warmup-epochs", dest="warmup_epochs", type=int, default=None)
    p.add_argument("--width", dest="width_multiplier", type=float, default=None)
    p.add_argument("--mvs", choices=("on", "off"), default=None)
    p.add_argument("--spec1", default=None, help="aggressive-branch augmentation preset")
    p.add_argument("--spec2", default=None, help="conservative-branch augmentation preset")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("linear-eval", help="linear probe on a frozen encoder")
    _common_flags(p)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_linear_eval)

    p = sub.add_parser("finetune", help="semi-supervised fine-tuning on label fractions")
    _common_flags(p)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--fractions", default=None, help="comma list, e.g. 0.01,0.05,0.10")
    p.add_argument("--subset-seeds", dest="subset_seeds", default=None,
                   help="comma list of label-subset seeds")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("distill", help="distill a teacher into a fresh student")
    _common_flags(p)
    p.add_argument("--teacher", type=Path, required=True)
    p.add_argument("--student-width", dest="student_width", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("embed", help="export eval-mode embeddings for a dataset")
    _common_flags(p)
    p.add_argument("--encoder", type=Path, required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("augment-preview", help="write before/after augmented sequences")
    _common_flags(p)
    p.add_argument("--preset", default="aggressive")
    p.add_argument("--count", type=int, default=4)
    p.set_defaults(func=cmd_augment_preview)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SkelByolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
