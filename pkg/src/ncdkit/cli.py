"""Command-line entry point for reproducible discovery runs.

Verbs: gen-data, pretrain, discover, eval, ablate, export-embeddings.
Runs are driven by an INI-style config file with one section per
module; every key is validated before any work starts and unknown
keys are rejected by name.  Exit codes are a stable contract:
0 success, 2 configuration problem, 3 I/O problem, 4 incompatible
inputs (checkpoint vs dataset, missing pretrain checkpoint).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from .audit import evaluation_access
from .data import (
    AugmentConfig,
    SyntheticSpec,
    generate,
    load_dataset_csv,
    save_dataset_csv,
)
from .exceptions import (
    CheckpointMismatchError,
    ConfigurationError,
    GenerationError,
    NCDKitError,
    ShapeMismatchError,
    UsageError,
)
from .metrics import evaluate_task_agnostic, evaluate_task_aware
from .model import forward_batch, init_model, load_checkpoint, save_checkpoint
from .sinkhorn import SinkhornConfig
from .training import (
    CANONICAL_VARIANTS,
    TrainConfig,
    discover,
    pretrain,
    run_ablation,
)

_SCHEMA = {
    "data": {"input_dim", "n_classes", "n_labelled_classes",
             "samples_per_class", "separation", "test_fraction", "seed"},
    "model": {"feat_dim", "hidden_dim", "encoder_hidden", "over_factor",
              "num_over_heads"},
    "train": {"alpha", "beta", "tau", "lr", "momentum", "pretrain_epochs",
              "discover_epochs", "batch_size", "intra_mode", "inter_enabled",
              "seed", "snapshot_every"},
    "sinkhorn": {"epsilon", "n_iters"},
    "augment": {"jitter_sigma", "mask_fraction", "scale_min", "scale_max",
                "views_per_sample"},
    "run": {"out_dir"},
}


def _load_config(path) -> configparser.ConfigParser:
    """Parse and validate a config file; None means all defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    f"unknown config key {key!r} in section [{section}]")
    return parser


def _get(parser, section, key, cast, fallback):
    if not parser.has_option(section, key):
        return fallback
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(
            f"config key {key!r} in [{section}]: cannot parse {raw!r}") from exc


def _synthetic_spec(parser, seed_override) -> SyntheticSpec:
    defaults = SyntheticSpec()
    seed = _get(parser, "data", "seed", int, defaults.seed)
    if seed_override is not None:
        seed = seed_override
    return SyntheticSpec(
        input_dim=_get(parser, "data", "input_dim", int, defaults.input_dim),
        n_classes=_get(parser, "data", "n_classes", int, defaults.n_classes),
        n_labelled_classes=_get(parser, "data", "n_labelled_classes", int,
                                defaults.n_labelled_classes),
        samples_per_class=_get(parser, "data", "samples_per_class", int,
                               defaults.samples_per_class),
        separation=_get(parser, "data", "separation", float,
                        defaults.separation),
        test_fraction=_get(parser, "data", "test_fraction", float,
                           defaults.test_fraction),
        seed=seed)


def _augment_config(parser) -> AugmentConfig:
    defaults = AugmentConfig()
    lo = _get(parser, "augment", "scale_min", float, defaults.scale_range[0])
    hi = _get(parser, "augment", "scale_max", float, defaults.scale_range[1])
    return AugmentConfig(
        jitter_sigma=_get(parser, "augment", "jitter_sigma", float,
                          defaults.jitter_sigma),
        mask_fraction=_get(parser, "augment", "mask_fraction", float,
                           defaults.mask_fraction),
        scale_range=(lo, hi),
        views_per_sample=_get(parser, "augment", "views_per_sample", int,
                              defaults.views_per_sample))


def _train_config(parser, seed_override) -> TrainConfig:
    defaults = TrainConfig()
    sk = SinkhornConfig(
        epsilon=_get(parser, "sinkhorn", "epsilon", float,
                     defaults.sinkhorn.epsilon),
        n_iters=_get(parser, "sinkhorn", "n_iters", int,
                     defaults.sinkhorn.n_iters))
    seed = _get(parser, "train", "seed", int, defaults.seed)
    if seed_override is not None:
        seed = seed_override
    return TrainConfig(
        alpha=_get(parser, "train", "alpha", float, defaults.alpha),
        beta=_get(parser, "train", "beta", float, defaults.beta),
        tau=_get(parser, "train", "tau", float, defaults.tau),
        lr=_get(parser, "train", "lr", float, defaults.lr),
        momentum=_get(parser, "train", "momentum", float, defaults.momentum),
        pretrain_epochs=_get(parser, "train", "pretrain_epochs", int,
                             defaults.pretrain_epochs),
        discover_epochs=_get(parser, "train", "discover_epochs", int,
                             defaults.discover_epochs),
        batch_size=_get(parser, "train", "batch_size", int,
                        defaults.batch_size),
        intra_mode=_get(parser, "train", "intra_mode", str,
                        defaults.intra_mode),
        inter_enabled=_get(parser, "train", "inter_enabled", bool,
                           defaults.inter_enabled),
        sinkhorn=sk,
        augment=_augment_config(parser),
        seed=seed,
        snapshot_every=_get(parser, "train", "snapshot_every", int,
                            defaults.snapshot_every))


def _model_kwargs(parser) -> dict:
    return {
        "feat_dim": _get(parser, "model", "feat_dim", int, 32),
        "hidden_dim": _get(parser, "model", "hidden_dim", int, 32),
        "encoder_hidden": _get(parser, "model", "encoder_hidden", int, 64),
        "over_factor": _get(parser, "model", "over_factor", int, 3),
        "num_over_heads": _get(parser, "model", "num_over_heads", int, 0),
    }


def _resolve(parser, path):
    """Apply the configured output directory to relative paths."""
    out_dir = _get(parser, "run", "out_dir", str, None)
    if out_dir and not os.path.isabs(path):
        os.makedirs(out_dir, exist_ok=True)
        return os.path.join(out_dir, path)
    return path


def _check_compat(params, split):
    dims = params.dims
    if (dims.input_dim != split.input_dim
            or dims.n_labelled_classes != split.n_labelled_classes
            or dims.n_novel_classes != split.n_novel_classes):
        raise CheckpointMismatchError(
            f"checkpoint geometry (dim {dims.input_dim}, "
            f"{dims.n_labelled_classes}+{dims.n_novel_classes} classes) does "
            f"not fit dataset (dim {split.input_dim}, "
            f"{split.n_labelled_classes}+{split.n_novel_classes} classes)")


def cmd_gen_data(args) -> int:
    parser = _load_config(args.config)
    spec = _synthetic_spec(parser, args.seed)
    split = generate(spec)
    out = _resolve(parser, args.out)
    save_dataset_csv(split, out)
    print(f"wrote {out}")
    print(f"train labelled {len(split.labelled_train)}, "
          f"train unlabelled {len(split.unlabelled_train)}, "
          f"test labelled {len(split.labelled_test)}, "
          f"test unlabelled {len(split.unlabelled_test)}")
    return 0


def cmd_pretrain(args) -> int:
    parser = _load_config(args.config)
    cfg = _train_config(parser, args.seed)
    split = load_dataset_csv(args.data)
    params = init_model(split.input_dim, split.n_labelled_classes,
                        split.n_novel_classes, seed=cfg.seed,
                        **_model_kwargs(parser))
    _, log = pretrain(params, split, cfg)
    ckpt = _resolve(parser, args.checkpoint_out)
    save_checkpoint(ckpt, params, cfg.tau)
    log_path = _resolve(parser, args.log_out or args.checkpoint_out
                        + ".log.jsonl")
    log.write(log_path)
    print(f"wrote {ckpt}")
    print(f"wrote {log_path}")
    print(f"final pretrain ce {log.records[-1].ce!r}" if len(log)
          else "no epochs run")
    return 0


def cmd_discover(args) -> int:
    parser = _load_config(args.config)
    cfg = _train_config(parser, args.seed)
    split = load_dataset_csv(args.data)
    if args.checkpoint_in is None and not args.from_scratch:
        raise CheckpointMismatchError(
            "discover needs --checkpoint-in from a pretraining run, or "
            "--from-scratch to start fresh")
    if args.checkpoint_in is not None:
        params, _ = load_checkpoint(args.checkpoint_in)
        _check_compat(params, split)
    else:
        params = init_model(split.input_dim, split.n_labelled_classes,
                            split.n_novel_classes, seed=cfg.seed,
                            **_model_kwargs(parser))
    _, log = discover(params, split, cfg)
    ckpt = _resolve(parser, args.checkpoint_out)
    save_checkpoint(ckpt, params, cfg.tau)
    log_path = _resolve(parser, args.log_out or args.checkpoint_out
                        + ".log.jsonl")
    log.write(log_path)
    print(f"wrote {ckpt}")
    print(f"wrote {log_path}")
    print(f"final total loss {log.records[-1].total!r}" if len(log)
          else "no epochs run")
    return 0


def cmd_eval(args) -> int:
    params, tau = load_checkpoint(args.checkpoint)
    split = load_dataset_csv(args.data)
    _check_compat(params, split)
    reports = []
    if args.protocol in ("aware", "both"):
        reports.append(evaluate_task_aware(params, split, tau))
    if args.protocol in ("agnostic", "both"):
        reports.extend(evaluate_task_agnostic(params, split, tau))
    lines = [json.dumps(r.to_json_dict(), separators=(",", ":"))
             for r in reports]
    for line in lines:
        print(line)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return 0


def cmd_ablate(args) -> int:
    parser = _load_config(args.config)
    cfg = _train_config(parser, args.seed)
    split = load_dataset_csv(args.data)
    seeds = tuple(cfg.seed + k for k in range(5))
    result = run_ablation(split, cfg, variants=CANONICAL_VARIANTS,
                          seeds=seeds)
    out = _resolve(parser, args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_csv())
    print(f"wrote {out}")
    for row in result.rows:
        print(f"{row.variant}: acc {row.acc_mean!r} +- {row.acc_std!r}")
    return 0


def cmd_export_embeddings(args) -> int:
    params, tau = load_checkpoint(args.checkpoint)
    split = load_dataset_csv(args.data)
    _check_compat(params, split)
    n_total = params.dims.n_total_classes
    header = ("side,true_class,predicted_index,"
              + ",".join(f"l{i}" for i in range(n_total)))
    lines = [header]

    def emit(side, features, classes):
        if features.shape[0] == 0:
            return
        out = forward_batch(params, features, tau)
        logits = out.logits.data
        preds = logits.argmax(axis=1)
        for cls, pred, row in zip(classes, preds, logits):
            values = ",".join(repr(float(v)) for v in row)
            lines.append(f"{side},{int(cls)},{int(pred)},{values}")

    emit("labelled", split.labelled_test.features, split.labelled_test.labels)
    with evaluation_access():
        hidden = split.unlabelled_test.hidden.read()
    emit("unlabelled", split.unlabelled_test.features, hidden)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    print(f"wrote {args.out} ({len(lines) - 1} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncdkit",
        description="Discover novel classes in partially labelled data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="INI config file; omitted keys use defaults")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    common(p)
    p.add_argument("--out", required=True, help="output dataset CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="supervised pretraining phase")
    common(p)
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--log-out", default=None,
                   help="JSON-lines log path (default: checkpoint + .log.jsonl)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("discover", help="joint discovery phase")
    common(p)
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--checkpoint-in", default=None,
                   help="checkpoint from the pretraining phase")
    p.add_argument("--from-scratch", action="store_true",
                   help="start from random weights instead of a checkpoint")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--log-out", default=None)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", choices=("aware", "agnostic", "both"),
                   default="both")
    p.add_argument("--out", required=True, help="JSON-lines report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the five-variant ablation")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-embeddings",
                       help="dump test-set logits for external plotting")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, GenerationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointMismatchError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
