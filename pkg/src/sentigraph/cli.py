"""Command-line entry point.

Subcommands::

    prepare    convert a CoNLL-U-style parse file + aspect annotations to JSON lines
    sdi        compute relation-frequency statistics from a training file
    train      train a model, keeping the best-dev checkpoint
    eval       score a checkpoint on a dataset
    predict    write per-sample prediction records
    ablate     train and score the four structural variants
    sweep      train once per graph-layer count and emit a score series
    gradcheck  run the finite-difference suite over ops and the composed model

Every file-producing run writes a manifest first (marked incomplete) and
completes it on success, so interrupted runs are recognizable. Config files
use flat ``key = value`` lines; command-line flags override file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

from . import __version__, corpus, training
from .config import TrainConfig, load_config
from .corpus import DatasetError, build_vocab, load_dataset, load_pretrained_embeddings
from .model import gradient_check_suite
from .syntax import SdiTable, collect_sdi_stats
from .training import (
    evaluate,
    layer_sweep,
    load_checkpoint,
    predictions_to_jsonl,
    run_ablation,
    save_checkpoint,
    train,
    write_epoch_log,
    write_sweep_series,
)
from .util import file_sha256


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {raw!r}")


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from e


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    group = parser.add_argument_group("config overrides")
    for f in _CONFIG_FIELDS.values():
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            group.add_argument(flag, type=_parse_bool, default=None, metavar="{true,false}")
        elif f.name == "layer_sweep_range":
            group.add_argument(flag, type=_parse_int_tuple, default=None, metavar="K1,K2,..")
        elif f.type in ("int", int):
            group.add_argument(flag, type=int, default=None)
        elif f.type in ("float", float):
            group.add_argument(flag, type=float, default=None)
        else:
            group.add_argument(flag, type=str, default=None)


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    config = TrainConfig()
    if getattr(args, "config", None):
        config = load_config(args.config, base=config)
    overrides = {}
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    config = dataclasses.replace(config, **overrides)
    config.validate()
    return config


class Manifest:
    """Run record: effective config, seed, input hashes, artifact paths, status."""

    def __init__(self, path, command: str, config: TrainConfig | None,
                 inputs: dict[str, str]):
        self.path = path
        self.payload = {
            "command": command,
            "status": "incomplete",
            "seed": config.seed if config else None,
            "config": dataclasses.asdict(config) if config else None,
            "inputs": {name: {"path": str(p), "sha256": file_sha256(p)}
                       for name, p in inputs.items()},
            "artifacts": {},
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self._flush()

    def _flush(self):
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(self.payload, f, indent=2)
            f.write("\n")

    def add_artifact(self, name: str, path) -> None:
        self.payload["artifacts"][name] = str(path)
        self._flush()

    def complete(self) -> None:
        self.payload["status"] = "complete"
        self._flush()


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_prepare(args) -> int:
    samples = corpus.conllu_to_samples(args.conllu, args.labels)
    manifest = Manifest(str(args.out) + ".manifest.json", "prepare", None,
                        {"conllu": args.conllu, "labels": args.labels})
    corpus.save_dataset(args.out, samples)
    manifest.add_artifact("dataset", args.out)
    manifest.complete()
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_sdi(args) -> int:
    config = _resolve_config(args)
    samples = load_dataset(args.train)
    manifest = Manifest(str(args.out) + ".manifest.json", "sdi", config,
                        {"train": args.train})
    table = collect_sdi_stats(samples, count_root=config.count_root_edges,
                              count_punct=config.count_punct_edges)
    table.save(args.out)
    manifest.add_artifact("sdi", args.out)
    manifest.complete()
    print(f"counted {table.total_edges} edges over {len(table.ratios)} relation labels")
    return 0


def _load_split(args, config):
    train_samples = load_dataset(args.train)
    if args.dev:
        dev_samples = load_dataset(args.dev)
    else:
        train_samples, dev_samples = training.split_dev(
            train_samples, config.dev_fraction, config.seed)
    return train_samples, dev_samples


def cmd_train(args) -> int:
    config = _resolve_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    inputs = {"train": args.train}
    if args.dev:
        inputs["dev"] = args.dev
    if args.embeddings:
        inputs["embeddings"] = args.embeddings
    manifest = Manifest(os.path.join(args.out_dir, "manifest.json"), "train",
                        config, inputs)

    train_samples, dev_samples = _load_split(args, config)
    vocab = build_vocab(train_samples, min_freq=config.min_freq)
    embeddings = None
    if args.embeddings:
        from .util import make_rng
        embeddings = load_pretrained_embeddings(args.embeddings, vocab, config.d_w,
                                                make_rng(config.seed, "oov"))
    result = train(config, train_samples, dev_samples, embeddings=embeddings,
                   vocab=vocab)

    log_path = os.path.join(args.out_dir, "epochs.tsv")
    write_epoch_log(log_path, result.log)
    manifest.add_artifact("epoch_log", log_path)

    checkpoint_dir = os.path.join(args.out_dir, "checkpoint")
    save_checkpoint(checkpoint_dir, result.model, state=result.best_state)
    manifest.add_artifact("checkpoint", checkpoint_dir)

    summary = {
        "best_epoch": result.best_epoch,
        "best_dev_acc": result.best_dev_acc,
        "final_epoch": result.log[-1].epoch if result.log else 0,
        "final_dev_acc": result.log[-1].dev_acc if result.log else None,
        "final_dev_f1": result.log[-1].dev_f1 if result.log else None,
    }
    summary_path = os.path.join(args.out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    manifest.add_artifact("summary", summary_path)
    manifest.complete()
    print(f"best dev accuracy {result.best_dev_acc:.4f} at epoch {result.best_epoch}; "
          f"checkpoint in {checkpoint_dir}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    report = evaluate(model, samples)
    text = json.dumps(report.as_dict(), indent=2)
    if args.out:
        manifest = Manifest(str(args.out) + ".manifest.json", "eval", model.config,
                            {"data": args.data})
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        manifest.add_artifact("metrics", args.out)
        manifest.complete()
    print(text)
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    manifest = Manifest(str(args.out) + ".manifest.json", "predict", model.config,
                        {"data": args.data})
    predictions_to_jsonl(args.out, model, samples)
    manifest.add_artifact("predictions", args.out)
    manifest.complete()
    print(f"wrote {len(samples)} prediction records to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = Manifest(os.path.join(args.out_dir, "manifest.json"), "ablate",
                        config, {"train": args.train, "eval": args.eval})
    train_samples, dev_samples = _load_split(args, config)
    eval_samples = load_dataset(args.eval)
    results = run_ablation(config, train_samples, eval_samples, dev_samples=dev_samples)
    table_path = os.path.join(args.out_dir, "ablation.tsv")
    with open(table_path, "w", encoding="utf-8") as f:
        f.write("variant\tacc\tmacro_f1\n")
        for variant, report in results.items():
            f.write(f"{variant}\t{report.acc!r}\t{report.macro_f1!r}\n")
    manifest.add_artifact("table", table_path)
    manifest.complete()
    for variant, report in results.items():
        print(f"{variant:18s} acc={report.acc:.4f} macro_f1={report.macro_f1:.4f}")
    return 0


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = Manifest(os.path.join(args.out_dir, "manifest.json"), "sweep",
                        config, {"train": args.train, "eval": args.eval})
    train_samples, dev_samples = _load_split(args, config)
    eval_samples = load_dataset(args.eval)
    points = layer_sweep(config, train_samples, eval_samples,
                         k_range=config.layer_sweep_range, dev_samples=dev_samples)
    series_path = os.path.join(args.out_dir, "sweep.tsv")
    write_sweep_series(series_path, points)
    manifest.add_artifact("series", series_path)
    manifest.complete()
    for p in points:
        print(f"layers={p.gcn_layers} acc={p.acc:.4f} macro_f1={p.macro_f1:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    results = gradient_check_suite(seed=args.seed, eps=args.eps)
    worst = 0.0
    for name, report in results:
        skipped = f" skipped={len(report.skipped)}" if report.skipped else ""
        print(f"{name:16s} max_rel_error={report.max_rel_error:.3e} "
              f"checked={report.checked}{skipped}")
        worst = max(worst, report.max_rel_error)
    print(f"overall max relative error: {worst:.3e} (threshold {args.threshold:.0e})")
    return 0 if worst < args.threshold else 1


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentigraph",
        description="aspect-based sentiment classification over dependency parses")
    parser.add_argument("--version", action="version", version=f"sentigraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="convert parses + aspect annotations to JSON lines")
    p.add_argument("--conllu", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_prepare)

    p = sub.add_parser("sdi", help="write relation-frequency statistics")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_sdi)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--embeddings", help="pretrained word-vector text file")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="write prediction records for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("ablate", help="train and score the structural variants")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--eval", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep", help="score one model per graph-layer count")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--eval", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of ops and model")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e}", file=sys.stderr)
        return 1
    except (DatasetError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
