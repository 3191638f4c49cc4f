"""Command-line surface.

Subcommands: preprocess, train, eval, fuse, gradcheck, ablate,
dump-adjacency.  Options come from a flat key=value config file with
per-invocation `--set key=value` overrides; see README for the key list.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
Thread fan-out (evaluation only) is capped by TEGRAPH_THREADS and forced
to one by --single-thread, the bit-reproducibility switch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import precision
from .ablate import SUITES, ablate_suite
from .checkpoint import network_from_checkpoint
from .dataset import (
    KINDS,
    generate_synthetic,
    load_split,
    preprocess_skeleton_dir,
    write_dataset,
)
from .errors import ConfigError, DataError, NumericError, TegraphError
from .gradcheck import OP_CHECKS, check_all_ops
from .model import LayerSpec, ModelConfig, Network, backbone_config, fuse_streams
from .tensorio import save_tensor
from .training import TrainConfig, evaluate, score_streams, train

log = logging.getLogger("tegraph")


# ---------------------------------------------------------------------------
# Option handling


def parse_kv_file(path) -> dict[str, str]:
    options: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        value = value.strip()
        if "#" in value:
            value = value.split("#", 1)[0].strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        options[key.strip()] = value
    return options


def gather_options(args) -> dict[str, str]:
    options: dict[str, str] = {}
    if getattr(args, "config", None):
        options.update(parse_kv_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        options[key.strip()] = value.strip()
    return options


def _get(options, key, default, cast):
    if key not in options:
        return default
    try:
        return cast(options[key])
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key}={options[key]!r} is not a valid {cast.__name__}")


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def parse_layer_specs(text: str) -> list[LayerSpec]:
    """Comma-separated in:out[:stride[:mode[:kernel]]] items."""
    layers = []
    for item in text.split(","):
        fields = item.strip().split(":")
        if len(fields) < 2:
            raise ConfigError(f"layer spec {item!r} needs at least in:out")
        try:
            in_c, out_c = int(fields[0]), int(fields[1])
            stride = int(fields[2]) if len(fields) > 2 else 1
            mode = fields[3] if len(fields) > 3 else "tc"
            kernel = int(fields[4]) if len(fields) > 4 else 9
        except ValueError:
            raise ConfigError(f"bad layer spec {item!r}")
        layers.append(LayerSpec(in_c, out_c, stride, mode, kernel))
    return layers


def model_config_from(options: dict[str, str]) -> ModelConfig:
    classes = _get(options, "classes", None, int)
    if classes is None:
        raise ConfigError("config key 'classes' is required")
    common = dict(
        num_classes=classes,
        heads=_get(options, "heads", 4, int),
        relevance=_get(options, "relevance", "feature-calculated", str),
        seed=_get(options, "seed", 0, int),
    )
    if "layers" in options:
        return ModelConfig(
            layers=parse_layer_specs(options["layers"]),
            num_joints=_get(options, "joints", 5, int),
            fixed_length=_get(options, "frames", 32, int),
            max_bodies=_get(options, "bodies", 1, int),
            graph=_get(options, "graph", "chain", str),
            graph_center=_get(options, "graph_center", 0, int),
            **common,
        )
    return backbone_config(
        num_joints=_get(options, "joints", 25, int),
        fixed_length=_get(options, "frames", 300, int),
        max_bodies=_get(options, "bodies", 2, int),
        insertion_layer=_get(options, "insertion_layer", 9, int),
        insertion_mode=_get(options, "insertion_mode", "both", str),
        replace_all=_get(options, "replace_all", False, _bool),
        graph=_get(options, "graph", "ntu", str),
        **common,
    )


def train_config_from(options: dict[str, str]) -> TrainConfig:
    return TrainConfig(
        learning_rate=_get(options, "lr", 0.1, float),
        decay_epochs=_get(options, "decay_epochs", (40, 80, 120), _int_list),
        decay_factor=_get(options, "decay_factor", 0.1, float),
        weight_decay=_get(options, "weight_decay", 0.0005, float),
        batch_size=_get(options, "batch_size", 64, int),
        total_epochs=_get(options, "epochs", 150, int),
        seed=_get(options, "seed", 0, int),
        momentum=_get(options, "momentum", 0.9, float),
    )


def apply_precision(options: dict[str, str]) -> None:
    precision.set_mode(_get(options, "precision", precision.mode(), str))


def resolve_threads(args) -> int:
    if getattr(args, "single_thread", False):
        return 1
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("TEGRAPH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"TEGRAPH_THREADS={env!r} is not an integer")
    return 1


# ---------------------------------------------------------------------------
# Subcommands


def cmd_preprocess(args) -> int:
    source = Path(args.input)
    if source.is_dir():
        labeled, graph = preprocess_skeleton_dir(
            source, args.frames, split=args.split, lo=args.motion_lo,
            hi=args.motion_hi, max_bodies=args.bodies,
        )
    elif source.suffix == ".json":
        labeled, graph = generate_synthetic(json.loads(source.read_text()))
    else:
        raise ConfigError(f"{source}: expected a directory of .skeleton files or a .json spec")
    manifest = write_dataset(args.out, labeled, graph)
    print(f"wrote {len(labeled)} samples to {manifest}")
    return 0


def cmd_train(args) -> int:
    options = gather_options(args)
    apply_precision(options)
    model_config = model_config_from(options)
    tconfig = train_config_from(options)
    threads = resolve_threads(args)
    train_set = load_split(args.data, args.modality, "train")
    eval_set = load_split(args.data, args.modality, "eval")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    network = Network(model_config)
    history = train(
        network, train_set, eval_set or None, tconfig,
        metrics_path=out_dir / "metrics.jsonl",
        checkpoint_path=out_dir / "checkpoint.tegc",
        best_path=(out_dir / "best.tegc") if eval_set else None,
        threads=threads,
    )
    last = history[-1] if history else None
    if last is not None:
        summary = f"final train acc {last.train_acc:.3f}"
        if last.eval_acc is not None:
            summary += f", eval acc {last.eval_acc:.3f}"
        print(summary)
    return 0


def cmd_eval(args) -> int:
    network, manifest, _ = network_from_checkpoint(args.checkpoint)
    dataset = load_split(args.data, args.modality, args.split)
    result = evaluate(network, dataset, threads=resolve_threads(args))
    print(f"top-1 accuracy {result.accuracy:.4f} on {len(dataset)} samples")
    return 0


def cmd_fuse(args) -> int:
    streams = []
    for item in args.stream:
        if "=" not in item:
            raise ConfigError(f"--stream needs kind=checkpoint, got {item!r}")
        kind, ckpt = item.split("=", 1)
        kind = kind.strip()
        if kind not in KINDS:
            raise ConfigError(f"unknown modality kind {kind!r}; choose from {KINDS}")
        streams.append((kind, ckpt.strip()))
    if not streams:
        raise ConfigError("fusion needs at least one --stream kind=checkpoint")
    weights = [float(w) for w in args.weights.split(",")] if args.weights else None
    if weights is not None and len(weights) != len(streams):
        raise ConfigError(f"{len(streams)} streams but {len(weights)} weights")
    threads = resolve_threads(args)
    labels = None
    per_stream_scores = []
    for kind, ckpt in streams:
        network, _, _ = network_from_checkpoint(ckpt)
        dataset = load_split(args.data, kind, args.split)
        stream_labels = [label for _, label, *_ in dataset]
        if labels is None:
            labels = stream_labels
        elif labels != stream_labels:
            raise DataError("streams disagree on sample labels/order")
        per_stream_scores.append(score_streams(network, dataset, threads=threads))
    correct = 0
    for i, label in enumerate(labels):
        fused = fuse_streams([s[i] for s in per_stream_scores], weights)
        if int(np.argmax(fused)) == label:
            correct += 1
    print(f"fused top-1 accuracy {correct / len(labels):.4f} on {len(labels)} samples")
    return 0


def cmd_gradcheck(args) -> int:
    precision.set_mode("verify")
    if args.op and args.op not in OP_CHECKS:
        raise ConfigError(f"unknown op {args.op!r}; choose from {sorted(OP_CHECKS)}")
    failed = False
    for name, result in check_all_ops(seed=args.seed, only=args.op):
        status = "ok" if result.ok else "FAIL"
        print(f"{name:20s} {status}  max rel err {result.max_rel_error:.3e} "
              f"({result.elements_checked} elements)")
        failed = failed or not result.ok
    if failed:
        raise NumericError("gradient check failed; see lines above")
    return 0


def cmd_ablate(args) -> int:
    options = gather_options(args)
    apply_precision(options)
    config = model_config_from(options)
    tconfig = train_config_from(options)
    header, rows = ablate_suite(args.suite, args.data, config, tconfig,
                                kind=args.modality, threads=resolve_threads(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_dump_adjacency(args) -> int:
    network, manifest, _ = network_from_checkpoint(args.checkpoint)
    dataset = load_split(args.data, args.modality, args.split)
    if not 0 <= args.sample < len(dataset):
        raise ConfigError(f"sample index {args.sample} outside 0..{len(dataset) - 1}")
    network.set_training(False)
    collector: list[tuple[str, np.ndarray]] = []
    network.forward_sample(dataset[args.sample][0], collector=collector)
    if not collector:
        raise ConfigError("this model has no temporal-graph layers to dump")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, matrix in collector:
        path = out_dir / f"{name}.tegt"
        save_tensor(path, matrix)
        print(f"wrote {path} shape {matrix.shape}")
    return 0


# ---------------------------------------------------------------------------
# Wiring


def _add_common_run_flags(sub) -> None:
    sub.add_argument("--config", help="key=value options file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config key (repeatable)")
    sub.add_argument("--threads", type=int, help="evaluation fan-out cap")
    sub.add_argument("--single-thread", action="store_true",
                     help="force sequential execution (bit-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tegraph",
        description="Skeleton action recognition with temporal relation graphs",
    )
    parser.add_argument("--verbose", action="store_true", help="log at debug level")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("preprocess", help="build a dataset from captures or a synth spec")
    p.add_argument("input", help=".skeleton directory or synthetic .json spec")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--frames", type=int, default=300, help="fixed sequence length")
    p.add_argument("--split", default="train", help="split tag for captured files")
    p.add_argument("--motion-lo", type=float, default=0.1)
    p.add_argument("--motion-hi", type=float, default=2.0)
    p.add_argument("--bodies", type=int, default=2)
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("train", help="train one modality stream")
    p.add_argument("--data", required=True, help="dataset manifest.jsonl")
    p.add_argument("--modality", default="joint-spatial", choices=KINDS)
    p.add_argument("--out", required=True, help="output directory for metrics/checkpoints")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", default="joint-spatial", choices=KINDS)
    p.add_argument("--split", default="eval")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("fuse", help="weighted score fusion of modality checkpoints")
    p.add_argument("--data", required=True)
    p.add_argument("--stream", action="append", metavar="KIND=CHECKPOINT",
                   help="modality and its checkpoint (repeatable)")
    p.add_argument("--weights", help="comma-separated fusion weights")
    p.add_argument("--split", default="eval")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_fuse)

    p = commands.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--op", help="check one op instead of all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = commands.add_parser("ablate", help="run a comparison grid")
    p.add_argument("--suite", required=True, choices=SUITES)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", default="joint-spatial", choices=KINDS)
    p.add_argument("--out", required=True, help="output CSV path")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = commands.add_parser("dump-adjacency", help="write temporal adjacency matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", default="joint-spatial", choices=KINDS)
    p.add_argument("--split", default="eval")
    p.add_argument("--sample", type=int, default=0, help="dataset index to inspect")
    p.add_argument("--out", required=True, help="output directory")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_dump_adjacency)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except TegraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
