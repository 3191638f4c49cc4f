"""Desk-scale ablation grids: head count, insertion layer, modalities.

Each suite trains one model per grid cell on the given preprocessed
dataset and reports top-1 eval accuracy per cell as (header, rows) ready
for CSV.  The grids mirror the three standard comparisons: head counts
1/2/4/8, temporal-graph insertion at each layer, and the seven modality
combinations (each single stream, the two spatial streams, the two motion
streams, and all four fused).
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dataset import load_split
from .errors import ConfigError
from .model import ModelConfig, Network, fuse_streams
from .training import TrainConfig, evaluate, score_streams, train

SUITES = ("heads", "layer-placement", "modalities")

HEAD_GRID = (1, 2, 4, 8)

MODALITY_COMBOS = (
    ("joint-spatial",),
    ("bone-spatial",),
    ("joint-motion",),
    ("bone-motion",),
    ("joint-spatial", "bone-spatial"),
    ("joint-motion", "bone-motion"),
    ("joint-spatial", "bone-spatial", "joint-motion", "bone-motion"),
)


def _train_eval(config: ModelConfig, train_set, eval_set, tconfig: TrainConfig,
                threads: int) -> float:
    network = Network(config)
    train(network, train_set, eval_set, tconfig, threads=threads)
    return evaluate(network, eval_set, threads=threads).accuracy


def _with_insertion(config: ModelConfig, index: int) -> ModelConfig:
    layers = [replace(spec, mode="tc") for spec in config.layers]
    layers[index - 1] = replace(layers[index - 1], mode="both")
    return replace(config, layers=layers)


def ablate_suite(suite: str, manifest_path, config: ModelConfig,
                 tconfig: TrainConfig, kind: str = "joint-spatial",
                 threads: int = 1) -> tuple[list[str], list[list]]:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    if suite == "heads":
        train_set = load_split(manifest_path, kind, "train")
        eval_set = load_split(manifest_path, kind, "eval")
        rows = []
        for n in HEAD_GRID:
            acc = _train_eval(replace(config, heads=n),
                              train_set, eval_set, tconfig, threads)
            rows.append([n, acc])
        return ["heads", "top1"], rows

    if suite == "layer-placement":
        train_set = load_split(manifest_path, kind, "train")
        eval_set = load_split(manifest_path, kind, "eval")
        rows = []
        for index in range(1, len(config.layers) + 1):
            acc = _train_eval(_with_insertion(config, index),
                              train_set, eval_set, tconfig, threads)
            rows.append([index, acc])
        return ["insertion_layer", "top1"], rows

    # modalities: one training per stream, then fuse per combination
    per_kind_scores = {}
    eval_labels = None
    for stream_kind in MODALITY_COMBOS[-1]:
        train_set = load_split(manifest_path, stream_kind, "train")
        eval_set = load_split(manifest_path, stream_kind, "eval")
        labels = [label for _, label, *_ in eval_set]
        if eval_labels is None:
            eval_labels = labels
        elif labels != eval_labels:
            raise ConfigError("modality streams disagree on eval labels/order")
        network = Network(config)
        train(network, train_set, eval_set, tconfig, threads=threads)
        per_kind_scores[stream_kind] = score_streams(network, eval_set, threads=threads)
    rows = []
    for combo in MODALITY_COMBOS:
        correct = 0
        for i, label in enumerate(eval_labels):
            fused = fuse_streams([per_kind_scores[k][i] for k in combo])
            if int(np.argmax(fused)) == label:
                correct += 1
        rows.append(["+".join(combo), correct / len(eval_labels)])
    return ["modalities", "top1"], rows
