"""Preprocessed dataset storage and the two preprocessing front doors.

A dataset on disk is a directory of per-sample per-modality tensor files
plus `manifest.jsonl`, one JSON object per line:

    {"sample_id": ..., "label": ..., "split": ..., "files": {kind: relpath}}

Input can be a directory of raw `.skeleton` captures (labels taken from the
`A###` action tag in the filename, one split label for the whole directory)
or a JSON description of synthetic sets, e.g.

    {"sets": [
      {"generator": "templates", "classes": 4, "samples_per_class": 32,
       "joints": 5, "frames": 32, "sigma": 0.05, "seed": 7, "split": "train"},
      {"generator": "longrange", "samples_per_class": 32, "joints": 5,
       "frames": 32, "sigma": 0.05, "seed": 8, "split": "eval"}
    ]}
"""
from __future__ import annotations

import json
import logging
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, EmptyClipError
from .graph import SkeletonGraph, chain_graph, ntu_graph
from .modalities import KINDS, all_streams
from .skeleton import (
    MAX_BODIES,
    MOTION_RANGE,
    SkeletonSequence,
    center_and_pad,
    filter_bodies,
    parse_skeleton_file,
    subsample_frames,
)
from .synth import synth_dataset, synth_longrange_dataset
from .tensorio import load_tensor, save_tensor

log = logging.getLogger("tegraph.dataset")

MANIFEST_NAME = "manifest.jsonl"


def label_from_filename(name: str) -> int:
    """Zero-based action label from the A### tag of a capture filename."""
    match = re.search(r"A(\d{3})", name)
    if match is None:
        raise DataError(f"{name}: no A### action tag to take the label from")
    return int(match.group(1)) - 1


def preprocess_skeleton_dir(src_dir, fixed_length: int, split: str = "train",
                            lo: float = MOTION_RANGE[0], hi: float = MOTION_RANGE[1],
                            max_bodies: int = MAX_BODIES
                            ) -> tuple[list[tuple[SkeletonSequence, str]], SkeletonGraph]:
    """Parse, filter, subsample, and center every capture under `src_dir`.

    Clips left empty by body filtering are skipped with a log line, matching
    the "reject and note it" contract rather than failing the whole run.
    """
    src_dir = Path(src_dir)
    paths = sorted(src_dir.glob("*.skeleton"))
    if not paths:
        raise DataError(f"{src_dir}: no .skeleton files found")
    graph = ntu_graph()
    out = []
    for path in paths:
        label = label_from_filename(path.name)
        clip = parse_skeleton_file(path.read_text(), source_id=path.name)
        try:
            clip = filter_bodies(clip, lo, hi, max_bodies)
        except EmptyClipError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        clip = subsample_frames(clip, fixed_length)
        seq = center_and_pad(clip, fixed_length, max_bodies=max_bodies, label=label)
        out.append((seq, split))
    if not out:
        raise DataError(f"{src_dir}: every clip was rejected by body filtering")
    return out, graph


def generate_synthetic(spec: dict) -> tuple[list[tuple[SkeletonSequence, str]], SkeletonGraph]:
    sets = spec.get("sets", [spec])
    out: list[tuple[SkeletonSequence, str]] = []
    joints = None
    for block in sets:
        kind = block.get("generator", "templates")
        block_joints = int(block.get("joints", 5))
        if joints is None:
            joints = block_joints
        elif joints != block_joints:
            raise ConfigError("all synthetic sets must agree on the joint count")
        split = str(block.get("split", "train"))
        frames = int(block.get("frames", 32))
        sigma = float(block.get("sigma", 0.05))
        seed = int(block.get("seed", 0))
        per_class = int(block.get("samples_per_class", 32))
        if kind == "templates":
            samples = synth_dataset(int(block.get("classes", 4)), per_class,
                                    block_joints, frames, sigma, seed)
        elif kind == "longrange":
            samples = synth_longrange_dataset(per_class, block_joints, frames,
                                              sigma, seed)
        else:
            raise ConfigError(f"unknown synthetic generator {kind!r}")
        prefix = block.get("prefix", split)
        for seq in samples:
            seq.source_id = f"{prefix}-{seq.source_id}"
            out.append((seq, split))
    return out, chain_graph(joints, 0)


def write_dataset(out_dir, labeled: list[tuple[SkeletonSequence, str]],
                  graph: SkeletonGraph, kinds=KINDS) -> Path:
    out_dir = Path(out_dir)
    streams_dir = out_dir / "streams"
    streams_dir.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown modality kind {kind!r}; choose from {KINDS}")
    lines = []
    seen = set()
    for seq, split in labeled:
        if seq.source_id in seen:
            raise DataError(f"duplicate sample id {seq.source_id}")
        seen.add(seq.source_id)
        streams = all_streams(seq, graph)
        files = {}
        for kind in kinds:
            rel = f"streams/{seq.source_id}.{kind}.tegt"
            save_tensor(out_dir / rel, streams[kind].data)
            files[kind] = rel
        lines.append(json.dumps(
            {"sample_id": seq.source_id, "label": seq.label, "split": split,
             "files": files},
            sort_keys=True,
        ))
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(manifest_path) -> list[dict]:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"{manifest_path}: manifest not found")
    records = []
    for i, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{manifest_path}: line {i}: bad JSON: {exc}")
    if not records:
        raise DataError(f"{manifest_path}: empty manifest")
    return records


def load_split(manifest_path, kind: str, split: str) -> list[tuple[np.ndarray, int, str]]:
    """(data, label, sample_id) triples of one modality for one split."""
    if kind not in KINDS:
        raise ConfigError(f"unknown modality kind {kind!r}; choose from {KINDS}")
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    out = []
    for rec in read_manifest(manifest_path):
        if rec["split"] != split:
            continue
        if kind not in rec["files"]:
            raise DataError(f"sample {rec['sample_id']} has no {kind} stream")
        out.append((load_tensor(base / rec["files"][kind]), int(rec["label"]),
                    str(rec["sample_id"])))
    return out
