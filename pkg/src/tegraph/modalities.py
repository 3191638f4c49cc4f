"""The four input streams: joint/bone coordinates and their frame differences.

Bone vectors point from the joint nearer the skeleton center to the farther
one and are stored at the farther (target) joint; the center joint has no
incoming bone and stays zero.  Motion streams hold value(t+1) - value(t) at
frame t with an all-zero final frame, keeping every stream the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import SkeletonGraph, bone_pairs
from .skeleton import SkeletonSequence

KINDS = ("joint-spatial", "joint-motion", "bone-spatial", "bone-motion")

_MOTION_OF = {"joint-spatial": "joint-motion", "bone-spatial": "bone-motion"}


@dataclass
class ModalityStream:
    kind: str
    data: np.ndarray  # (C, T, J, M), same shape as the source sequence


def joint_stream(seq: SkeletonSequence) -> ModalityStream:
    return ModalityStream("joint-spatial", seq.data.copy())


def derive_bone(seq: SkeletonSequence, graph: SkeletonGraph) -> ModalityStream:
    if seq.data.shape[2] != graph.num_joints:
        raise DataError(
            f"sequence has {seq.data.shape[2]} joints, graph has {graph.num_joints}"
        )
    bones = np.zeros_like(seq.data)
    for source, target in bone_pairs(graph):
        bones[:, :, target, :] = seq.data[:, :, target, :] - seq.data[:, :, source, :]
    return ModalityStream("bone-spatial", bones)


def derive_motion(stream: ModalityStream) -> ModalityStream:
    frames = stream.data.shape[1]
    if frames < 2:
        raise DataError(f"motion needs at least 2 frames, got {frames}")
    if stream.kind not in _MOTION_OF:
        raise DataError(f"cannot derive motion from a {stream.kind} stream")
    motion = np.zeros_like(stream.data)
    motion[:, :-1] = stream.data[:, 1:] - stream.data[:, :-1]
    return ModalityStream(_MOTION_OF[stream.kind], motion)


def all_streams(seq: SkeletonSequence, graph: SkeletonGraph) -> dict[str, ModalityStream]:
    """kind -> stream for all four modalities of one sequence."""
    joint = joint_stream(seq)
    bone = derive_bone(seq, graph)
    return {
        joint.kind: joint,
        "joint-motion": derive_motion(joint),
        bone.kind: bone,
        "bone-motion": derive_motion(bone),
    }
