"""Synthetic desk-scale corpora.

Two generators:

* `synth_dataset` - K classes on a chain skeleton, each class a sinusoidal
  burst of class-specific frequency/phase on a class-specific joint inside a
  pause-burst-pause envelope.  Easy to separate; used for trainer smoke
  experiments and the nearest-template sanity oracle.

* `synth_longrange_dataset` - two classes that are locally identical: both
  contain one positive and one negative burst of the same shape on the same
  joint, and differ only in which comes first.  Any stride-1 temporal-conv
  feature extractor followed by global average pooling sees the same
  multiset of local windows for both classes (the bursts sit far enough
  apart, and far enough from the sequence ends, that no width-5 receptive
  field straddles both a burst and the zero padding), so such a model cannot
  beat chance in distribution.  Separating the classes requires relating
  widely separated frames, which is the point.

All samples are single-body sequences shaped (3, T, J, 1); determinism is
per (seed) via one generator stream consumed in a fixed order.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .skeleton import SkeletonSequence

REST_SPACING = 0.1  # chain rest pose: joint j sits at (j * spacing, 0, 0)


def chain_rest_pose(num_joints: int, fixed_length: int) -> np.ndarray:
    base = np.zeros((3, fixed_length, num_joints), dtype=np.float64)
    base[0] = (np.arange(num_joints) * REST_SPACING)[None, :]
    return base


def class_template(cls: int, num_classes: int, num_joints: int,
                   fixed_length: int) -> np.ndarray:
    """Noise-free signal for one class, shape (3, T, J)."""
    if not 0 <= cls < num_classes:
        raise ConfigError(f"class {cls} out of range for {num_classes} classes")
    template = chain_rest_pose(num_joints, fixed_length)
    joint = cls % num_joints
    start = fixed_length // 4
    span = fixed_length // 2
    t = np.arange(start, start + span)
    u = (t - start) / span
    envelope = np.sin(np.pi * u) ** 2
    frequency = 1.0 + cls
    phase = 0.6 * cls
    template[1, t, joint] += 0.5 * envelope * np.sin(2.0 * np.pi * frequency * u + phase)
    return template


def synth_dataset(num_classes: int, samples_per_class: int, num_joints: int,
                  fixed_length: int, noise_sigma: float, seed: int) -> list[SkeletonSequence]:
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    templates = [
        class_template(c, num_classes, num_joints, fixed_length) for c in range(num_classes)
    ]
    samples = []
    for cls in range(num_classes):
        for s in range(samples_per_class):
            noisy = templates[cls] + rng.normal(0.0, noise_sigma, templates[cls].shape)
            samples.append(
                SkeletonSequence(noisy[..., None], cls, f"synth-c{cls}-s{s}")
            )
    return samples


# ---------------------------------------------------------------------------
# Long-range corpus

BURST_LENGTH = 8
EARLY_START = 5
LATE_START = 19
BURST_JITTER = 1
MOVING_AXIS = 1  # y


def _burst() -> np.ndarray:
    u = np.arange(BURST_LENGTH) / BURST_LENGTH
    return np.sin(2.0 * np.pi * u) * np.sin(np.pi * u) ** 2


def longrange_template(cls: int, num_joints: int, fixed_length: int,
                       early_jitter: int = 0, late_jitter: int = 0) -> np.ndarray:
    """Class 0: positive burst then negative; class 1: the reverse."""
    if cls not in (0, 1):
        raise ConfigError("the long-range corpus has exactly 2 classes")
    if fixed_length < LATE_START + BURST_JITTER + BURST_LENGTH + 4:
        raise ConfigError(f"fixed length {fixed_length} too short for the burst layout")
    template = chain_rest_pose(num_joints, fixed_length)
    tip = num_joints - 1
    burst = _burst()
    early_sign = 1.0 if cls == 0 else -1.0
    for start, sign in (
        (EARLY_START + early_jitter, early_sign),
        (LATE_START + late_jitter, -early_sign),
    ):
        template[MOVING_AXIS, start:start + BURST_LENGTH, tip] += sign * burst
    return template


def synth_longrange_dataset(samples_per_class: int, num_joints: int = 5,
                            fixed_length: int = 32, noise_sigma: float = 0.05,
                            seed: int = 0) -> list[SkeletonSequence]:
    rng = np.random.default_rng(seed)
    samples = []
    for cls in (0, 1):
        for s in range(samples_per_class):
            jitters = rng.integers(-BURST_JITTER, BURST_JITTER + 1, size=2)
            clean = longrange_template(
                cls, num_joints, fixed_length, int(jitters[0]), int(jitters[1])
            )
            noisy = clean + rng.normal(0.0, noise_sigma, clean.shape)
            samples.append(
                SkeletonSequence(noisy[..., None], cls, f"longrange-c{cls}-s{s}")
            )
    return samples
