"""Deterministic, name-keyed parameter initialization.

Every parameter gets its own RNG stream derived from (global seed, parameter
identifier) via SHA-256.  Two consequences this codebase relies on:

* initialization is independent of the order parameters are created in, and
* adding parameters to a model (for example an extra temporal-graph head)
  does not perturb the draws of any pre-existing parameter, so a newly
  inserted zero-weight layer leaves all other weights bit-identical.
"""
from __future__ import annotations

import hashlib

import numpy as np

from . import precision


def param_rng(seed: int, identifier: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{identifier}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def uniform_fan_in(seed: int, identifier: str, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform(-b, b) with b = 1/sqrt(fan_in), the usual dense-layer default."""
    bound = 1.0 / np.sqrt(float(fan_in))
    rng = param_rng(seed, identifier)
    # Draw in float64 first so "verify" and "train" modes see the same stream.
    values = rng.uniform(-bound, bound, size=shape)
    return values.astype(precision.dtype())


def zeros(shape: tuple[int, ...]) -> np.ndarray:
    return np.zeros(shape, dtype=precision.dtype())


def ones(shape: tuple[int, ...]) -> np.ndarray:
    return np.ones(shape, dtype=precision.dtype())
