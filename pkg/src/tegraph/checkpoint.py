"""Checkpoint files: one JSON manifest plus concatenated binary tensors.

Layout: u32 little-endian manifest length, manifest bytes (JSON, sorted
keys so identical states serialize to identical bytes), then one tensor
record per manifest entry in order.  Entries cover trainable parameters,
batchnorm running buffers, and (when the trainer passes them) momentum
buffers, each keyed by the owning parameter's identifier.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, DataError
from .model import ModelConfig, Network
from .tensorio import read_tensor, write_tensor

FORMAT_NAME = "tegraph-checkpoint"
FORMAT_VERSION = 1


def _network_entries(network: Network) -> list[tuple[str, str, np.ndarray]]:
    entries = [(p.identifier, "param", p.value.data) for p in network.parameters()]
    for bn in network.batchnorms():
        for name, buf in bn.buffers():
            entries.append((name, "buffer", buf))
    return entries


def save_checkpoint(path, network: Network, epoch: int,
                    momentum: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> None:
    entries = _network_entries(network)
    if momentum is not None:
        for name in sorted(momentum):
            entries.append((name, "momentum", momentum[name]))
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": network.config.to_dict(),
        "epoch": epoch,
        "extra": extra or {},
        "entries": [
            {"id": name, "kind": kind, "shape": list(arr.shape)}
            for name, kind, arr in entries
        ],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as stream:
        stream.write(struct.pack("<I", len(blob)))
        stream.write(blob)
        for _, _, arr in entries:
            write_tensor(stream, arr)


def load_checkpoint(path) -> tuple[dict, dict[tuple[str, str], np.ndarray]]:
    """Returns (manifest, {(id, kind): array})."""
    with open(path, "rb") as stream:
        header = stream.read(4)
        if len(header) != 4:
            raise DataError(f"{path}: truncated checkpoint header")
        (length,) = struct.unpack("<I", header)
        blob = stream.read(length)
        if len(blob) != length:
            raise DataError(f"{path}: truncated checkpoint manifest")
        try:
            manifest = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad checkpoint manifest: {exc}")
        if manifest.get("format") != FORMAT_NAME:
            raise DataError(f"{path}: not a checkpoint file")
        tensors: dict[tuple[str, str], np.ndarray] = {}
        for entry in manifest["entries"]:
            arr = read_tensor(stream)
            if list(arr.shape) != entry["shape"]:
                raise DataError(
                    f"{path}: entry {entry['id']}: payload shape {arr.shape} "
                    f"disagrees with manifest {entry['shape']}"
                )
            tensors[(entry["id"], entry["kind"])] = arr
    return manifest, tensors


def restore_network(network: Network, manifest: dict,
                    tensors: dict[tuple[str, str], np.ndarray]) -> dict[str, np.ndarray]:
    """Load parameter and buffer values into `network`; returns momentum buffers.

    The checkpoint's config must match the network's: loading half a model
    is always a mistake at this scale.
    """
    if manifest["config"] != network.config.to_dict():
        raise ConfigError("checkpoint config does not match the constructed model")
    for p in network.parameters():
        key = (p.identifier, "param")
        if key not in tensors:
            raise ConfigError(f"checkpoint missing parameter {p.identifier}")
        p.assign(tensors[key])
    for bn in network.batchnorms():
        for name, _ in bn.buffers():
            key = (name, "buffer")
            if key not in tensors:
                raise ConfigError(f"checkpoint missing buffer {name}")
            bn.load_buffer(name, tensors[key])
    return {
        name: arr for (name, kind), arr in tensors.items() if kind == "momentum"
    }


def network_from_checkpoint(path) -> tuple[Network, dict, dict[str, np.ndarray]]:
    manifest, tensors = load_checkpoint(path)
    config = ModelConfig.from_dict(manifest["config"])
    network = Network(config)
    momentum = restore_network(network, manifest, tensors)
    return network, manifest, momentum
