"""Skeleton-sequence action recognition with temporal relation graphs.

The package is layered bottom-up:

    tensor / batchnorm / gradcheck   taped autodiff core and its verifier
    tensorio / checkpoint / dataset  binary formats and dataset storage
    graph / skeleton / modalities    joint graph and preprocessing
    blocks / temporal / model        network building blocks and assembly
    training / ablate / cli          experiment drivers

Numeric precision is a process-global switch (precision.set_mode): float64
"verify" for all checking, float32 "train" for faster experiment loops.
"""
from .errors import (
    ConfigError,
    DataError,
    EmptyClipError,
    GraphError,
    NumericError,
    ParseError,
    ShapeError,
    TegraphError,
)
from .precision import scoped_mode, set_mode
from .tensor import Parameter, Tape, Tensor

__all__ = [
    "ConfigError",
    "DataError",
    "EmptyClipError",
    "GraphError",
    "NumericError",
    "ParseError",
    "Parameter",
    "ShapeError",
    "Tape",
    "TegraphError",
    "Tensor",
    "scoped_mode",
    "set_mode",
]

__version__ = "0.1.0"
