"""Batch normalization over the leading channel axis.

Implemented as a dedicated taped op with a hand-written backward rather than
a composition of primitives: the composed graph would be an order of
magnitude more tape records per layer, and the closed-form gradient is the
one place the chain rule is genuinely error-prone, so it gets its own
gradient-check entry.

Statistics reduce over every axis except axis 0; an input of shape
(C, T, J) is normalized per channel over all frames and joints.  Variance is
the population variance (ddof=0) both for normalization and for the running
buffers, so a long run of identical batches makes eval mode converge exactly
to train mode.
"""
from __future__ import annotations

import numpy as np

from . import init, precision
from .errors import ShapeError
from .tensor import Parameter, Tensor, _accumulate, _check_finite, active_tape


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    if x.data.ndim < 2:
        raise ShapeError(f"batchnorm expects rank >= 2, got shape {x.shape}")
    channels = x.shape[0]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"batchnorm: scale/shift shapes {gamma.shape}/{beta.shape} "
            f"do not match {channels} channels"
        )
    axes = tuple(range(1, x.data.ndim))
    bshape = (channels,) + (1,) * (x.data.ndim - 1)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var

    sigma = np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) / sigma.reshape(bshape)
    out = Tensor(gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape))
    _check_finite(out.data, "batchnorm")

    tape = active_tape()
    if tape is not None:
        inv_sigma = (gamma.data / sigma).reshape(bshape)

        def rule():
            if out.grad is None:
                return
            dy = out.grad
            _accumulate(beta, dy.sum(axis=axes))
            _accumulate(gamma, (dy * xhat).sum(axis=axes))
            if training:
                # Batch statistics depend on x, hence the two centering terms.
                m_dy = dy.mean(axis=axes).reshape(bshape)
                m_dy_xhat = (dy * xhat).mean(axis=axes).reshape(bshape)
                _accumulate(x, inv_sigma * (dy - m_dy - xhat * m_dy_xhat))
            else:
                _accumulate(x, inv_sigma * dy)

        tape.record(rule)
    return out


class BatchNorm:
    """Stateful wrapper owning scale/shift parameters and running buffers."""

    def __init__(self, channels: int, identifier: str, eps: float = 1e-5, momentum: float = 0.1):
        self.channels = channels
        self.identifier = identifier
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(init.ones((channels,)), identifier + ".gamma")
        self.beta = Parameter(init.zeros((channels,)), identifier + ".beta")
        self.running_mean = init.zeros((channels,))
        self.running_var = init.ones((channels,))
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm(
            x,
            self.gamma.value,
            self.beta.value,
            self.running_mean,
            self.running_var,
            self.training,
            self.eps,
            self.momentum,
        )

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return [
            (self.identifier + ".running_mean", self.running_mean),
            (self.identifier + ".running_var", self.running_var),
        ]

    def load_buffer(self, name: str, data: np.ndarray) -> None:
        data = np.asarray(data, dtype=precision.dtype()).copy()
        if name.endswith(".running_mean"):
            self.running_mean = data
        elif name.endswith(".running_var"):
            self.running_var = data
        else:
            raise KeyError(name)
