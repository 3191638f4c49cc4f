"""Dense tensors with taped reverse-mode differentiation.

The design is deliberately small: a Tensor wraps a numpy array in the
process-global precision (see precision.py), operations are pure functions
that optionally record a backward rule on the active Tape, and a Tape is a
plain Wengert list replayed in strict reverse execution order.  There is no
broadcasting beyond scalar `scale`; reshape/permute/pad/slice are explicit
ops so every backward rule stays auditable.

Concurrency contract: tensors are never mutated by operations, so forward
evaluation against frozen parameters is thread-safe.  A Tape is thread-local
and must stay confined to the thread that created it.  Parameter mutation
(optimizer steps, gradient zeroing) requires exclusive access.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from . import precision
from .errors import NumericError, ShapeError

_finite_checks = True


def set_finite_checks(enabled: bool) -> None:
    """Toggle the all-values-finite assertion applied after every op."""
    global _finite_checks
    _finite_checks = enabled


def _check_finite(arr: np.ndarray, op: str) -> None:
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced non-finite values")


class Tensor:
    """Immutable-by-convention dense array of the current global dtype.

    `grad` is filled in by Tape.backward; it is None until the tensor has
    received its first contribution (parameters pre-allocate zeros instead,
    see Parameter).
    """

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=precision.dtype())
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Parameter:
    """A named trainable tensor with a persistent gradient buffer.

    The gradient buffer accumulates across backward passes (one contribution
    per pass) until `zero_grad` resets it; this is what batch-gradient
    accumulation relies on.
    """

    __slots__ = ("value", "identifier")

    def __init__(self, value, identifier: str):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.value.grad = np.zeros_like(self.value.data)
        self.identifier = identifier

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.value.grad = np.zeros_like(self.value.data)

    def assign(self, data: np.ndarray) -> None:
        """Overwrite the parameter value in place (exclusive access required)."""
        if data.shape != self.value.data.shape:
            raise ShapeError(
                f"parameter {self.identifier}: cannot assign shape {data.shape} "
                f"over {self.value.data.shape}"
            )
        self.value.data = np.asarray(data, dtype=precision.dtype()).copy()

    def __repr__(self) -> str:
        return f"Parameter({self.identifier!r}, shape={self.shape})"


_tls = threading.local()


def _stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed operations for one forward pass.

    Backward rules are closures over the op's input/output tensors; replay
    happens in strict reverse execution order, which for a DAG guarantees an
    output's gradient is complete before its producer's rule runs.
    """

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _stack().pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted: tapes must nest")
        return False

    def record(self, rule: Callable[[], None]) -> None:
        self._records.append(rule)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, output: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            seed = np.ones(output.shape, dtype=output.data.dtype)
        _accumulate(output, np.asarray(seed, dtype=output.data.dtype))
        for rule in reversed(self._records):
            rule()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g)  # own the buffer so later += cannot alias
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# Differentiable operations.  Each returns a fresh Tensor and, when a tape is
# active, records a single backward rule.  OP_NAMES is the registry the
# gradient-check suite iterates over.

OP_NAMES = [
    "matmul",
    "softmax_rows",
    "log_softmax_rows",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "reshape",
    "permute",
    "pad_axis",
    "slice_axis",
    "sum_all",
    "sum_axis",
    "batchnorm",
]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    _check_finite(out.data, "matmul")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad @ b.data.T)
            _accumulate(b, a.data.T @ out.grad)

        tape.record(rule)
    return out


def softmax_rows(m: Tensor) -> Tensor:
    if m.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D tensor, got {m.shape}")
    shifted = m.data - m.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=1, keepdims=True))
    _check_finite(out.data, "softmax_rows")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            s = out.data
            _accumulate(m, s * (out.grad - np.sum(out.grad * s, axis=1, keepdims=True)))

        tape.record(rule)
    return out


def log_softmax_rows(m: Tensor) -> Tensor:
    if m.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows expects a 2-D tensor, got {m.shape}")
    shifted = m.data - m.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = Tensor(shifted - log_z)
    _check_finite(out.data, "log_softmax_rows")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            soft = np.exp(out.data)
            _accumulate(m, out.grad - soft * out.grad.sum(axis=1, keepdims=True))

        tape.record(rule)
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes differ, {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    _check_finite(out.data, "add")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad)
            _accumulate(b, out.grad)

        tape.record(rule)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    _check_finite(out.data, "sub")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad)
            _accumulate(b, -out.grad)

        tape.record(rule)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    _check_finite(out.data, "mul")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad * b.data)
            _accumulate(b, out.grad * a.data)

        tape.record(rule)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)
    _check_finite(out.data, "scale")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad * s)

        tape.record(rule)
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    tape = active_tape()
    if tape is not None:
        mask = a.data > 0  # non-positive inputs get zero gradient

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad * mask)

        tape.record(rule)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    out = Tensor(a.data.reshape(shape))
    tape = active_tape()
    if tape is not None:
        original = a.shape

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad.reshape(original))

        tape.record(rule)
    return out


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {a.data.ndim} axes")
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    tape = active_tape()
    if tape is not None:
        inverse = tuple(np.argsort(axes))

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad.transpose(inverse))

        tape.record(rule)
    return out


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    if before < 0 or after < 0:
        raise ShapeError("pad_axis: pad widths must be non-negative")
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (before, after)
    out = Tensor(np.pad(a.data, widths))
    tape = active_tape()
    if tape is not None:
        index = [slice(None)] * a.data.ndim
        index[axis] = slice(before, before + a.shape[axis])
        index = tuple(index)

        def rule():
            if out.grad is None:
                return
            _accumulate(a, out.grad[index])

        tape.record(rule)
    return out


def slice_axis(a: Tensor, axis: int, start: int, stop: int, step: int = 1) -> Tensor:
    if step < 1:
        raise ShapeError("slice_axis: step must be positive")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop, step)
    index = tuple(index)
    out = Tensor(np.ascontiguousarray(a.data[index]))
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accumulate(a, g)

        tape.record(rule)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    _check_finite(out.data, "sum_all")
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def rule():
            if out.grad is None:
                return
            _accumulate(a, np.broadcast_to(out.grad, shape))

        tape.record(rule)
    return out


def sum_axis(a: Tensor, axis: int) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))
    _check_finite(out.data, "sum_axis")
    tape = active_tape()
    if tape is not None:

        def rule():
            if out.grad is None:
                return
            _accumulate(a, np.broadcast_to(np.expand_dims(out.grad, axis), a.shape))

        tape.record(rule)
    return out


def constant(data) -> Tensor:
    """A tensor that participates in the graph but is never trained."""
    return Tensor(np.asarray(data))


def collect_parameters(items: Iterable) -> list[Parameter]:
    """Flatten nested lists/objects exposing `.parameters()` into one list."""
    out: list[Parameter] = []
    for item in items:
        if isinstance(item, Parameter):
            out.append(item)
        elif hasattr(item, "parameters"):
            out.extend(item.parameters())
        else:
            out.extend(collect_parameters(item))
    return out
