"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records every primitive operation executed inside its
``with`` block as a Wengert list.  Because entries are appended in
execution order, walking the list backwards visits each node after all
of its consumers, so :func:`backward` is a single reverse sweep that
accumulates gradients into a :class:`GradientMap`.

Tensors created outside any active tape, or from inputs that do not
require gradients, are plain value carriers: no graph is kept and no
memory accumulates.  This is the evaluation mode used by metrics and
inference code.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import ConfigurationError, ShapeMismatchError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "SGD",
    "backward",
    "as_tensor",
    "matmul",
    "transpose",
    "add",
    "subtract",
    "multiply",
    "divide",
    "negative",
    "log",
    "relu",
    "maximum",
    "softmax",
    "tensor_sum",
    "tensor_mean",
    "concat",
]

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """A float64 array plus a flag marking it as a gradient target.

    The array in ``data`` is owned by the tensor and must not be
    mutated while a tape that references it is still alive, with one
    exception: optimizers update parameter data in place *between*
    tapes, which is safe because each training step records a fresh
    tape.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same values that no tape will track."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return subtract(self, as_tensor(other))

    def __rsub__(self, other):
        return subtract(as_tensor(other), self)

    def __mul__(self, other):
        return multiply(self, as_tensor(other))

    def __rmul__(self, other):
        return multiply(as_tensor(other), self)

    def __truediv__(self, other):
        return divide(self, as_tensor(other))

    def __rtruediv__(self, other):
        return divide(as_tensor(other), self)

    def __neg__(self):
        return negative(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def transpose(self) -> "Tensor":
        return transpose(self)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _TapeEntry:
    __slots__ = ("op", "inputs", "output", "forward_fn", "backward_fn")

    def __init__(self, op, inputs, output, forward_fn, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.forward_fn = forward_fn
        self.backward_fn = backward_fn


class Tape:
    """Execution-ordered record of primitive operations.

    Use as a context manager.  Nested tapes are allowed; only the
    innermost active tape records.
    """

    def __init__(self):
        self._entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise RuntimeError("tape stack corrupted")
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def _record(self, op, inputs, output, forward_fn, backward_fn) -> None:
        self._entries.append(_TapeEntry(op, inputs, output, forward_fn, backward_fn))

    def replay(self) -> None:
        """Recompute every recorded output in place from current inputs.

        Useful for finite-difference checks: perturb a leaf, replay,
        and read the refreshed downstream values.
        """
        for entry in self._entries:
            entry.output.data = entry.forward_fn()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
          forward_fn: Callable[[], np.ndarray],
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap a primitive's result, recording it if a tape is active."""
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(op, tuple(inputs), out, forward_fn, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over axes that numpy broadcasting introduced."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul expects (m,k) @ (k,n), got {a.shape} @ {b.shape}")

    def fwd():
        return a.data @ b.data

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _emit("matmul", (a, b), a.data @ b.data, fwd, bwd)


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError(f"transpose expects a matrix, got shape {a.shape}")

    def fwd():
        return a.data.T.copy()

    def bwd(g):
        return (g.T if a.requires_grad else None,)

    return _emit("transpose", (a,), a.data.T.copy(), fwd, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd():
        return a.data + b.data

    def bwd(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("add", (a, b), a.data + b.data, fwd, bwd)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd():
        return a.data - b.data

    def bwd(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("sub", (a, b), a.data - b.data, fwd, bwd)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd():
        return a.data * b.data

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("mul", (a, b), a.data * b.data, fwd, bwd)


def divide(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd():
        return a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = (_unbroadcast(-g * a.data / (b.data * b.data), b.shape)
              if b.requires_grad else None)
        return ga, gb

    return _emit("div", (a, b), a.data / b.data, fwd, bwd)


def negative(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def fwd():
        return -a.data

    def bwd(g):
        return (-g if a.requires_grad else None,)

    return _emit("neg", (a,), -a.data, fwd, bwd)


def log(a: Tensor) -> Tensor:
    """Natural logarithm.  Callers are responsible for positive inputs."""
    a = as_tensor(a)

    def fwd():
        return np.log(a.data)

    def bwd(g):
        return (g / a.data if a.requires_grad else None,)

    return _emit("log", (a,), np.log(a.data), fwd, bwd)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(x, 0) with subgradient 0 at the kink."""
    a = as_tensor(a)

    def fwd():
        return np.maximum(a.data, 0.0)

    def bwd(g):
        return (g * (a.data > 0.0) if a.requires_grad else None,)

    return _emit("relu", (a,), np.maximum(a.data, 0.0), fwd, bwd)


def maximum(a: Tensor, floor: float) -> Tensor:
    """Elementwise max with a constant, passing gradient where a > floor."""
    a = as_tensor(a)
    floor = float(floor)

    def fwd():
        return np.maximum(a.data, floor)

    def bwd(g):
        return (g * (a.data > floor) if a.requires_grad else None,)

    return _emit("max_const", (a,), np.maximum(a.data, floor), fwd, bwd)


def softmax(logits: Tensor, tau: float, axis: int = -1) -> Tensor:
    """Temperature-scaled softmax along ``axis``.

    Computed with a max shift for stability.  The temperature divides
    the logits, so small tau sharpens the output.
    """
    a = as_tensor(logits)
    tau = float(tau)
    if tau <= 0.0:
        raise ConfigurationError(f"softmax temperature must be positive, got {tau}")

    def compute():
        z = a.data / tau
        if z.size:
            z = z - z.max(axis=axis, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=axis, keepdims=True)

    out_data = compute()

    def bwd(g):
        if not a.requires_grad:
            return (None,)
        y = out.data
        inner = (g * y).sum(axis=axis, keepdims=True)
        return ((y * (g - inner)) / tau,)

    out = _emit("softmax", (a,), out_data, compute, bwd)
    return out


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def fwd():
        return np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if not a.requires_grad:
            return (None,)
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", (a,), np.asarray(a.data.sum(axis=axis, keepdims=keepdims)),
                 fwd, bwd)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.shape[axis]
    if count == 0:
        raise UsageError("mean over an empty axis is undefined")

    def fwd():
        return np.asarray(a.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        if not a.requires_grad:
            return (None,)
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _emit("mean", (a,), np.asarray(a.data.mean(axis=axis, keepdims=keepdims)),
                 fwd, bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise UsageError("concat needs at least one tensor")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def fwd():
        return np.concatenate([p.data for p in parts], axis=axis)

    def bwd(g):
        pieces = np.split(g, offsets, axis=axis)
        return tuple(piece if p.requires_grad else None
                     for p, piece in zip(parts, pieces))

    return _emit("concat", tuple(parts),
                 np.concatenate([p.data for p in parts], axis=axis), fwd, bwd)


class GradientMap:
    """Read-only map from parameter tensors to gradient arrays.

    Tensors the objective never touched resolve to zeros of the right
    shape, so optimizers can iterate a full parameter list without
    special cases.  Entries keep their tensor alive so that id-based
    lookup can never alias a recycled object.
    """

    def __init__(self, grads: dict[int, tuple[Tensor, np.ndarray]]):
        self._grads = grads

    def grad(self, tensor: Tensor) -> np.ndarray:
        found = self._grads.get(id(tensor))
        if found is None:
            return np.zeros_like(tensor.data)
        return found[1]

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads


def backward(loss: Tensor, tape: Tape) -> GradientMap:
    """Single reverse sweep over ``tape`` seeding d(loss)/d(loss) = 1.

    ``loss`` must be scalar (size-1).  Returns gradients for every
    grad-requiring tensor the sweep reached.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.shape}")
    grads: dict[int, tuple[Tensor, np.ndarray]] = {
        id(loss): (loss, np.ones_like(loss.data))
    }
    for entry in reversed(tape._entries):
        found = grads.get(id(entry.output))
        if found is None:
            continue
        input_grads = entry.backward_fn(found[1])
        for tensor, g_in in zip(entry.inputs, input_grads):
            if g_in is None or not tensor.requires_grad:
                continue
            g_in = np.asarray(g_in, dtype=np.float64)
            if g_in.shape != tensor.data.shape:
                g_in = g_in.reshape(tensor.data.shape)
            key = id(tensor)
            if key in grads:
                grads[key] = (tensor, grads[key][1] + g_in)
            else:
                grads[key] = (tensor, g_in)
    return GradientMap(grads)


class SGD:
    """Stochastic gradient descent with classical momentum.

    Velocity update v <- momentum * v + g, parameter update
    w <- w - lr * v, applied in place between tapes.
    """

    def __init__(self, params: Iterable[Tensor], lr: float, momentum: float = 0.0):
        self.lr = float(lr)
        self.momentum = float(momentum)
        if self.lr < 0.0:
            raise ConfigurationError(f"learning rate must be nonnegative, got {lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {momentum}")
        self._params = list(params)
        self._velocity = [np.zeros_like(p.data) for p in self._params]

    def step(self, grads: GradientMap) -> None:
        for p, v in zip(self._params, self._velocity):
            g = grads.grad(p)
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v
