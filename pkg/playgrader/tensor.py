"""Recorded-op tape: the handful of differentiable operations the networks need.

Every op is a ``Function`` whose ``apply`` records its inputs on the output tensor
while gradient recording is enabled for the current thread. ``backward`` walks the
record in reverse topological order, so gradients through an unrolled LSTM
accumulate across timesteps in linear time.
"""
from __future__ import annotations

import threading
from typing import Dict, List, Optional, Sequence

import numpy as np

from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderException

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


class no_grad:
    """Context manager disabling the tape for the current thread only."""

    def __enter__(self):
        self._previous = is_grad_enabled()
        _grad_mode.enabled = False
        return self

    def __exit__(self, *args):
        _grad_mode.enabled = self._previous


class Tensor:
    __slots__ = ("data", "requires_grad", "_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self._fn: Optional[Function] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        suffix = f", fn=<{type(self._fn).__name__}>" if self._fn else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{suffix})"

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return Add.apply(self, self._lift(other))

    def __radd__(self, other):
        return Add.apply(self._lift(other), self)

    def __sub__(self, other):
        return Sub.apply(self, self._lift(other))

    def __rsub__(self, other):
        return Sub.apply(self._lift(other), self)

    def __mul__(self, other):
        return Mul.apply(self, self._lift(other))

    def __rmul__(self, other):
        return Mul.apply(self._lift(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __getitem__(self, key):
        return Index.apply(self, key=key)

    def sum(self):
        return Sum.apply(self)

    def mean(self):
        return Mean.apply(self)

    def relu(self):
        return Relu.apply(self)

    def sigmoid(self):
        return Sigmoid.apply(self)

    def tanh(self):
        return Tanh.apply(self)

    def square(self):
        return Square.apply(self)

    def log_softmax(self):
        return LogSoftmax.apply(self)


class Function:
    """One recorded operation; subclasses implement numpy forward/backward."""

    def __init__(self):
        self.inputs: Sequence[Tensor] = ()

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        fn = cls()
        out = Tensor(fn.forward(*(t.data for t in inputs), **kwargs))
        if is_grad_enabled() and any(t.requires_grad for t in inputs):
            fn.inputs = inputs
            out.requires_grad = True
            out._fn = fn
        return out

    def forward(self, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Add(Function):
    def forward(self, x, y):
        return x + y

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, x, y):
        return x - y

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, x, y):
        self.saved = (x, y)
        return x * y

    def backward(self, grad):
        x, y = self.saved
        return grad * y, grad * x


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Linear(Function):
    """weight·x + bias for a vector or a batch of row vectors."""

    def forward(self, x, weight, bias):
        if x.shape[-1] != weight.shape[1]:
            raise PlayGraderConfigurationException(
                "Linear input has %s features, weight expects %s.", x.shape[-1], weight.shape[1])
        self.saved = (x, weight)
        return x @ weight.T + bias

    def backward(self, grad):
        x, weight = self.saved
        grad_x = grad @ weight
        if x.ndim == 1:
            grad_weight = np.outer(grad, x)
        else:
            grad_weight = grad.reshape(-1, grad.shape[-1]).T @ x.reshape(-1, x.shape[-1])
        return grad_x, grad_weight, grad


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        # tanh form stays finite for large |x|
        self.out = 0.5 * (1 + np.tanh(0.5 * x))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1 - self.out ** 2),)


class Square(Function):
    def forward(self, x):
        self.x = x
        return x * x

    def backward(self, grad):
        return (2 * grad * self.x,)


class Huber(Function):
    def forward(self, x, delta=1.0):
        self.x, self.delta = x, delta
        small = np.abs(x) <= delta
        return np.where(small, 0.5 * x * x, delta * (np.abs(x) - 0.5 * delta))

    def backward(self, grad):
        return (grad * np.clip(self.x, -self.delta, self.delta),)


class Concat(Function):
    def forward(self, *xs):
        self.sizes = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1)

    def backward(self, grad):
        bounds = np.cumsum([0] + self.sizes)
        return tuple(grad[..., start:stop] for start, stop in zip(bounds[:-1], bounds[1:]))


class Slice(Function):
    """Slice of the last axis."""

    def forward(self, x, start=0, stop=None):
        self.shape, self.start, self.stop = x.shape, start, stop
        return x[..., start:stop]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        out[..., self.start:self.stop] = grad
        return (out,)


class Embedding(Function):
    def forward(self, table, indices=None):
        self.rows, self.indices = table.shape, indices
        return table[indices]

    def backward(self, grad):
        out = np.zeros(self.rows, dtype=grad.dtype)
        np.add.at(out, self.indices, grad)
        return (out,)


class Stack(Function):
    def forward(self, *xs):
        return np.stack(xs, axis=0)

    def backward(self, grad):
        return tuple(grad[i] for i in range(grad.shape[0]))


class Index(Function):
    def forward(self, x, key=None):
        self.shape, self.key = x.shape, key
        return x[key]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(out, self.key, grad)
        return (out,)


class Sum(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad):
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.mean())

    def backward(self, grad):
        return (np.broadcast_to(grad / max(1, int(np.prod(self.shape))), self.shape).copy(),)


class LogSoftmax(Function):
    def forward(self, x):
        shifted = x - x.max(axis=-1, keepdims=True)
        log_total = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        self.out = shifted - log_total
        return self.out

    def backward(self, grad):
        return (grad - np.exp(self.out) * grad.sum(axis=-1, keepdims=True),)


def concat(tensors: List[Tensor]) -> Tensor:
    return Concat.apply(*tensors)


def stack(tensors: List[Tensor]) -> Tensor:
    return Stack.apply(*tensors)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    return Slice.apply(x, start=start, stop=stop)


def huber(x: Tensor, delta: float = 1.0) -> Tensor:
    return Huber.apply(x, delta=delta)


def _topological_order(root: Tensor) -> List[Tensor]:
    order, visited = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        if node._fn is not None:
            for parent in node._fn.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> Dict[int, np.ndarray]:
    """Gradients of a scalar loss for every leaf on its record, keyed by ``id``."""
    if not loss.requires_grad or loss._fn is None:
        raise PlayGraderException("Loss was not produced by recorded operations.")
    if loss.data.size != 1:
        raise PlayGraderException("Loss must be a scalar, got shape %s.", loss.shape)

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._fn is None:
            leaves[id(node)] = grad
            continue
        for parent, parent_grad in zip(node._fn.inputs, node._fn.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            parent_grad = _unbroadcast(parent_grad, parent.shape)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
    return leaves
