"""Reverse-mode differentiable arrays.

A :class:`Tensor` wraps a float64 numpy array and remembers the operation
that produced it.  Calling :meth:`Tensor.backward` on a scalar walks the
recorded graph in reverse topological order and accumulates ``grad`` on
every tensor that took part in the computation.

Only the handful of operations needed by the attention TCN and the LSTM
regressor are provided; see :mod:`causalaffect.numkernel.layers`.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf values or gradients."""


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {what}")
    return arr


class Tensor:
    """A float64 array with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "name", "_parents", "_backward", "_op")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], Iterable[np.ndarray | None]] | None = None,
        op: str = "leaf",
        name: str | None = None,
    ):
        self.data = _check_finite(np.asarray(data, dtype=np.float64), op)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward
        self._op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Back-propagate from this scalar tensor.

        Gradients accumulate into ``.grad`` of every upstream tensor; call
        :meth:`zero_grad` on leaves between independent backward passes.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            _check_finite(g, f"gradient of {node._op}")
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # elementwise arithmetic ---------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other) -> "Tensor":
        return add(self, mul(other, -1.0))

    def __rsub__(self, other) -> "Tensor":
        return add(mul(self, -1.0), other)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, op="const")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, (a, b), backward, "mul")


def tsum(a: Tensor) -> Tensor:
    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(a.data.sum(), (a,), backward, "sum")


def square(a: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * a.data * g,)

    return Tensor(a.data * a.data, (a,), backward, "square")


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return Tensor(out, (a,), backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, (a,), backward, "tanh")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``b`` is a 2-D weight matrix and ``a`` is (..., n)."""

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return Tensor(a.data @ b.data, (a, b), backward, "matmul")
