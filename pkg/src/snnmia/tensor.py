"""Dense float32 tensors with a small reverse-mode gradient tape.

Only the primitives needed to train layered spiking and sigmoid networks are
provided. Tensors are immutable after creation; every op returns a new one.
While a :class:`GradTape` is active, ops on tensors that (transitively)
require gradients are recorded and :meth:`GradTape.backward` replays them in
reverse.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from . import kernels


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "id", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float32, order="C")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "parents", "vjp")

    def __init__(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable):
        self.out = out
        self.parents = parents
        self.vjp = vjp


_active: list["GradTape"] = []


class GradTape:
    """Records differentiable ops executed inside its ``with`` block.

    A tape is single-use and single-threaded.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._tracked: set[int] = set()

    def __enter__(self) -> "GradTape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def _wants(self, parents: Sequence[Tensor]) -> bool:
        return any(p.requires_grad or p.id in self._tracked for p in parents)

    def record(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable) -> None:
        self.nodes.append(_Node(out, parents, vjp))
        self._tracked.add(out.id)

    def backward(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of scalar ``loss`` with respect to ``params``.

        Nodes are visited once each, in reverse recording order (a valid
        reverse topological order since parents are always recorded first).
        """
        if loss.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        if loss.id not in self._tracked and not loss.requires_grad:
            raise ValueError("loss was not computed on this tape")
        grads: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape, dtype=np.float32)}
        for node in reversed(self.nodes):
            g = grads.pop(node.out.id, None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not (parent.requires_grad or parent.id in self._tracked):
                    continue
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg
        out = []
        for p in params:
            g = grads.get(p.id)
            out.append(np.zeros(p.shape, dtype=np.float32) if g is None else g.astype(np.float32))
        return out


def _emit(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    for tape in _active:
        if tape._wants(parents):
            tape.record(out, parents, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- primitives -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return kernels.matmul(g, bd.T), kernels.matmul(ad.T, g)

    return _emit(kernels.matmul(ad, bd), (a, b), vjp)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit(a.data + b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _emit(ad * bd, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = np.float32(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    y = (1.0 / (1.0 + np.exp(-a.data.astype(np.float64)))).astype(np.float32)
    return _emit(y, (a,), lambda g: (g * y * (np.float32(1) - y),))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float32)
    return _emit(a.data * mask, (a,), lambda g: (g * mask,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array(a.data.sum(dtype=np.float32)), (a,),
                 lambda g: (np.broadcast_to(g, shape).astype(np.float32),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


def softmax_array(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax on a raw array, in the array's own precision."""
    logits = np.asarray(logits)
    if logits.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    y = softmax_array(logits.data, axis).astype(np.float32)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (logits,), vjp)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the labelled class over a batch."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("label out of range")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = np.float32(-logp[rows, labels].mean())
    p = np.exp(logp)

    def vjp(g):
        d = p.copy()
        d[rows, labels] -= 1.0
        return ((d * (float(g) / n)).astype(np.float32),)

    return _emit(np.array(loss), (logits,), vjp)


def heaviside(u: Tensor, threshold: float, width: float) -> Tensor:
    """Spike emission ``u >= threshold``; backward uses the triangular surrogate."""
    spikes = (u.data >= np.float32(threshold)).astype(np.float32)
    ud = u.data

    def vjp(g):
        return (g * kernels.triangle_surrogate(ud, threshold, width),)

    return _emit(spikes, (u,), vjp)


def hard_reset(u: Tensor, spikes: Tensor, u_reset: float) -> Tensor:
    """Potential after firing; the spike mask is treated as a constant."""
    s = spikes.data
    keep = np.float32(1) - s
    out = u.data * keep + np.float32(u_reset) * s
    return _emit(out, (u, spikes), lambda g: (g * keep, None))
