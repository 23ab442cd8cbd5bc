"""Reverse-mode automatic differentiation over numpy arrays.

Built for small fixed-shape networks: the graph is constructed eagerly by
each operation and discarded after ``Tensor.backward``. Supports numpy
broadcasting for elementwise ops and the stacked (batched) semantics of
``np.matmul``. Only requires-grad nodes keep parent links, so forward-only
evaluation carries no bookkeeping cost.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

# sigmoid saturates to exactly 0.0/1.0 in float64 beyond |x| ~ 37; clip so
# outputs stay strictly inside (0, 1) as the membership contract requires
_SIGMOID_EPS = 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    @staticmethod
    def _lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    @staticmethod
    def _node(data: np.ndarray, parents: tuple["Tensor", ...], vjp) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of ``self`` into every requires-grad node.

        Without an explicit ``grad`` the output must be a scalar (this is
        the usual "call backward on the loss" path).
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    "backward() without an explicit gradient requires a scalar output"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError("gradient shape must match tensor shape")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        # iterative post-order over the requires-grad subgraph
        topo: list[Tensor] = []
        visited: set[int] = {id(self)}
        stack: list[tuple[Tensor, object]] = [(self, iter(self._parents))]
        while stack:
            node, it = stack[-1]
            advanced = False
            for parent in it:
                if parent.requires_grad and id(parent) not in visited:
                    visited.add(id(parent))
                    stack.append((parent, iter(parent._parents)))
                    advanced = True
                    break
            if not advanced:
                topo.append(node)
                stack.pop()

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self, other

        def vjp(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._node(a.data + b.data, (a, b), vjp)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self
        return self._node(-a.data, (a,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return self._lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self, other

        def vjp(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self._node(a.data * b.data, (a, b), vjp)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Tensor":
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return self * (1.0 / float(scalar))

    def __matmul__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must have at least 2 dimensions")

        def vjp(g):
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            return ga, gb

        return self._node(np.matmul(a.data, b.data), (a, b), vjp)

    # -- activations ----------------------------------------------------
    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0.0
        return self._node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))

    def sigmoid(self) -> "Tensor":
        a = self
        out = np.empty_like(a.data)
        pos = a.data >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
        ex = np.exp(a.data[~pos])
        out[~pos] = ex / (1.0 + ex)
        out = np.clip(out, _SIGMOID_EPS, 1.0 - _SIGMOID_EPS)
        return self._node(out, (a,), lambda g: (g * out * (1.0 - out),))

    def softmax(self, axis: int = -1) -> "Tensor":
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            inner = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - inner),)

        return self._node(y, (a,), vjp)

    # -- reductions -----------------------------------------------------
    def sum(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        a = self
        out = a.data.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            axes = (axis,) if isinstance(axis, int) else axis
            g_exp = np.expand_dims(g, axes)
            return (np.broadcast_to(g_exp, a.shape).copy(),)

        return self._node(out, (a,), vjp)

    def mean(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis) / count

    # -- shape ops --------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return self._node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))

    def swapaxes(self, ax1: int, ax2: int) -> "Tensor":
        a = self
        return self._node(
            np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),)
        )

    def take(self, indices: Sequence[int], axis: int) -> "Tensor":
        a = self
        idx = np.asarray(indices, dtype=np.intp)

        def vjp(g):
            full = np.zeros_like(a.data)
            expanded = [slice(None)] * a.ndim
            for out_pos, src in enumerate(idx):
                expanded[axis] = src
                sel = [slice(None)] * a.ndim
                sel[axis] = out_pos
                full[tuple(expanded)] += g[tuple(sel)]
            return (full,)

        return self._node(np.take(a.data, idx, axis=axis), (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis`` (grad splits back by size)."""
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        grads = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sel = [slice(None)] * g.ndim
            sel[axis] = slice(int(lo), int(hi))
            grads.append(g[tuple(sel)])
        return tuple(grads)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._node(data, tuple(tensors), vjp)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()
