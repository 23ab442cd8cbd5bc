"""Parameterized layers: affine maps and scaled-dot-product attention."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .tensor import Tensor


class Layer:
    """Base for parameter containers; subclasses register tensors by name."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Layer"] = {}

    def _register(self, name: str, value):
        if isinstance(value, Layer):
            self._children[name] = value
        elif isinstance(value, Tensor):
            self._params[name] = value
        else:
            raise TypeError(f"cannot register {type(value)!r}")
        return value

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + name: p for name, p in self._params.items()}
        for name, child in self._children.items():
            out.update(child.named_parameters(prefix + name + "."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr.copy()

    def copy_from(self, other: "Layer") -> None:
        self.load_state_dict(other.state_dict())


class Linear(Layer):
    """y = x @ w + b.

    Weights init uniform in +-1/sqrt(fan_in), biases zero. ``zero_init``
    zeroes the weights too; used for output heads so a fresh policy is the
    neutral one (sigmoid(0) = 0.5) regardless of the input.
    """

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator,
                 zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((fan_in, fan_out))
        else:
            lim = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
        self.w = self._register("w", Tensor(w, requires_grad=True))
        self.b = self._register("b", Tensor(np.zeros(fan_out), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class MultiHeadAttention(Layer):
    """Self-attention over a short token sequence, batched on leading dims.

    Input shape (..., T, dim); per head the usual softmax(q k^T / sqrt(d)) v,
    heads concatenated and passed through an output projection.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"embedding dim {dim} not divisible by head count {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q = self._register("q", Linear(dim, dim, rng))
        self.k = self._register("k", Linear(dim, dim, rng))
        self.v = self._register("v", Linear(dim, dim, rng))
        self.out = self._register("out", Linear(dim, dim, rng))

    def _split_heads(self, t: Tensor) -> Tensor:
        *lead, tokens, _ = t.shape
        t = t.reshape(*lead, tokens, self.heads, self.head_dim)
        return t.swapaxes(-3, -2)  # (..., H, T, head_dim)

    def __call__(self, x: Tensor, return_weights: bool = False):
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dim {self.dim}, got {x.shape[-1]}")
        q = self._split_heads(self.q(x))
        k = self._split_heads(self.k(x))
        v = self._split_heads(self.v(x))
        scores = (q @ k.swapaxes(-1, -2)) / math.sqrt(self.head_dim)
        weights = scores.softmax(axis=-1)  # (..., H, T, T)
        ctx = weights @ v
        ctx = ctx.swapaxes(-3, -2)  # (..., T, H, head_dim)
        *lead, tokens, _, _ = ctx.shape
        ctx = ctx.reshape(*lead, tokens, self.dim)
        out = self.out(ctx)
        if return_weights:
            return out, weights
        return out


class Mlp(Layer):
    """Stack of Linear layers with relu between them (none after the last)."""

    def __init__(self, sizes: Iterable[int], rng: np.random.Generator,
                 zero_init_last: bool = False):
        super().__init__()
        sizes = list(sizes)
        self.layers: list[Linear] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            layer = Linear(fan_in, fan_out, rng, zero_init=zero_init_last and last)
            self._register(f"fc{i}", layer)
            self.layers.append(layer)

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.relu()
        return x
