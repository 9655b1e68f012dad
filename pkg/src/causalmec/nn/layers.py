"""Parameter store and the layers the structure predictors are built from.

Layers are pure functions of (store, name, input); parameters live in the
store under dotted names, so sub-networks can be copied or checkpointed by
prefix. All attention runs over the second-to-last axis with arbitrary
leading batch axes.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidInputError
from .tensor import (
    Tensor,
    add,
    concat,
    div,
    matmul,
    mul,
    gelu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    sub,
    swapaxes,
    tmean,
)

__all__ = [
    "ParamStore",
    "linear_init",
    "linear",
    "mlp_init",
    "mlp",
    "layer_norm_init",
    "layer_norm",
    "attention_init",
    "attention",
    "encoder_layer_init",
    "encoder_layer",
]


class ParamStore:
    """Named map from parameter path to tensor, plus optimizer moments."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.opt_state: dict = {"step": 0, "m": {}, "v": {}}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.params:
            raise InvalidInputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def copy_from(self, other: "ParamStore", src_prefix: str, dst_prefix: str) -> None:
        """Copy every parameter under src_prefix into this store under dst_prefix."""
        copied = 0
        for name, t in other.params.items():
            if name.startswith(src_prefix):
                self.add(dst_prefix + name[len(src_prefix):], t.data.copy())
                copied += 1
        if copied == 0:
            raise InvalidInputError(f"no parameters under prefix {src_prefix!r}")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def linear_init(store: ParamStore, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator) -> None:
    store.add(f"{name}.w", _glorot(rng, fan_in, fan_out))
    store.add(f"{name}.b", np.zeros(fan_out))


def linear(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return add(matmul(x, store[f"{name}.w"]), store[f"{name}.b"])


def mlp_init(store: ParamStore, name: str, dims: list[int],
             rng: np.random.Generator) -> None:
    for k in range(len(dims) - 1):
        linear_init(store, f"{name}.{k}", dims[k], dims[k + 1], rng)


def mlp(store: ParamStore, name: str, x: Tensor, n_layers: int) -> Tensor:
    for k in range(n_layers):
        x = linear(store, f"{name}.{k}", x)
        if k < n_layers - 1:
            x = gelu(x)
    return x


def layer_norm_init(store: ParamStore, name: str, dim: int) -> None:
    store.add(f"{name}.gamma", np.ones(dim))
    store.add(f"{name}.beta", np.zeros(dim))


def layer_norm(store: ParamStore, name: str, x: Tensor, eps: float = 1e-5) -> Tensor:
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, store[f"{name}.gamma"]), store[f"{name}.beta"])


def attention_init(store: ParamStore, name: str, hidden: int,
                   rng: np.random.Generator) -> None:
    for part in ("q", "k", "v", "o"):
        linear_init(store, f"{name}.{part}", hidden, hidden, rng)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, hidden = x.shape
    head_dim = hidden // heads
    x = reshape(x, (*lead, length, heads, head_dim))
    return swapaxes(x, -3, -2)  # (..., heads, length, head_dim)


def _merge_heads(x: Tensor) -> Tensor:
    x = swapaxes(x, -3, -2)
    *lead, length, heads, head_dim = x.shape
    return reshape(x, (*lead, length, heads * head_dim))


def attention(store: ParamStore, name: str, queries: Tensor, keys_values: Tensor,
              heads: int, return_weights: bool = False):
    """Multi-head scaled dot-product attention.

    queries: (..., Lq, h); keys_values: (..., Lk, h) with matching leading
    axes. Self-attention passes the same tensor twice.
    """
    hidden = queries.shape[-1]
    if hidden % heads:
        raise InvalidInputError(f"hidden {hidden} not divisible by {heads} heads")
    q = _split_heads(linear(store, f"{name}.q", queries), heads)
    k = _split_heads(linear(store, f"{name}.k", keys_values), heads)
    v = _split_heads(linear(store, f"{name}.v", keys_values), heads)
    scale = 1.0 / math.sqrt(hidden // heads)
    scores = mul(matmul(q, swapaxes(k, -1, -2)), scale)
    weights = softmax(scores, axis=-1)
    out = _merge_heads(matmul(weights, v))
    out = linear(store, f"{name}.o", out)
    if return_weights:
        return out, weights
    return out


def encoder_layer_init(store: ParamStore, name: str, hidden: int, ffn_mult: int,
                       rng: np.random.Generator) -> None:
    attention_init(store, f"{name}.attn", hidden, rng)
    layer_norm_init(store, f"{name}.ln1", hidden)
    linear_init(store, f"{name}.ffn.0", hidden, ffn_mult * hidden, rng)
    linear_init(store, f"{name}.ffn.1", ffn_mult * hidden, hidden, rng)
    layer_norm_init(store, f"{name}.ln2", hidden)


def encoder_layer(store: ParamStore, name: str, x: Tensor, heads: int) -> Tensor:
    """Post-norm transformer encoder layer over the second-to-last axis."""
    attn = attention(store, f"{name}.attn", x, x, heads)
    x = layer_norm(store, f"{name}.ln1", add(x, attn))
    hidden = gelu(linear(store, f"{name}.ffn.0", x))
    x = layer_norm(store, f"{name}.ln2", add(x, linear(store, f"{name}.ffn.1", hidden)))
    return x
