"""Skeleton and v-structure predictor networks.

The shared trunk embeds raw observations, alternates attention over the
observation and node axes, and expands node features into pairwise features
via concatenation, a unidirectional cross-attention from the d^2 pair queries
to the d node features, and a residual MLP. Heads max-pool over observations.
All parts are permutation-equivariant over nodes and observations by
construction; nothing ever attaches an identity to a node index.

Forward functions operate on shapes (..., d, n, h) with arbitrary leading
axes, so a training batch is just one more axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..postproc import StructurePrediction
from ..scm import DataSample
from .layers import (
    ParamStore,
    attention,
    attention_init,
    encoder_layer,
    encoder_layer_init,
    layer_norm,
    layer_norm_init,
    linear,
    linear_init,
    mlp,
    mlp_init,
)
from .tensor import (
    Tensor,
    add,
    broadcast_to,
    concat,
    embedding,
    mul,
    reshape,
    sigmoid,
    swapaxes,
    tmax,
    transpose,
)

__all__ = [
    "ModelConfig",
    "init_encoder",
    "init_pairwise",
    "init_spn",
    "init_vpn_from_spn",
    "init_node_edge",
    "embed_input",
    "node_encoder",
    "pairwise_encoder",
    "skeleton_head",
    "vstruct_head",
    "node_edge_head",
    "forward_skeleton",
    "forward_vstructs",
    "forward_node_edge",
    "batch_forward_skeleton",
    "batch_forward_vstructs",
    "batch_forward_node_edge",
    "predict",
    "predict_averaged",
    "node_edge_predict_averaged",
]


@dataclass(frozen=True)
class ModelConfig:
    """Toy-scale dimensions; the architecture itself is size-agnostic."""

    hidden: int = 32
    blocks: int = 2
    heads: int = 4
    ffn_mult: int = 2
    input_kind: str = "continuous"
    arity: int | None = None

    def __post_init__(self):
        if self.input_kind not in ("continuous", "discrete"):
            raise InvalidInputError("input_kind must be continuous or discrete")
        if self.input_kind == "discrete" and (self.arity is None or self.arity < 2):
            raise InvalidInputError("discrete input needs arity >= 2")
        if self.hidden % self.heads:
            raise InvalidInputError("hidden must be divisible by heads")

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "blocks": self.blocks,
            "heads": self.heads,
            "ffn_mult": self.ffn_mult,
            "input_kind": self.input_kind,
            "arity": self.arity,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**{k: obj[k] for k in
                      ("hidden", "blocks", "heads", "ffn_mult", "input_kind", "arity")})


# --- initialization ----------------------------------------------------------


def init_encoder(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator,
                 prefix: str = "") -> None:
    h = cfg.hidden
    if cfg.input_kind == "continuous":
        linear_init(store, f"{prefix}embed", 1, h, rng)
    else:
        store.add(f"{prefix}embed.table", rng.normal(0.0, 0.5, size=(cfg.arity, h)))
    for b in range(cfg.blocks):
        encoder_layer_init(store, f"{prefix}enc.{b}.obs", h, cfg.ffn_mult, rng)
        encoder_layer_init(store, f"{prefix}enc.{b}.node", h, cfg.ffn_mult, rng)


def init_pairwise(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator,
                  prefix: str = "") -> None:
    h = cfg.hidden
    mlp_init(store, f"{prefix}pair.mlp_in", [2 * h, h, h, h], rng)
    attention_init(store, f"{prefix}pair.attn", h, rng)
    layer_norm_init(store, f"{prefix}pair.ln1", h)
    mlp_init(store, f"{prefix}pair.mlp_out", [h, h, h, h], rng)
    layer_norm_init(store, f"{prefix}pair.ln2", h)


def init_spn(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    init_encoder(store, cfg, rng)
    init_pairwise(store, cfg, rng)
    linear_init(store, "skel_head", cfg.hidden, 1, rng)
    return store


def init_vpn_from_spn(spn: ParamStore, cfg: ModelConfig,
                      rng: np.random.Generator) -> ParamStore:
    """Fresh v-structure head on top of the skeleton model's feature encoders."""
    store = ParamStore()
    for name, t in spn.params.items():
        if not name.startswith("skel_head"):
            store.add(name, t.data.copy())
    mlp_init(store, "vhead", [2 * cfg.hidden, cfg.hidden, cfg.hidden, 1], rng)
    return store


def init_node_edge(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    """Baseline: node features only, every directed edge scored independently."""
    store = ParamStore()
    init_encoder(store, cfg, rng)
    mlp_init(store, "ne_head", [2 * cfg.hidden, cfg.hidden, cfg.hidden, 1], rng)
    return store


# --- forward passes -----------------------------------------------------------


def _embed_values(store: ParamStore, cfg: ModelConfig, values: np.ndarray,
                  kind: str, prefix: str = "") -> Tensor:
    """values: (..., n, d) observations; returns features (..., d, n, hidden)."""
    swapped = np.swapaxes(values, -1, -2)  # (..., d, n)
    if cfg.input_kind == "continuous":
        if kind != "continuous":
            raise InvalidInputError("model expects continuous data")
        return linear(store, f"{prefix}embed", Tensor(swapped[..., None]))
    if kind != "discrete":
        raise InvalidInputError("model expects discrete data")
    if int(values.max()) >= cfg.arity:
        raise InvalidInputError(
            f"category {int(values.max())} outside trained arity {cfg.arity}")
    return embedding(store[f"{prefix}embed.table"], swapped.astype(np.int64))


def embed_input(store: ParamStore, cfg: ModelConfig, data: DataSample,
                prefix: str = "") -> Tensor:
    """Raw node features of shape (d, n, hidden)."""
    return _embed_values(store, cfg, data.values, data.kind, prefix)


def node_encoder(store: ParamStore, cfg: ModelConfig, raw: Tensor,
                 prefix: str = "") -> Tensor:
    """Alternating attention over the observation axis and the node axis."""
    x = raw  # (..., d, n, h)
    for b in range(cfg.blocks):
        x = encoder_layer(store, f"{prefix}enc.{b}.obs", x, cfg.heads)
        x = swapaxes(x, -3, -2)  # (..., n, d, h)
        x = encoder_layer(store, f"{prefix}enc.{b}.node", x, cfg.heads)
        x = swapaxes(x, -3, -2)
    return x


def pairwise_encoder(store: ParamStore, cfg: ModelConfig, feats: Tensor,
                     prefix: str = "") -> Tensor:
    """Pair features (..., d, d, n, h) from node features (..., d, n, h).

    Concatenated node-feature pairs pass a three-layer MLP; a unidirectional
    multi-head attention then reads node features (per observation, d^2
    queries against d keys); a residual MLP finishes.
    """
    *lead, d, n, h = feats.shape
    nl = len(lead)
    left = broadcast_to(reshape(feats, (*lead, d, 1, n, h)), (*lead, d, d, n, h))
    right = broadcast_to(reshape(feats, (*lead, 1, d, n, h)), (*lead, d, d, n, h))
    pair_raw = mlp(store, f"{prefix}pair.mlp_in", concat([left, right], axis=-1), 3)

    # queries per observation: (..., n, d*d, h); keys are the d node features
    to_obs_major = (*range(nl), nl + 2, nl + 0, nl + 1, nl + 3)
    queries = reshape(transpose(pair_raw, to_obs_major), (*lead, n, d * d, h))
    keys = swapaxes(feats, -3, -2)  # (..., n, d, h)
    attended = attention(store, f"{prefix}pair.attn", queries, keys, cfg.heads)
    to_pair_major = (*range(nl), nl + 1, nl + 2, nl + 0, nl + 3)
    attended = transpose(reshape(attended, (*lead, n, d, d, h)), to_pair_major)

    fused = layer_norm(store, f"{prefix}pair.ln1", add(pair_raw, attended))
    out = mlp(store, f"{prefix}pair.mlp_out", fused, 3)
    return layer_norm(store, f"{prefix}pair.ln2", add(out, fused))


def skeleton_head(store: ParamStore, pair_feats: Tensor, prefix: str = "") -> Tensor:
    """(..., d, d) edge probabilities: max-pool over observations, linear, sigmoid."""
    pooled = tmax(pair_feats, axis=-2)  # (..., d, d, h)
    logits = linear(store, f"{prefix}skel_head", pooled)
    return sigmoid(reshape(logits, logits.shape[:-1]))


def vstruct_head(store: ParamStore, pair_feats: Tensor, node_feats: Tensor,
                 prefix: str = "") -> Tensor:
    """(..., d, d, d) scores indexed (center, leafA, leafB).

    Feature for (k, i, j): pooled pair feature of (i, j) concatenated with the
    pooled node feature of k, through a three-layer MLP and a sigmoid.
    """
    *lead, d, _, _n, h = pair_feats.shape
    pair_pooled = tmax(pair_feats, axis=-2)  # (..., d, d, h)
    node_pooled = tmax(node_feats, axis=-2)  # (..., d, h)
    pair_b = broadcast_to(reshape(pair_pooled, (*lead, 1, d, d, h)), (*lead, d, d, d, h))
    node_b = broadcast_to(reshape(node_pooled, (*lead, d, 1, 1, h)), (*lead, d, d, d, h))
    scores = mlp(store, f"{prefix}vhead", concat([pair_b, node_b], axis=-1), 3)
    return sigmoid(reshape(scores, scores.shape[:-1]))


def node_edge_head(store: ParamStore, node_feats: Tensor, prefix: str = "") -> Tensor:
    """(..., d, d) directed-edge probabilities from pooled node features; zero diagonal."""
    *lead, d, _, h = node_feats.shape
    pooled = tmax(node_feats, axis=-2)  # (..., d, h)
    left = broadcast_to(reshape(pooled, (*lead, d, 1, h)), (*lead, d, d, h))
    right = broadcast_to(reshape(pooled, (*lead, 1, d, h)), (*lead, d, d, h))
    logits = mlp(store, f"{prefix}ne_head", concat([left, right], axis=-1), 3)
    probs = sigmoid(reshape(logits, logits.shape[:-1]))
    return mul(probs, 1.0 - np.eye(d))


def forward_skeleton(store: ParamStore, cfg: ModelConfig, data: DataSample) -> Tensor:
    feats = node_encoder(store, cfg, embed_input(store, cfg, data))
    return skeleton_head(store, pairwise_encoder(store, cfg, feats))


def forward_vstructs(store: ParamStore, cfg: ModelConfig, data: DataSample) -> Tensor:
    feats = node_encoder(store, cfg, embed_input(store, cfg, data))
    return vstruct_head(store, pairwise_encoder(store, cfg, feats), feats)


def forward_node_edge(store: ParamStore, cfg: ModelConfig, data: DataSample) -> Tensor:
    feats = node_encoder(store, cfg, embed_input(store, cfg, data))
    return node_edge_head(store, feats)


def batch_forward_skeleton(store: ParamStore, cfg: ModelConfig, values: np.ndarray,
                           kind: str = "continuous") -> Tensor:
    """values: (B, n, d) stacked instances; returns (B, d, d)."""
    feats = node_encoder(store, cfg, _embed_values(store, cfg, values, kind))
    return skeleton_head(store, pairwise_encoder(store, cfg, feats))


def batch_forward_vstructs(store: ParamStore, cfg: ModelConfig, values: np.ndarray,
                           kind: str = "continuous") -> Tensor:
    feats = node_encoder(store, cfg, _embed_values(store, cfg, values, kind))
    return vstruct_head(store, pairwise_encoder(store, cfg, feats), feats)


def batch_forward_node_edge(store: ParamStore, cfg: ModelConfig, values: np.ndarray,
                            kind: str = "continuous") -> Tensor:
    feats = node_encoder(store, cfg, _embed_values(store, cfg, values, kind))
    return node_edge_head(store, feats)


def predict(spn: ParamStore, vpn: ParamStore, cfg: ModelConfig,
            data: DataSample) -> StructurePrediction:
    """One forward pass per sub-network; no sampling anywhere."""
    S = forward_skeleton(spn, cfg, data).data
    U = forward_vstructs(vpn, cfg, data).data
    return StructurePrediction(np.clip(S, 0.0, 1.0), np.clip(U, 0.0, 1.0))


def _chunk_values(data: DataSample, chunk: int) -> list[np.ndarray]:
    splits = max(1, data.n // chunk)
    return np.array_split(data.values, splits)


def _group(parts: list[np.ndarray], size: int):
    for k in range(0, len(parts), size):
        group = parts[k:k + size]
        if len({p.shape for p in group}) == 1:
            yield np.stack(group)
        else:  # ragged tail chunks: fall back to singletons
            for p in group:
                yield p[None]


def predict_averaged(spn: ParamStore, vpn: ParamStore, cfg: ModelConfig,
                     data: DataSample, chunk: int = 128,
                     group_size: int = 8) -> StructurePrediction:
    """Average single-pass predictions over observation chunks.

    Attention over observations is quadratic in n, so large samples are
    consumed as an ensemble of chunks matching the training sample size;
    chunk averaging only reduces the variance of the prediction.
    """
    d = data.d
    S = np.zeros((d, d))
    U = np.zeros((d, d, d))
    parts = _chunk_values(data, chunk)
    for block in _group(parts, group_size):
        S += batch_forward_skeleton(spn, cfg, block, data.kind).data.sum(axis=0)
        U += batch_forward_vstructs(vpn, cfg, block, data.kind).data.sum(axis=0)
    n_parts = len(parts)
    return StructurePrediction(np.clip(S / n_parts, 0, 1), np.clip(U / n_parts, 0, 1))


def node_edge_predict_averaged(store: ParamStore, cfg: ModelConfig,
                               data: DataSample, chunk: int = 128,
                               group_size: int = 8) -> np.ndarray:
    d = data.d
    A = np.zeros((d, d))
    parts = _chunk_values(data, chunk)
    for block in _group(parts, group_size):
        A += batch_forward_node_edge(store, cfg, block, data.kind).data.sum(axis=0)
    return A / len(parts)
