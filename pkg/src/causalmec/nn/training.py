"""Training loops, the optimizer, data streams, and checkpoints.

Training data is generated fresh for every batch from a stream callable; the
skeleton predictor trains first, the v-structure predictor starts from its
feature encoders, and the independent-edge baseline trains on raw adjacency
labels. Everything is bit-reproducible given (seed, stream).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError, InvalidInputError, NumericError, TrainingDivergedError
from ..graphs import Dag, skeleton_of
from ..scm import DataSample, Mechanism, fig_cto_training_instance, sample_data, sample_graph, sample_scm
from ..seeding import derive_rng
from .layers import ParamStore
from .losses import masked_bce, skeleton_labels, ut_mask, vstruct_labels
from .model import (
    ModelConfig,
    batch_forward_node_edge,
    batch_forward_skeleton,
    batch_forward_vstructs,
    init_node_edge,
    init_spn,
    init_vpn_from_spn,
)

__all__ = [
    "Adam",
    "TrainConfig",
    "scm_stream",
    "fig_cto_stream",
    "train_spn",
    "train_vpn",
    "train_node_edge",
    "save_checkpoint",
    "load_checkpoint",
    "merge_stores",
    "extract_prefix",
]


class Adam:
    """Standard Adam; moment buffers live in the store, keyed by parameter name."""

    def __init__(self, store: ParamStore, lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps

    def step(self) -> None:
        state = self.store.opt_state
        state["step"] += 1
        t = state["step"]
        bias1 = 1.0 - self.b1**t
        bias2 = 1.0 - self.b2**t
        for name, p in self.store.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = state["m"].get(name)
            v = state["v"].get(name)
            if m is None:
                m = state["m"][name] = np.zeros_like(p.data)
                v = state["v"][name] = np.zeros_like(p.data)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 8
    lr: float = 3e-4
    seed: int = 0
    val_every: int = 0  # 0 disables validation
    val_size: int = 4


def scm_stream(model, mechanism: Mechanism, d: int, n_obs: int):
    """Fresh (graph, data) pairs from a graph model and mechanism family."""

    def draw(rng: np.random.Generator) -> tuple[Dag, DataSample]:
        g = sample_graph(model, d, rng)
        scm = sample_scm(g, mechanism, rng)
        return g, sample_data(scm, n_obs, rng)

    return draw


def fig_cto_stream(n_obs: int):
    """The constructed 6-node diagnostic family."""

    def draw(rng: np.random.Generator) -> tuple[Dag, DataSample]:
        return fig_cto_training_instance(n_obs, rng)

    return draw


def _run_training(store: ParamStore, stream, batch_loss, tcfg: TrainConfig,
                  label: str) -> list[dict]:
    """Shared loop: instances are stacked along a batch axis per step.

    The loss is the mean BCE over all masked entries of the batch; streams
    must yield fixed (d, n) shapes so instances stack.
    """
    rng = derive_rng(tcfg.seed, label, "train")
    val_rng = derive_rng(tcfg.seed, label, "val")
    val_batch = [stream(val_rng) for _ in range(tcfg.val_size)] if tcfg.val_every else []
    adam = Adam(store, lr=tcfg.lr)
    log: list[dict] = []
    for step in range(tcfg.steps):
        store.zero_grad()
        batch = [stream(rng) for _ in range(tcfg.batch_size)]
        try:
            loss = batch_loss(batch)
            loss.backward()
        except NumericError as exc:
            raise TrainingDivergedError(
                f"{label}: non-finite value at step {step}: {exc}") from exc
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise TrainingDivergedError(f"{label}: loss diverged at step {step}")
        adam.step()
        entry = {"step": step, "loss": train_loss}
        if tcfg.val_every and (step % tcfg.val_every == 0 or step == tcfg.steps - 1):
            entry["val_loss"] = batch_loss(val_batch).item()
        log.append(entry)
    return log


def _stack(batch: list[tuple[Dag, DataSample]]) -> tuple[np.ndarray, str, list[Dag]]:
    values = np.stack([data.values for _, data in batch])
    return values, batch[0][1].kind, [g for g, _ in batch]


def train_spn(cfg: ModelConfig, stream, tcfg: TrainConfig) -> tuple[ParamStore, list[dict]]:
    store = init_spn(cfg, derive_rng(tcfg.seed, "spn", "init"))

    def batch_loss(batch):
        values, kind, graphs = _stack(batch)
        probs = batch_forward_skeleton(store, cfg, values, kind)
        labels = np.stack([skeleton_labels(g) for g in graphs])
        mask = np.broadcast_to(1.0 - np.eye(graphs[0].d), labels.shape)
        return masked_bce(probs, labels, mask)

    log = _run_training(store, stream, batch_loss, tcfg, "spn")
    return store, log


def train_vpn(spn: ParamStore, cfg: ModelConfig, stream,
              tcfg: TrainConfig) -> tuple[ParamStore, list[dict]]:
    """Fine-tune the feature encoders from the skeleton task on triple labels.

    The unshielded-triple mask comes from the ground-truth skeleton during
    training; at inference the mask comes from the predicted skeleton.
    """
    store = init_vpn_from_spn(spn, cfg, derive_rng(tcfg.seed, "vpn", "init"))

    def batch_loss(batch):
        values, kind, graphs = _stack(batch)
        scores = batch_forward_vstructs(store, cfg, values, kind)
        labels = np.stack([vstruct_labels(g) for g in graphs])
        mask = np.stack([ut_mask(skeleton_of(g)) for g in graphs])
        return masked_bce(scores, labels, mask)

    log = _run_training(store, stream, batch_loss, tcfg, "vpn")
    return store, log


def train_node_edge(cfg: ModelConfig, stream,
                    tcfg: TrainConfig) -> tuple[ParamStore, list[dict]]:
    store = init_node_edge(cfg, derive_rng(tcfg.seed, "node-edge", "init"))

    def batch_loss(batch):
        values, kind, graphs = _stack(batch)
        probs = batch_forward_node_edge(store, cfg, values, kind)
        labels = np.stack([g.adj.astype(np.float64) for g in graphs])
        mask = np.broadcast_to(1.0 - np.eye(graphs[0].d), labels.shape)
        return masked_bce(probs, labels, mask)

    log = _run_training(store, stream, batch_loss, tcfg, "node-edge")
    return store, log


# --- checkpoints --------------------------------------------------------------
#
# A checkpoint is a JSON manifest (parameter names and shapes, model config,
# free-form metadata, seed) plus a flat little-endian float64 blob holding the
# parameters in manifest order. The manifest carries a hash of the name/shape
# list; the loader refuses mismatches.


def _shape_hash(entries: list[dict]) -> str:
    canon = ";".join(f"{e['name']}:{','.join(map(str, e['shape']))}" for e in entries)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def save_checkpoint(prefix, store: ParamStore, cfg: ModelConfig,
                    metadata: dict | None = None, seed: int | None = None) -> tuple[str, str]:
    entries = [{"name": n, "shape": list(t.shape)} for n, t in store.params.items()]
    manifest = {
        "format": "causalmec-checkpoint-v1",
        "model": cfg.to_dict(),
        "params": entries,
        "shape_hash": _shape_hash(entries),
        "metadata": metadata or {},
        "seed": seed,
    }
    json_path, bin_path = f"{prefix}.json", f"{prefix}.bin"
    with open(json_path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(bin_path, "wb") as fh:
        for _, t in store.params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return json_path, bin_path


def load_checkpoint(prefix) -> tuple[ParamStore, ModelConfig, dict]:
    json_path, bin_path = f"{prefix}.json", f"{prefix}.bin"
    try:
        with open(json_path, "r", encoding="ascii") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {json_path}: {exc}") from exc
    if manifest.get("format") != "causalmec-checkpoint-v1":
        raise CheckpointError("unrecognized checkpoint format")
    entries = manifest["params"]
    if _shape_hash(entries) != manifest.get("shape_hash"):
        raise CheckpointError("shape hash mismatch: manifest corrupted")
    blob = np.fromfile(bin_path, dtype="<f8")
    total = sum(int(np.prod(e["shape"])) if e["shape"] else 1 for e in entries)
    if blob.size != total:
        raise CheckpointError(
            f"blob holds {blob.size} values, manifest expects {total}")
    store = ParamStore()
    offset = 0
    for e in entries:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        store.add(e["name"], blob[offset:offset + size].reshape(e["shape"]))
        offset += size
    return store, ModelConfig.from_dict(manifest["model"]), manifest.get("metadata", {})


def merge_stores(**prefixed: ParamStore) -> ParamStore:
    """Combine stores under name prefixes ('spn' + 'vpn' -> one checkpoint)."""
    merged = ParamStore()
    for prefix, store in prefixed.items():
        for name, t in store.params.items():
            merged.add(f"{prefix}.{name}", t.data.copy())
    return merged


def extract_prefix(store: ParamStore, prefix: str) -> ParamStore:
    out = ParamStore()
    for name, t in store.params.items():
        if name.startswith(prefix + "."):
            out.add(name[len(prefix) + 1:], t.data.copy())
    if not out.params:
        raise CheckpointError(f"checkpoint has no parameters under {prefix!r}")
    return out
