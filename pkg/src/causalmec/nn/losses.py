"""Binary cross-entropy objectives for the three heads.

Labels come straight from the ground-truth DAG: the skeleton target is
adj OR adj^T, the v-structure target marks both leaf orders of every triple
with two nonadjacent parents, and the baseline target is the adjacency matrix
itself. The v-structure loss is computed only at unshielded triples of the
supplied mask source; all other entries contribute exactly zero.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import InvalidInputError
from ..graphs import Dag, Skeleton, unshielded_triples
from .tensor import Tensor, add, clip, log, mul, neg, sub, tsum

__all__ = [
    "masked_bce",
    "skeleton_loss",
    "vstruct_loss",
    "node_edge_loss",
    "skeleton_labels",
    "vstruct_labels",
    "ut_mask",
]

CLAMP = 1e-7


def masked_bce(probs: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over the masked entries.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; masked-out entries are
    multiplied by zero, so perturbing them cannot change the value.
    """
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if labels.shape != probs.shape or mask.shape != probs.shape:
        raise InvalidInputError("probs, labels and mask shapes must match")
    count = mask.sum()
    if count == 0:
        warnings.warn("empty mask: loss defined as zero", stacklevel=2)
        return Tensor(0.0)
    p = clip(probs, CLAMP, 1.0 - CLAMP)
    per_entry = neg(add(mul(labels, log(p)), mul(1.0 - labels, log(sub(1.0, p)))))
    return mul(tsum(mul(per_entry, mask)), 1.0 / count)


def skeleton_labels(g: Dag) -> np.ndarray:
    return (g.adj | g.adj.T).astype(np.float64)


def vstruct_labels(g: Dag) -> np.ndarray:
    """(d, d, d) tensor: entry (k, i, j) = [i -> k <- j with i, j nonadjacent]."""
    a = g.adj.astype(np.float64)
    into = np.einsum("ik,jk->kij", a, a)  # both i -> k and j -> k
    nonadj = (1.0 - a) * (1.0 - a.T)
    labels = into * nonadj[None, :, :]
    d = g.d
    rng_idx = np.arange(d)
    labels[:, rng_idx, rng_idx] = 0.0
    return labels


def ut_mask(source: Skeleton) -> np.ndarray:
    """Mask at both leaf orders of every unshielded triple of the source skeleton."""
    d = source.d
    mask = np.zeros((d, d, d))
    for ut in unshielded_triples(source):
        i, j = ut.leaves
        mask[ut.center, i, j] = mask[ut.center, j, i] = 1.0
    return mask


def skeleton_loss(S: Tensor, g: Dag) -> Tensor:
    """Mean BCE over the off-diagonal entries against the undirected adjacency."""
    d = g.d
    if S.shape != (d, d):
        raise InvalidInputError(f"S shape {S.shape} does not match d={d}")
    return masked_bce(S, skeleton_labels(g), 1.0 - np.eye(d))


def vstruct_loss(U: Tensor, g: Dag, ut_source: Skeleton) -> Tensor:
    """Mean BCE over unshielded-triple entries only."""
    d = g.d
    if U.shape != (d, d, d):
        raise InvalidInputError(f"U shape {U.shape} does not match d={d}")
    return masked_bce(U, vstruct_labels(g), ut_mask(ut_source))


def node_edge_loss(A: Tensor, g: Dag) -> Tensor:
    """Mean BCE of directed-edge probabilities against the adjacency matrix."""
    d = g.d
    if A.shape != (d, d):
        raise InvalidInputError(f"A shape {A.shape} does not match d={d}")
    return masked_bce(A, g.adj.astype(np.float64), 1.0 - np.eye(d))
