"""From network outputs to a CPDAG.

Takes a skeleton probability matrix and a v-structure score tensor, thresholds
both, resolves conflicting v-structure candidates by score, breaks any
directed cycles by deleting the weakest edge, and closes the remaining
orientations under the Meek rules. Post-processing never adds or removes an
adjacency relative to the thresholded skeleton.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraint import close_orientations
from .errors import InvalidInputError
from .graphs import Pdag, Skeleton, VStructure, unshielded_triples

__all__ = [
    "StructurePrediction",
    "ScoredVStructure",
    "threshold_skeleton",
    "extract_candidates",
    "resolve_conflicts",
    "orient_and_break_cycles",
    "to_cpdag",
    "indicator_prediction",
]


@dataclass(frozen=True)
class StructurePrediction:
    """Skeleton probabilities S (d x d) and v-structure scores U (d x d x d).

    U is indexed (center, leafA, leafB); only entries at unshielded triples of
    the thresholded skeleton are ever consumed.
    """

    S: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        U = np.asarray(self.U, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise InvalidInputError(f"S must be square, got {S.shape}")
        d = S.shape[0]
        if U.shape != (d, d, d):
            raise InvalidInputError(f"U must have shape ({d},{d},{d}), got {U.shape}")
        for name, arr in (("S", S), ("U", U)):
            if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1:
                raise InvalidInputError(f"{name} entries must lie in [0,1]")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "U", U)

    @property
    def d(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class ScoredVStructure:
    vs: VStructure
    score: float


def threshold_skeleton(S: np.ndarray, tau_s: float = 0.5) -> Skeleton:
    """Edges where the symmetrized score max(S_ij, S_ji) strictly exceeds tau_s."""
    S = np.asarray(S, dtype=float)
    sym = np.maximum(S, S.T)
    und = sym > tau_s
    np.fill_diagonal(und, False)
    return Skeleton(und)


def extract_candidates(U: np.ndarray, s: Skeleton,
                       tau_v: float = 0.5) -> list[ScoredVStructure]:
    """Scored v-structure candidates at the unshielded triples of s.

    The score symmetrizes over leaf order: max(U[k,i,j], U[k,j,i]). Shielded
    triples are never emitted regardless of score.
    """
    out = []
    for ut in sorted(unshielded_triples(s), key=lambda t: (t.center, t.leaves)):
        i, j = ut.leaves
        score = float(max(U[ut.center, i, j], U[ut.center, j, i]))
        if score > tau_v:
            out.append(ScoredVStructure(ut, score))
    return out


def _conflicts(a: VStructure, b: VStructure) -> bool:
    # the two candidates orient a shared edge in opposite directions
    return (b.center in a.leaves) and (a.center in b.leaves)


def _rank(c: ScoredVStructure) -> tuple:
    # higher score wins; exact ties go to the lexicographically smaller triple
    return (-c.score, c.vs.center, c.vs.leaves)


def resolve_conflicts(cands: list[ScoredVStructure]) -> list[ScoredVStructure]:
    """Drop any candidate that conflicts with a better-ranked candidate.

    The quantifier runs over the full input list, so a candidate loses to a
    stronger conflicting candidate even if that candidate is itself dropped.
    """
    kept = []
    for c in cands:
        beaten = any(
            _conflicts(c.vs, other.vs) and _rank(other) < _rank(c)
            for other in cands
            if other is not c
        )
        if not beaten:
            kept.append(c)
    return kept


def orient_and_break_cycles(kept: list[ScoredVStructure]) -> set[tuple[int, int]]:
    """Leaf-to-center edges of the kept candidates, made acyclic.

    Each edge carries the best score among candidates containing it (fixed up
    front); while a directed cycle exists, its minimum-score edge is removed,
    ties broken toward the lexicographically smallest edge.
    """
    score: dict[tuple[int, int], float] = {}
    for c in kept:
        for e in c.vs.directed_edges():
            score[e] = max(score.get(e, 0.0), c.score)
    edges = set(score)

    def find_cycle() -> list[tuple[int, int]] | None:
        children: dict[int, list[int]] = {}
        for a, b in edges:
            children.setdefault(a, []).append(b)
        color: dict[int, int] = {}
        path: list[int] = []

        def dfs(v):
            color[v] = 1
            path.append(v)
            for w in sorted(children.get(v, ())):
                if color.get(w, 0) == 1:
                    k = path.index(w)
                    cyc = path[k:] + [w]
                    return list(zip(cyc[:-1], cyc[1:]))
                if color.get(w, 0) == 0:
                    res = dfs(w)
                    if res is not None:
                        return res
            path.pop()
            color[v] = 2
            return None

        for v in sorted(children):
            if color.get(v, 0) == 0:
                res = dfs(v)
                if res is not None:
                    return res
        return None

    while True:
        cycle = find_cycle()
        if cycle is None:
            return edges
        weakest = min(cycle, key=lambda e: (score[e], e))
        edges.discard(weakest)


def to_cpdag(pred: StructurePrediction, tau_s: float = 0.5, tau_v: float = 0.5,
             diagnostics: dict | None = None,
             keep_lower_score_on_conflict: bool = False) -> Pdag:
    """Full post-processing pipeline.

    ``keep_lower_score_on_conflict`` inverts the conflict-resolution priority
    (the deliberately bad variant used to show the step barely matters).
    """
    skel = threshold_skeleton(pred.S, tau_s)
    cands = extract_candidates(pred.U, skel, tau_v)
    if keep_lower_score_on_conflict:
        flipped = [ScoredVStructure(c.vs, 1.0 - c.score) for c in cands]
        survivors = {c.vs for c in resolve_conflicts(flipped)}
        kept = [c for c in cands if c.vs in survivors]
    else:
        kept = resolve_conflicts(cands)
    directed = orient_and_break_cycles(kept)
    oriented_pairs = {(min(e), max(e)) for e in directed}
    undirected = {e for e in skel.edges() if e not in oriented_pairs}
    if diagnostics is not None:
        diagnostics["candidates"] = len(cands)
        diagnostics["conflicts_dropped"] = len(cands) - len(kept)
        diagnostics["cycle_edges_removed"] = len(
            {e for c in kept for e in c.vs.directed_edges()} - directed
        )
    return close_orientations(pred.d, directed, undirected, diagnostics)


def indicator_prediction(skel: Skeleton, vstructs: set[VStructure]) -> StructurePrediction:
    """0/1 prediction encoding a known skeleton and v-structure set."""
    d = skel.d
    S = skel.und.astype(float)
    U = np.zeros((d, d, d))
    for vs in vstructs:
        i, j = vs.leaves
        U[vs.center, i, j] = U[vs.center, j, i] = 1.0
    return StructurePrediction(S, U)
