"""Constraint-based structure discovery built on CI testers.

PC-stable adjacency search, sepset- and majority-based classification of
unshielded triples, and the composed pipeline producing a CPDAG. Any object
with ``test(i, j, z) -> CiResult`` works as a tester; with an exact
d-separation oracle the pipeline recovers the true CPDAG.
"""

from __future__ import annotations

import itertools

from .errors import ConstraintViolationError, ContractError
from .graphs import (
    Pdag,
    SepsetMap,
    Skeleton,
    VStructure,
    meek_closure,
    unshielded_triples,
)

__all__ = [
    "pc_skeleton",
    "vstructs_from_sepsets",
    "majority_vstruct_scores",
    "vstructs_majority",
    "pc",
    "orient_vstructures",
    "close_orientations",
]


def pc_skeleton(tester, d: int, alpha: float | None = None,
                max_cond: int | None = None) -> tuple[Skeleton, SepsetMap]:
    """PC-stable adjacency search.

    Within each conditioning-set size, candidate sets are drawn from the
    neighborhoods frozen at the start of the level, so the output skeleton
    does not depend on vertex processing order. A tester failure counts as
    "dependent" (conservative) and is recorded in the sepset notes.
    """
    if max_cond is None:
        max_cond = max(d - 2, 0)
    adj = {i: set(range(d)) - {i} for i in range(d)}
    sepsets = SepsetMap()
    failed: list[tuple[int, int, tuple[int, ...], str]] = []

    def independent(i: int, j: int, z: tuple[int, ...]) -> bool:
        try:
            return bool(tester.test(i, j, z).independent if alpha is None
                        else tester.test(i, j, z, alpha=alpha).independent)
        except Exception as exc:  # failed test treated as dependent
            failed.append((i, j, z, repr(exc)))
            return False

    level = 0
    while level <= max_cond:
        snapshot = {i: sorted(adj[i]) for i in range(d)}
        if not any(len(snapshot[i]) - 1 >= level for i in range(d)):
            break
        to_remove: list[tuple[int, int, tuple[int, ...]]] = []
        for i in range(d):
            for j in snapshot[i]:
                if i > j or j not in adj[i]:
                    continue
                found = None
                for a, b in ((i, j), (j, i)):
                    pool = [v for v in snapshot[a] if v != b]
                    if len(pool) < level:
                        continue
                    for z in itertools.combinations(pool, level):
                        if independent(i, j, z):
                            found = z
                            break
                    if found is not None:
                        break
                if found is not None:
                    to_remove.append((i, j, found))
        for i, j, z in to_remove:
            adj[i].discard(j)
            adj[j].discard(i)
            sepsets.set(i, j, z)
        level += 1

    skel = Skeleton.from_edges(d, [(i, j) for i in range(d) for j in adj[i] if i < j])
    if failed:
        sepsets.notes["failed_tests"] = failed
    return skel, sepsets


def vstructs_from_sepsets(s: Skeleton, sep: SepsetMap) -> set[VStructure]:
    """Classify each unshielded triple by the recorded separating set.

    A triple (k; {i, j}) is a v-structure exactly when k is absent from the
    set that separated i and j. A missing sepset for a required pair is a
    contract violation.
    """
    out: set[VStructure] = set()
    for ut in unshielded_triples(s):
        i, j = ut.leaves
        z = sep.get(i, j)
        if z is None:
            raise ContractError(f"no sepset recorded for nonadjacent pair ({i},{j})")
        if ut.center not in z:
            out.add(ut)
    return out


def majority_vstruct_scores(tester, s: Skeleton, alpha: float | None = None,
                            max_cond: int = 3) -> dict[VStructure, float | None]:
    """Per-triple v-structure scores from the majority scan.

    For each unshielded triple (k; {i, j}), every subset of the two leaves'
    combined neighborhoods (size-capped) is tested; the score is
    1 - (fraction of separating sets containing k), or None when no
    separating set was found at all.
    """
    scores: dict[VStructure, float | None] = {}
    for ut in sorted(unshielded_triples(s), key=lambda t: (t.center, t.leaves)):
        i, j = ut.leaves
        pool = sorted((set(s.neighbors(i)) | set(s.neighbors(j))) - {i, j})
        n_sep = 0
        n_with_center = 0
        for size in range(0, min(max_cond, len(pool)) + 1):
            for z in itertools.combinations(pool, size):
                try:
                    res = tester.test(i, j, z) if alpha is None else \
                        tester.test(i, j, z, alpha=alpha)
                except Exception:
                    continue  # failed test: not counted as separating
                if res.independent:
                    n_sep += 1
                    if ut.center in z:
                        n_with_center += 1
        scores[ut] = None if n_sep == 0 else 1.0 - n_with_center / n_sep
    return scores


def vstructs_majority(tester, s: Skeleton, alpha: float | None = None,
                      max_cond: int = 3) -> tuple[set[VStructure], set[VStructure]]:
    """Majority-vote triple classification.

    A triple is a v-structure when the fraction of separating sets containing
    the center is <= 1/2. Returns (v-structures, unclassified triples with no
    separating set found).
    """
    scores = majority_vstruct_scores(tester, s, alpha=alpha, max_cond=max_cond)
    out = {ut for ut, sc in scores.items() if sc is not None and sc >= 0.5}
    unclassified = {ut for ut, sc in scores.items() if sc is None}
    return out, unclassified


def orient_vstructures(s: Skeleton, vstructs: set[VStructure]) -> tuple[set, set, dict]:
    """Turn triple classifications into directed edges, sanitizing conflicts.

    Edges demanded in both orientations are left undirected; any directed
    cycle is broken by demoting its lexicographically largest edge. Returns
    (directed, undirected, diagnostics).
    """
    demanded: set[tuple[int, int]] = set()
    for vs in vstructs:
        demanded.update(vs.directed_edges())
    conflicted = {(i, j) for i, j in demanded if (j, i) in demanded}
    directed = {e for e in demanded if e not in conflicted}

    def find_cycle(edges: set) -> list[tuple[int, int]] | None:
        children: dict[int, list[int]] = {}
        for a, b in edges:
            children.setdefault(a, []).append(b)
        color: dict[int, int] = {}
        stack_path: list[int] = []

        def dfs(v: int) -> list[tuple[int, int]] | None:
            color[v] = 1
            stack_path.append(v)
            for w in sorted(children.get(v, ())):
                if color.get(w, 0) == 1:
                    k = stack_path.index(w)
                    cyc = stack_path[k:] + [w]
                    return list(zip(cyc[:-1], cyc[1:]))
                if color.get(w, 0) == 0:
                    res = dfs(w)
                    if res is not None:
                        return res
            stack_path.pop()
            color[v] = 2
            return None

        for v in sorted(children):
            if color.get(v, 0) == 0:
                res = dfs(v)
                if res is not None:
                    return res
        return None

    demoted = 0
    while True:
        cycle = find_cycle(directed)
        if cycle is None:
            break
        directed.discard(max(cycle))
        demoted += 1

    oriented_pairs = {(min(e), max(e)) for e in directed}
    undirected = {e for e in s.edges() if e not in oriented_pairs}
    diag = {"orientation_conflicts": len(conflicted) // 2, "cycle_demotions": demoted}
    return directed, undirected, diag


def close_orientations(d: int, directed: set, undirected: set,
                       diagnostics: dict | None = None) -> Pdag:
    """Meek closure with a fallback for inputs admitting no consistent extension.

    When a forced orientation would close a directed cycle, one input directed
    edge on the blocking cycle (lexicographically smallest; any input edge if
    the cycle has none) is demoted to undirected and the closure restarts.
    """
    directed = set(directed)
    undirected = set(undirected)
    dropped = 0
    while True:
        try:
            result = meek_closure(Pdag(d, directed, undirected))
            break
        except ConstraintViolationError as exc:
            on_cycle = sorted(set(exc.blocking_cycle) & directed)
            victim = on_cycle[0] if on_cycle else min(sorted(directed))
            directed.discard(victim)
            undirected.add((min(victim), max(victim)))
            dropped += 1
    if diagnostics is not None:
        diagnostics["meek_demotions"] = dropped
    return result


def pc(tester, d: int, alpha: float | None = None, max_cond: int | None = None,
       majority: bool = False, diagnostics: dict | None = None) -> Pdag:
    """Full constraint-based pipeline: skeleton, triple orientation, Meek closure."""
    skel, sepsets = pc_skeleton(tester, d, alpha=alpha, max_cond=max_cond)
    if majority:
        vstructs, _ = vstructs_majority(tester, skel, alpha=alpha,
                                        max_cond=3 if max_cond is None else max_cond)
    else:
        vstructs = vstructs_from_sepsets(skel, sepsets)
    directed, undirected, diag = orient_vstructures(skel, vstructs)
    if diagnostics is not None:
        diagnostics.update(diag)
        if "failed_tests" in sepsets.notes:
            diagnostics["failed_tests"] = len(sepsets.notes["failed_tests"])
    return close_orientations(d, directed, undirected, diagnostics)
