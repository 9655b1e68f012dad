"""Graph types and exact Markov-equivalence machinery.

Vertices are dense integer indices 0..d-1. A DAG is a d x d boolean adjacency
matrix with adj[i, j] = True meaning i -> j. All types are immutable after
construction and all operations are pure functions.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import CapacityError, ConstraintViolationError, InvalidInputError

__all__ = [
    "Dag",
    "Skeleton",
    "Pdag",
    "VStructure",
    "SepsetMap",
    "is_acyclic",
    "topological_order",
    "skeleton_of",
    "vstructures_of",
    "unshielded_triples",
    "d_separated",
    "cpdag_of",
    "meek_closure",
    "enumerate_mec",
    "dag_to_dict",
    "dag_from_dict",
    "pdag_to_dict",
    "pdag_from_dict",
    "write_graph_json",
    "read_dag_json",
    "read_pdag_json",
]


def _as_adj(adj) -> np.ndarray:
    mat = np.asarray(adj)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInputError(f"adjacency must be square, got shape {mat.shape}")
    mat = mat.astype(bool)
    if mat.shape[0] and np.diagonal(mat).any():
        raise InvalidInputError("adjacency has a nonzero diagonal")
    return mat


def is_acyclic(adj) -> bool:
    """True iff the directed graph encoded by ``adj`` has no directed cycle.

    Kahn's algorithm; raises InvalidInputError on non-square input or a
    nonzero diagonal.
    """
    mat = _as_adj(adj)
    indeg = mat.sum(axis=0)
    ready = [int(v) for v in np.flatnonzero(indeg == 0)]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in np.flatnonzero(mat[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(int(w))
    return seen == mat.shape[0]


def topological_order(adj) -> list[int]:
    """A topological order of the DAG, smallest-index-first among ready nodes."""
    mat = _as_adj(adj)
    indeg = mat.sum(axis=0)
    import heapq

    ready = [int(v) for v in np.flatnonzero(indeg == 0)]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in np.flatnonzero(mat[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, int(w))
    if len(order) != mat.shape[0]:
        raise InvalidInputError("graph has a directed cycle")
    return order


class Dag:
    """Directed acyclic graph over d indexed variables."""

    __slots__ = ("adj",)

    def __init__(self, adj):
        mat = _as_adj(adj)
        if (mat & mat.T).any():
            raise InvalidInputError("two-cycle: both (i,j) and (j,i) present")
        if not is_acyclic(mat):
            raise InvalidInputError("graph has a directed cycle")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "adj", mat)

    def __setattr__(self, name, value):
        raise AttributeError("Dag is immutable")

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        mat = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise InvalidInputError(f"edge ({i},{j}) out of range for d={d}")
            mat[i, j] = True
        return cls(mat)

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def parents(self, j: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.adj[:, j])]

    def children(self, i: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.adj[i])]

    def n_edges(self) -> int:
        return int(self.adj.sum())

    def __eq__(self, other):
        return isinstance(other, Dag) and self.adj.shape == other.adj.shape and bool(
            (self.adj == other.adj).all()
        )

    def __hash__(self):
        return hash((self.adj.shape[0], self.adj.tobytes()))

    def __repr__(self):
        return f"Dag(d={self.d}, edges={self.edges()})"


class Skeleton:
    """Undirected adjacency structure of a graph."""

    __slots__ = ("und",)

    def __init__(self, und):
        mat = _as_adj(und)
        if not (mat == mat.T).all():
            raise InvalidInputError("skeleton matrix must be symmetric")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "und", mat)

    def __setattr__(self, name, value):
        raise AttributeError("Skeleton is immutable")

    @property
    def d(self) -> int:
        return self.und.shape[0]

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "Skeleton":
        mat = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            mat[i, j] = mat[j, i] = True
        return cls(mat)

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.und, 1))
        return [(int(i), int(j)) for i, j in zip(ii, jj)]

    def neighbors(self, i: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.und[i])]

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.und[i, j])

    def n_edges(self) -> int:
        return int(self.und.sum()) // 2

    def __eq__(self, other):
        return isinstance(other, Skeleton) and self.und.shape == other.und.shape and bool(
            (self.und == other.und).all()
        )

    def __hash__(self):
        return hash((self.und.shape[0], self.und.tobytes()))

    def __repr__(self):
        return f"Skeleton(d={self.d}, edges={self.edges()})"


@dataclass(frozen=True)
class VStructure:
    """A centered triple: leaves point into the center when interpreted as a v-structure."""

    center: int
    leaves: tuple[int, int]

    def __post_init__(self):
        a, b = sorted(int(v) for v in self.leaves)
        if a == b or self.center in (a, b):
            raise InvalidInputError(f"degenerate triple center={self.center} leaves={self.leaves}")
        object.__setattr__(self, "center", int(self.center))
        object.__setattr__(self, "leaves", (a, b))

    def directed_edges(self) -> tuple[tuple[int, int], tuple[int, int]]:
        a, b = self.leaves
        return (a, self.center), (b, self.center)


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph: directed ordered pairs plus undirected unordered pairs."""

    d: int
    directed: frozenset
    undirected: frozenset

    def __init__(self, d: int, directed: Iterable[tuple[int, int]] = (),
                 undirected: Iterable[tuple[int, int]] = ()):
        dir_set = frozenset((int(i), int(j)) for i, j in directed)
        und_set = frozenset((min(int(i), int(j)), max(int(i), int(j))) for i, j in undirected)
        for i, j in dir_set | und_set:
            if not (0 <= i < d and 0 <= j < d) or i == j:
                raise InvalidInputError(f"edge ({i},{j}) out of range for d={d}")
        dir_pairs = {(min(i, j), max(i, j)) for i, j in dir_set}
        if dir_pairs & und_set:
            raise InvalidInputError("edge present both directed and undirected")
        if len(dir_pairs) != len(dir_set):
            raise InvalidInputError("edge directed in both orientations")
        adj = np.zeros((d, d), dtype=bool)
        for i, j in dir_set:
            adj[i, j] = True
        if not is_acyclic(adj):
            raise InvalidInputError("directed subgraph has a cycle")
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "directed", dir_set)
        object.__setattr__(self, "undirected", und_set)

    def adjacent(self, i: int, j: int) -> bool:
        a, b = min(i, j), max(i, j)
        return (a, b) in self.undirected or (i, j) in self.directed or (j, i) in self.directed

    def skeleton(self) -> Skeleton:
        mat = np.zeros((self.d, self.d), dtype=bool)
        for i, j in self.directed:
            mat[i, j] = mat[j, i] = True
        for i, j in self.undirected:
            mat[i, j] = mat[j, i] = True
        return Skeleton(mat)

    def vstructures(self) -> set[VStructure]:
        """V-structures formed by the directed part: x -> t <- y with x, y nonadjacent."""
        parents: dict[int, list[int]] = {}
        for i, j in self.directed:
            parents.setdefault(j, []).append(i)
        out: set[VStructure] = set()
        for t, pars in parents.items():
            for x, y in itertools.combinations(sorted(pars), 2):
                if not self.adjacent(x, y):
                    out.add(VStructure(t, (x, y)))
        return out


class SepsetMap:
    """Map from unordered vertex pairs to a separating vertex set."""

    __slots__ = ("_sets", "notes")

    def __init__(self):
        self._sets: dict[tuple[int, int], frozenset] = {}
        self.notes: dict = {}

    @staticmethod
    def _key(i: int, j: int) -> tuple[int, int]:
        return (min(i, j), max(i, j))

    def set(self, i: int, j: int, z: Iterable[int]) -> None:
        zset = frozenset(int(v) for v in z)
        if i in zset or j in zset:
            raise InvalidInputError("separating set must exclude the pair itself")
        self._sets[self._key(i, j)] = zset

    def get(self, i: int, j: int) -> frozenset | None:
        return self._sets.get(self._key(i, j))

    def __contains__(self, pair) -> bool:
        return self._key(*pair) in self._sets

    def items(self) -> Iterator[tuple[tuple[int, int], frozenset]]:
        return iter(sorted(self._sets.items()))

    def __len__(self) -> int:
        return len(self._sets)


def skeleton_of(g: Dag) -> Skeleton:
    """Undirected adjacency of a DAG (elementwise OR of adj and its transpose)."""
    return Skeleton(g.adj | g.adj.T)


def vstructures_of(g: Dag) -> set[VStructure]:
    """All triples x -> t <- y of g with x, y nonadjacent."""
    adj = g.adj
    out: set[VStructure] = set()
    for t in range(g.d):
        pars = np.flatnonzero(adj[:, t])
        for x, y in itertools.combinations(pars, 2):
            if not adj[x, y] and not adj[y, x]:
                out.add(VStructure(int(t), (int(x), int(y))))
    return out


def unshielded_triples(s: Skeleton) -> set[VStructure]:
    """Centered triples (t; {x, y}) with x-t, y-t edges and x, y nonadjacent."""
    und = s.und
    out: set[VStructure] = set()
    for t in range(s.d):
        nbrs = np.flatnonzero(und[t])
        for x, y in itertools.combinations(nbrs, 2):
            if not und[x, y]:
                out.add(VStructure(int(t), (int(x), int(y))))
    return out


def d_separated(g: Dag, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """Test whether z blocks every path between i and j in g.

    Reachability formulation of the Bayes-ball algorithm: walk active trails
    from i, entering nodes either from a parent ("down") or from a child
    ("up"); a collider stays active only while it has a descendant in z.
    """
    d = g.d
    zset = {int(v) for v in z}
    for v in (i, j, *zset):
        if not (0 <= int(v) < d):
            raise InvalidInputError(f"vertex {v} out of range for d={d}")
    if i == j:
        raise InvalidInputError("i and j must differ")
    if i in zset or j in zset:
        raise InvalidInputError("conditioning set must exclude i and j")

    adj = g.adj
    # nodes with a descendant in z (z itself included): ancestors of z
    anc_z: set[int] = set()
    stack = list(zset)
    while stack:
        v = stack.pop()
        if v in anc_z:
            continue
        anc_z.add(v)
        stack.extend(int(p) for p in np.flatnonzero(adj[:, v]))

    visited: set[tuple[int, str]] = set()
    queue: list[tuple[int, str]] = [(int(i), "up")]
    while queue:
        v, direction = queue.pop()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v == j:
            return False
        if direction == "up":
            # entered from a child: pass through unless observed
            if v not in zset:
                queue.extend((int(p), "up") for p in np.flatnonzero(adj[:, v]))
                queue.extend((int(c), "down") for c in np.flatnonzero(adj[v]))
        else:
            # entered from a parent: chain continues unless observed,
            # collider opens only with a descendant in z
            if v not in zset:
                queue.extend((int(c), "down") for c in np.flatnonzero(adj[v]))
            if v in anc_z:
                queue.extend((int(p), "up") for p in np.flatnonzero(adj[:, v]))
    return True


class _MeekState:
    """Mutable orientation state used while running the Meek rules."""

    __slots__ = ("d", "children", "parents", "und_nbrs")

    def __init__(self, d: int, directed: Iterable[tuple[int, int]],
                 undirected: Iterable[tuple[int, int]]):
        self.d = d
        self.children = [set() for _ in range(d)]
        self.parents = [set() for _ in range(d)]
        self.und_nbrs = [set() for _ in range(d)]
        for i, j in directed:
            self.children[i].add(j)
            self.parents[j].add(i)
        for i, j in undirected:
            self.und_nbrs[i].add(j)
            self.und_nbrs[j].add(i)

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.children[i] or j in self.parents[i] or j in self.und_nbrs[i]

    def directed_path(self, src: int, dst: int) -> list[tuple[int, int]] | None:
        """Edges of some directed path src -> ... -> dst, or None."""
        if src == dst:
            return []
        prev: dict[int, int] = {src: src}
        stack = [src]
        while stack:
            v = stack.pop()
            for w in sorted(self.children[v]):
                if w not in prev:
                    prev[w] = v
                    if w == dst:
                        path = []
                        cur = dst
                        while cur != src:
                            path.append((prev[cur], cur))
                            cur = prev[cur]
                        return path[::-1]
                    stack.append(w)
        return None

    def orient(self, u: int, v: int) -> None:
        """Direct the undirected edge u-v as u -> v, guarding acyclicity."""
        cycle = self.directed_path(v, u)
        if cycle is not None:
            raise ConstraintViolationError(
                f"orienting {u}->{v} would close a directed cycle",
                demanded=(u, v),
                blocking_cycle=cycle + [(u, v)],
            )
        self.und_nbrs[u].discard(v)
        self.und_nbrs[v].discard(u)
        self.children[u].add(v)
        self.parents[v].add(u)

    def forced_orientation(self, a: int, b: int) -> bool:
        """True iff some Meek rule R1-R4 demands a -> b for undirected a-b."""
        # R1: c -> a, a - b, c and b nonadjacent
        for c in self.parents[a]:
            if not self.adjacent(c, b):
                return True
        # R2: directed chain a -> c -> b alongside a - b
        if self.children[a] & self.parents[b]:
            return True
        # R3: a - c -> b and a - d -> b with c, d nonadjacent
        mid = sorted(self.und_nbrs[a] & self.parents[b])
        for c, dd in itertools.combinations(mid, 2):
            if not self.adjacent(c, dd):
                return True
        # R4: d -> c -> b with d, b nonadjacent and a adjacent to both c and d
        for c in self.parents[b]:
            if not self.adjacent(a, c):
                continue
            for dd in self.parents[c]:
                if dd != b and not self.adjacent(dd, b) and self.adjacent(a, dd):
                    return True
        return False

    def to_pdag(self) -> Pdag:
        directed = [(i, j) for i in range(self.d) for j in self.children[i]]
        undirected = [(i, j) for i in range(self.d) for j in self.und_nbrs[i] if i < j]
        return Pdag(self.d, directed, undirected)


def meek_closure(p: Pdag) -> Pdag:
    """Apply Meek rules R1-R4 until fixpoint.

    Each orientation passes an acyclicity guard; an input whose orientations
    admit no consistent extension raises ConstraintViolationError. Output
    directed edges are a superset of the input's.
    """
    state = _MeekState(p.d, p.directed, p.undirected)
    changed = True
    while changed:
        changed = False
        pairs = sorted((i, j) for i in range(p.d) for j in state.und_nbrs[i] if i < j)
        for a, b in pairs:
            if b not in state.und_nbrs[a]:
                continue  # oriented earlier in this sweep
            if state.forced_orientation(a, b):
                state.orient(a, b)
                changed = True
            elif state.forced_orientation(b, a):
                state.orient(b, a)
                changed = True
    return state.to_pdag()


def cpdag_of(g: Dag) -> Pdag:
    """The CPDAG of g: v-structure orientations closed under the Meek rules."""
    skel = skeleton_of(g)
    directed: set[tuple[int, int]] = set()
    for vs in vstructures_of(g):
        directed.update(vs.directed_edges())
    oriented_pairs = {(min(i, j), max(i, j)) for i, j in directed}
    undirected = [e for e in skel.edges() if e not in oriented_pairs]
    return meek_closure(Pdag(g.d, directed, undirected))


def enumerate_mec(g: Dag, max_d: int = 7) -> list[Dag]:
    """All DAGs sharing g's skeleton and v-structure set, by exhaustive orientation.

    Backtracks over the 2^(#edges) orientation assignments with early
    acyclicity pruning; refuses d > max_d (default 7).
    """
    if g.d > max_d:
        raise CapacityError(f"enumerate_mec supports d <= {max_d}, got d={g.d}")
    edges = skeleton_of(g).edges()
    target_vs = vstructures_of(g)
    members: list[Dag] = []
    adj = np.zeros((g.d, g.d), dtype=bool)

    def reaches(src: int, dst: int) -> bool:
        stack = [src]
        seen = {src}
        while stack:
            v = stack.pop()
            if v == dst:
                return True
            for w in np.flatnonzero(adj[v]):
                if w not in seen:
                    seen.add(int(w))
                    stack.append(int(w))
        return False

    def assign(k: int) -> None:
        if k == len(edges):
            cand = Dag(adj)
            if vstructures_of(cand) == target_vs:
                members.append(cand)
            return
        i, j = edges[k]
        for u, v in ((i, j), (j, i)):
            if not reaches(v, u):  # orienting u->v keeps the partial graph acyclic
                adj[u, v] = True
                assign(k + 1)
                adj[u, v] = False

    assign(0)
    return members


# --- JSON interchange -------------------------------------------------------
#
# DAG files: {"d": int, "edges": [[i, j], ...]} with i -> j.
# PDAG files additionally carry "undirected": [[i, j], ...] with i < j.
# Writers emit canonical bytes (sorted edges, fixed separators) so round
# trips are bit-exact.


def dag_to_dict(g: Dag) -> dict:
    return {"d": g.d, "edges": sorted(g.edges())}


def dag_from_dict(obj: dict) -> Dag:
    try:
        return Dag.from_edges(int(obj["d"]), [tuple(e) for e in obj["edges"]])
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed DAG JSON: {exc}") from exc


def pdag_to_dict(p: Pdag) -> dict:
    return {
        "d": p.d,
        "edges": sorted(p.directed),
        "undirected": sorted(p.undirected),
    }


def pdag_from_dict(obj: dict) -> Pdag:
    try:
        return Pdag(
            int(obj["d"]),
            [tuple(e) for e in obj["edges"]],
            [tuple(e) for e in obj.get("undirected", [])],
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed PDAG JSON: {exc}") from exc


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("ascii")


def write_graph_json(path, graph) -> None:
    obj = dag_to_dict(graph) if isinstance(graph, Dag) else pdag_to_dict(graph)
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(obj))


def read_dag_json(path) -> Dag:
    with open(path, "r", encoding="ascii") as fh:
        return dag_from_dict(json.load(fh))


def read_pdag_json(path) -> Pdag:
    with open(path, "r", encoding="ascii") as fh:
        return pdag_from_dict(json.load(fh))
