"""Synthetic causal models and forward-sampled observational data.

Random graph families (ER, SF, WS, SBM, star), structural-equation mechanisms
(linear-Gaussian, random Fourier features, CPT), and the constructed 6-node
diagnostic family used to expose the independent-edge prediction bias.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .graphs import Dag, topological_order

__all__ = [
    "ErdosRenyi",
    "ScaleFree",
    "WattsStrogatz",
    "Sbm",
    "Star",
    "Custom",
    "LinearGaussian",
    "Rff",
    "Cpt",
    "LinearNode",
    "RffNode",
    "CptNode",
    "Scm",
    "DataSample",
    "sample_graph",
    "sample_graph_info",
    "sample_scm",
    "sample_data",
    "linear_covariance",
    "scm_covariance",
    "make_fig_cto_dataset",
    "fig_cto_truth",
    "fig_cto_mec_members",
    "fig_cto_training_instance",
    "write_data_csv",
    "read_data_csv",
    "scm_to_dict",
    "scm_from_dict",
]


# --- graph models -----------------------------------------------------------


@dataclass(frozen=True)
class ErdosRenyi:
    """Independent edges; give either an edge probability or an expected degree."""

    edge_prob: float | None = None
    expected_degree: float | None = None

    def __post_init__(self):
        if (self.edge_prob is None) == (self.expected_degree is None):
            raise InvalidInputError("specify exactly one of edge_prob / expected_degree")
        if self.edge_prob is not None and not 0 <= self.edge_prob <= 1:
            raise InvalidInputError("edge_prob must lie in [0,1]")
        if self.expected_degree is not None and self.expected_degree < 0:
            raise InvalidInputError("expected_degree must be nonnegative")


@dataclass(frozen=True)
class ScaleFree:
    """Preferential attachment with a fixed attachment count per new node."""

    attachment: int = 1

    def __post_init__(self):
        if self.attachment < 1:
            raise InvalidInputError("attachment must be positive")


@dataclass(frozen=True)
class WattsStrogatz:
    """Ring lattice with rewiring; lattice_dim None draws from {2, 3} per sample."""

    lattice_dim: int | None = None
    rewire_prob: float = 0.3

    def __post_init__(self):
        if self.lattice_dim is not None and self.lattice_dim not in (2, 3):
            raise InvalidInputError("lattice_dim must be 2 or 3")
        if not 0 <= self.rewire_prob <= 1:
            raise InvalidInputError("rewire_prob must lie in [0,1]")


@dataclass(frozen=True)
class Sbm:
    """Equal-size blocks, within-block edges 5x more likely, tuned to a mean degree."""

    blocks: int = 2
    mean_degree: float = 2.0
    within_between_ratio: float = 5.0

    def __post_init__(self):
        if self.blocks < 1 or self.mean_degree < 0 or self.within_between_ratio <= 0:
            raise InvalidInputError("invalid SBM parameters")


@dataclass(frozen=True)
class Star:
    """One center (vertex 0) adjacent to every leaf; no leaf-leaf edges."""

    leaves: int = 2

    def __post_init__(self):
        if self.leaves < 1:
            raise InvalidInputError("star needs at least one leaf")


@dataclass(frozen=True)
class Custom:
    dag: Dag


GraphModel = ErdosRenyi | ScaleFree | WattsStrogatz | Sbm | Star | Custom


def _orient_by_permutation(und: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Orient an undirected topology along a uniformly random vertex order."""
    d = und.shape[0]
    order = rng.permutation(d)
    rank = np.empty(d, dtype=int)
    rank[order] = np.arange(d)
    adj = np.zeros((d, d), dtype=bool)
    ii, jj = np.nonzero(np.triu(und, 1))
    for i, j in zip(ii, jj):
        if rank[i] < rank[j]:
            adj[i, j] = True
        else:
            adj[j, i] = True
    return adj


def _er_topology(m: ErdosRenyi, d: int, rng) -> tuple[np.ndarray, dict]:
    if m.edge_prob is not None:
        p = m.edge_prob
    else:
        p = min(1.0, m.expected_degree / (d - 1)) if d > 1 else 0.0
    und = np.zeros((d, d), dtype=bool)
    iu = np.triu_indices(d, 1)
    mask = rng.random(len(iu[0])) < p
    und[iu[0][mask], iu[1][mask]] = True
    return und | und.T, {"edge_prob": p}


def _sf_topology(m: ScaleFree, d: int, rng) -> tuple[np.ndarray, dict]:
    if m.attachment >= d:
        raise InvalidInputError(f"attachment {m.attachment} must be < d={d}")
    und = np.zeros((d, d), dtype=bool)
    k = m.attachment
    repeated: list[int] = list(range(k))
    for v in range(k, d):
        chosen: set[int] = set()
        while len(chosen) < k:
            chosen.add(int(repeated[rng.integers(len(repeated))]))
        for t in chosen:
            und[v, t] = und[t, v] = True
            repeated.append(t)
        repeated.extend([v] * k)
    return und, {"attachment": k}


def _ws_topology(m: WattsStrogatz, d: int, rng) -> tuple[np.ndarray, dict]:
    k = m.lattice_dim if m.lattice_dim is not None else int(rng.choice([2, 3]))
    if d <= 2 * k:
        raise InvalidInputError(f"Watts-Strogatz needs d > 2*lattice_dim, got d={d}, dim={k}")
    und = np.zeros((d, d), dtype=bool)
    for i in range(d):
        for off in range(1, k + 1):
            j = (i + off) % d
            und[i, j] = und[j, i] = True
    for i in range(d):
        for off in range(1, k + 1):
            j = (i + off) % d
            if und[i, j] and rng.random() < m.rewire_prob:
                candidates = np.flatnonzero(~und[i])
                candidates = candidates[candidates != i]
                if candidates.size == 0:
                    continue
                w = int(candidates[rng.integers(candidates.size)])
                und[i, j] = und[j, i] = False
                und[i, w] = und[w, i] = True
    return und, {"lattice_dim": k}


def _sbm_topology(m: Sbm, d: int, rng) -> tuple[np.ndarray, dict]:
    sizes = [d // m.blocks + (1 if b < d % m.blocks else 0) for b in range(m.blocks)]
    membership = np.repeat(np.arange(m.blocks), sizes)
    r = m.within_between_ratio
    # expected degree of node i: p_in*(s_i - 1) + p_out*(d - s_i); solve for p_out
    size_of = np.array([sizes[b] for b in membership], dtype=float)
    denom = float(np.mean(r * (size_of - 1) + (d - size_of)))
    p_out = 0.0 if denom == 0 else min(1.0, m.mean_degree / denom)
    p_in = min(1.0, r * p_out)
    und = np.zeros((d, d), dtype=bool)
    iu = np.triu_indices(d, 1)
    same = membership[iu[0]] == membership[iu[1]]
    probs = np.where(same, p_in, p_out)
    mask = rng.random(len(iu[0])) < probs
    und[iu[0][mask], iu[1][mask]] = True
    return und | und.T, {"p_in": p_in, "p_out": p_out}


def _star_topology(m: Star, d: int) -> tuple[np.ndarray, dict]:
    if d != m.leaves + 1:
        raise InvalidInputError(f"star with {m.leaves} leaves needs d={m.leaves + 1}, got {d}")
    und = np.zeros((d, d), dtype=bool)
    und[0, 1:] = und[1:, 0] = True
    return und, {"center": 0}


def sample_graph_info(model: GraphModel, d: int, rng: np.random.Generator) -> tuple[Dag, dict]:
    """Sample a DAG and return generator metadata alongside it."""
    if d < 1:
        raise InvalidInputError("d must be >= 1")
    if isinstance(model, Custom):
        if model.dag.d != d:
            raise InvalidInputError("custom DAG dimension mismatch")
        return model.dag, {}
    if isinstance(model, ErdosRenyi):
        und, info = _er_topology(model, d, rng)
    elif isinstance(model, ScaleFree):
        und, info = _sf_topology(model, d, rng)
    elif isinstance(model, WattsStrogatz):
        und, info = _ws_topology(model, d, rng)
    elif isinstance(model, Sbm):
        und, info = _sbm_topology(model, d, rng)
    elif isinstance(model, Star):
        und, info = _star_topology(model, d)
    else:
        raise InvalidInputError(f"unknown graph model {model!r}")
    return Dag(_orient_by_permutation(und, rng)), info


def sample_graph(model: GraphModel, d: int, rng: np.random.Generator) -> Dag:
    return sample_graph_info(model, d, rng)[0]


# --- mechanisms -------------------------------------------------------------


@dataclass(frozen=True)
class LinearGaussian:
    """Weights drawn uniformly from +-[low, high] with a random sign flip."""

    weight_range: tuple[float, float] = (0.5, 2.0)
    noise_var_range: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        lo, hi = self.noise_var_range
        if lo <= 0 or hi < lo:
            raise InvalidInputError("noise variances must be positive")


@dataclass(frozen=True)
class Rff:
    """Random Fourier feature mechanism: sum_k a_k cos(w_k . pa + b_k) + noise."""

    num_features: int = 100
    length_scale: float = 1.0
    output_scale: float = 1.0
    noise_var_range: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        lo, hi = self.noise_var_range
        if lo <= 0 or hi < lo or self.num_features < 1 or self.length_scale <= 0:
            raise InvalidInputError("invalid RFF parameters")


@dataclass(frozen=True)
class Cpt:
    """Conditional probability tables with Dirichlet(concentration) rows."""

    arity: int = 2
    concentration: float = 1.0

    def __post_init__(self):
        if self.arity < 2 or self.concentration <= 0:
            raise InvalidInputError("arity must be >= 2 and concentration positive")


Mechanism = LinearGaussian | Rff | Cpt


@dataclass(frozen=True)
class LinearNode:
    parents: tuple[int, ...]
    weights: tuple[float, ...]
    noise_var: float


@dataclass(frozen=True)
class RffNode:
    parents: tuple[int, ...]
    w: np.ndarray = field(repr=False)  # (K, |parents|)
    b: np.ndarray = field(repr=False)  # (K,)
    a: np.ndarray = field(repr=False)  # (K,)
    noise_var: float = 1.0


@dataclass(frozen=True)
class CptNode:
    parents: tuple[int, ...]
    arity: int
    parent_arities: tuple[int, ...]
    table: np.ndarray = field(repr=False)  # (prod(parent_arities), arity)


@dataclass(frozen=True)
class Scm:
    """A DAG plus one structural equation per node, each reading only its parents."""

    g: Dag
    nodes: tuple
    kind: str  # "continuous" | "discrete"

    @property
    def d(self) -> int:
        return self.g.d

    def arities(self) -> tuple[int, ...] | None:
        if self.kind != "discrete":
            return None
        return tuple(node.arity for node in self.nodes)


def sample_scm(g: Dag, mech: Mechanism, rng: np.random.Generator) -> Scm:
    """Draw per-node structural-equation parameters for every node of g."""
    nodes = []
    if isinstance(mech, LinearGaussian):
        lo, hi = mech.weight_range
        for j in range(g.d):
            pars = tuple(g.parents(j))
            mags = rng.uniform(lo, hi, size=len(pars))
            signs = rng.choice([-1.0, 1.0], size=len(pars))
            noise = float(rng.uniform(*mech.noise_var_range))
            nodes.append(LinearNode(pars, tuple(float(v) for v in mags * signs), noise))
        return Scm(g, tuple(nodes), "continuous")
    if isinstance(mech, Rff):
        for j in range(g.d):
            pars = tuple(g.parents(j))
            k = mech.num_features
            w = rng.normal(0.0, 1.0 / mech.length_scale, size=(k, len(pars)))
            b = rng.uniform(0.0, 2.0 * math.pi, size=k)
            a = rng.normal(0.0, mech.output_scale / math.sqrt(k), size=k)
            noise = float(rng.uniform(*mech.noise_var_range))
            nodes.append(RffNode(pars, w, b, a, noise))
        return Scm(g, tuple(nodes), "continuous")
    if isinstance(mech, Cpt):
        for j in range(g.d):
            pars = tuple(g.parents(j))
            par_ar = tuple(mech.arity for _ in pars)
            n_rows = int(np.prod(par_ar)) if pars else 1
            table = rng.dirichlet(np.full(mech.arity, mech.concentration), size=n_rows)
            nodes.append(CptNode(pars, mech.arity, par_ar, table))
        return Scm(g, tuple(nodes), "discrete")
    raise InvalidInputError(f"unknown mechanism {mech!r}")


def sample_data(scm: Scm, n: int, rng: np.random.Generator) -> "DataSample":
    """Forward-sample n i.i.d. observations in topological order."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    order = topological_order(scm.g.adj)
    if scm.kind == "continuous":
        values = np.zeros((n, scm.d))
        for j in order:
            node = scm.nodes[j]
            noise = rng.normal(0.0, math.sqrt(node.noise_var), size=n)
            if isinstance(node, LinearNode):
                contrib = noise
                for p, w in zip(node.parents, node.weights):
                    contrib = contrib + w * values[:, p]
                values[:, j] = contrib
            else:
                if node.parents:
                    pa = values[:, list(node.parents)]
                    values[:, j] = np.cos(pa @ node.w.T + node.b) @ node.a + noise
                else:
                    values[:, j] = noise
        return DataSample(values, "continuous")
    # discrete
    values = np.zeros((n, scm.d), dtype=np.int64)
    for j in order:
        node = scm.nodes[j]
        if node.parents:
            rows = np.zeros(n, dtype=np.int64)
            for p, ar in zip(node.parents, node.parent_arities):
                rows = rows * ar + values[:, p]
        else:
            rows = np.zeros(n, dtype=np.int64)
        cum = np.cumsum(node.table, axis=1)
        u = rng.random(n)
        values[:, j] = (u[:, None] > cum[rows]).sum(axis=1)
    arities = scm.arities()
    return DataSample(values, "discrete", arities)


@dataclass(frozen=True)
class DataSample:
    """n x d observation matrix, continuous (float64) or discrete (int64)."""

    values: np.ndarray
    kind: str
    arities: tuple[int, ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise InvalidInputError("data must be an n x d matrix")
        if self.kind == "continuous":
            vals = vals.astype(np.float64)
            if not np.isfinite(vals).all():
                raise InvalidInputError("continuous data contains non-finite entries")
        elif self.kind == "discrete":
            vals = vals.astype(np.int64)
            if self.arities is None:
                object.__setattr__(self, "arities", tuple(int(v) + 1 for v in vals.max(axis=0)))
            if vals.min() < 0:
                raise InvalidInputError("discrete data must be nonnegative")
            for col, ar in enumerate(self.arities):
                if vals[:, col].max() >= ar:
                    raise InvalidInputError(f"column {col} exceeds arity {ar}")
        else:
            raise InvalidInputError(f"unknown data kind {self.kind!r}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


# --- analytic covariance ----------------------------------------------------


def linear_covariance(d: int, parents: Sequence[Sequence[int]],
                      weights: Sequence[Sequence], noise_vars: Sequence,
                      order: Sequence[int]):
    """Covariance matrix of a linear SCM, generic over the scalar type.

    Works with floats or fractions.Fraction; propagation follows the
    topological order, so no matrix inversion is involved.
    """
    zero = noise_vars[0] * 0
    cov = [[zero for _ in range(d)] for _ in range(d)]
    for j in order:
        pars, ws = parents[j], weights[j]
        for k in range(d):
            if k == j:
                continue
            cov[j][k] = cov[k][j] = sum(
                (w * cov[p][k] for p, w in zip(pars, ws)), zero
            )
        var = noise_vars[j]
        for p, w in zip(pars, ws):
            for q, u in zip(pars, ws):
                var = var + w * u * cov[p][q]
        cov[j][j] = var
    return cov


def scm_covariance(scm: Scm) -> np.ndarray:
    """Analytic covariance of a linear-Gaussian SCM."""
    if scm.kind != "continuous" or not all(isinstance(nd, LinearNode) for nd in scm.nodes):
        raise InvalidInputError("analytic covariance requires a linear-Gaussian SCM")
    order = topological_order(scm.g.adj)
    cov = linear_covariance(
        scm.d,
        [nd.parents for nd in scm.nodes],
        [nd.weights for nd in scm.nodes],
        [nd.noise_var for nd in scm.nodes],
        order,
    )
    return np.array(cov, dtype=float)


# --- constructed 6-node diagnostic family ------------------------------------
#
# Two disconnected components: a collider A -> B <- C (identifiable) and a
# chain D -> E -> F (identifiable only up to its equivalence class). Training
# labels are drawn uniformly over the three equivalence-class members while
# the data always comes from the canonical parameterization, so the chain
# orientation carries zero information -- the regime in which independent-edge
# prediction is maximally biased.

_FIG_CTO_EDGES = [(0, 1), (2, 1), (3, 4), (4, 5)]


def fig_cto_truth() -> Dag:
    return Dag.from_edges(6, _FIG_CTO_EDGES)


def fig_cto_mec_members() -> list[Dag]:
    collider = [(0, 1), (2, 1)]
    chains = [
        [(3, 4), (4, 5)],  # D -> E -> F
        [(4, 3), (5, 4)],  # D <- E <- F
        [(4, 3), (4, 5)],  # D <- E -> F
    ]
    return [Dag.from_edges(6, collider + chain) for chain in chains]


def _fig_cto_scm(rng: np.random.Generator) -> Scm:
    g = fig_cto_truth()
    nodes = []
    for j in range(6):
        pars = tuple(g.parents(j))
        mags = rng.uniform(1.0, 2.0, size=len(pars))
        signs = rng.choice([-1.0, 1.0], size=len(pars))
        noise = float(rng.uniform(0.8, 1.2))
        nodes.append(LinearNode(pars, tuple(float(v) for v in mags * signs), noise))
    return Scm(g, tuple(nodes), "continuous")


def make_fig_cto_dataset(n: int, rng: np.random.Generator) -> tuple[Scm, DataSample, Dag]:
    """One diagnostic instance: randomized mechanisms, canonical ground truth."""
    scm = _fig_cto_scm(rng)
    data = sample_data(scm, n, rng)
    return scm, data, fig_cto_truth()


def fig_cto_training_instance(n: int, rng: np.random.Generator) -> tuple[Dag, DataSample]:
    """Training pair: data from the canonical SCM, label uniform over the MEC.

    All three members parameterize the same joint distribution family, so the
    label is independent of the data given the instance; an edge predictor's
    optimal direction probabilities on the chain are 1/3 and 2/3.
    """
    scm = _fig_cto_scm(rng)
    data = sample_data(scm, n, rng)
    label = fig_cto_mec_members()[int(rng.integers(3))]
    return label, data


# --- file interchange --------------------------------------------------------


def write_data_csv(path, data: DataSample) -> None:
    """Header X0..X{d-1}; floats as %.17g (exact round trip), ints as %d."""
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"X{i}" for i in range(data.d)])
        if data.kind == "continuous":
            for row in data.values:
                writer.writerow([f"{v:.17g}" for v in row])
        else:
            for row in data.values:
                writer.writerow([str(int(v)) for v in row])


def read_data_csv(path, kind: str | None = None,
                  arities: tuple[int, ...] | None = None) -> DataSample:
    """Read a data CSV; integer-only content is treated as discrete unless told otherwise."""
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    d = len(header)
    if any(h != f"X{i}" for i, h in enumerate(header)):
        raise InvalidInputError(f"unexpected CSV header {header}")
    raw = np.array(rows, dtype=object)
    if raw.shape[1] != d:
        raise InvalidInputError("ragged CSV")
    if kind is None:
        try:
            ints = np.array([[int(v) for v in row] for row in rows], dtype=np.int64)
            return DataSample(ints, "discrete", arities)
        except ValueError:
            kind = "continuous"
    if kind == "discrete":
        vals = np.array([[int(v) for v in row] for row in rows], dtype=np.int64)
        return DataSample(vals, "discrete", arities)
    vals = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    return DataSample(vals, "continuous")


def scm_to_dict(scm: Scm) -> dict:
    nodes = []
    for node in scm.nodes:
        if isinstance(node, LinearNode):
            nodes.append({
                "type": "linear",
                "parents": list(node.parents),
                "weights": list(node.weights),
                "noise_var": node.noise_var,
            })
        elif isinstance(node, RffNode):
            nodes.append({
                "type": "rff",
                "parents": list(node.parents),
                "w": node.w.tolist(),
                "b": node.b.tolist(),
                "a": node.a.tolist(),
                "noise_var": node.noise_var,
            })
        else:
            nodes.append({
                "type": "cpt",
                "parents": list(node.parents),
                "arity": node.arity,
                "parent_arities": list(node.parent_arities),
                "table": node.table.tolist(),
            })
    return {
        "kind": scm.kind,
        "d": scm.d,
        "edges": sorted(scm.g.edges()),
        "nodes": nodes,
    }


def scm_from_dict(obj: dict) -> Scm:
    g = Dag.from_edges(int(obj["d"]), [tuple(e) for e in obj["edges"]])
    nodes = []
    for spec in obj["nodes"]:
        pars = tuple(int(p) for p in spec["parents"])
        if spec["type"] == "linear":
            nodes.append(LinearNode(pars, tuple(float(w) for w in spec["weights"]),
                                    float(spec["noise_var"])))
        elif spec["type"] == "rff":
            nodes.append(RffNode(pars, np.array(spec["w"], dtype=float),
                                 np.array(spec["b"], dtype=float),
                                 np.array(spec["a"], dtype=float),
                                 float(spec["noise_var"])))
        elif spec["type"] == "cpt":
            nodes.append(CptNode(pars, int(spec["arity"]),
                                 tuple(int(a) for a in spec["parent_arities"]),
                                 np.array(spec["table"], dtype=float)))
        else:
            raise InvalidInputError(f"unknown node type {spec['type']!r}")
    return Scm(g, tuple(nodes), obj["kind"])


def write_scm_json(path, scm: Scm) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(scm_to_dict(scm), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def read_scm_json(path) -> Scm:
    with open(path, "r", encoding="ascii") as fh:
        return scm_from_dict(json.load(fh))


def model1_chain_scm() -> Scm:
    """X -> T -> Y with unit weights and unit noise; vertex order (X, T, Y)."""
    g = Dag.from_edges(3, [(0, 1), (1, 2)])
    nodes = (
        LinearNode((), (), 1.0),
        LinearNode((0,), (1.0,), 1.0),
        LinearNode((1,), (1.0,), 1.0),
    )
    return Scm(g, nodes, "continuous")


def model2_chain_scm() -> Scm:
    """X <- T <- Y reparameterization producing the same joint Gaussian."""
    g = Dag.from_edges(3, [(2, 1), (1, 0)])
    nodes = (
        LinearNode((1,), (0.5,), 0.5),
        LinearNode((2,), (2.0 / 3.0,), 2.0 / 3.0),
        LinearNode((), (), 3.0),
    )
    return Scm(g, nodes, "continuous")


def model_chain_fractions() -> tuple[list, list]:
    """Exact-rational parameter views of the two chain models, for covariance proofs.

    Returns (model1, model2), each as (parents, weights, noise_vars) with
    Fraction entries, vertex order (X, T, Y).
    """
    one = Fraction(1)
    model1 = (
        [(), (0,), (1,)],
        [(), (one,), (one,)],
        [one, one, one],
    )
    model2 = (
        [(1,), (2,), ()],
        [(Fraction(1, 2),), (Fraction(2, 3),), ()],
        [Fraction(1, 2), Fraction(2, 3), Fraction(3)],
    )
    return model1, model2
