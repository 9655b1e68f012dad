import numpy as np
import pytest

from causalmec.citest import DsepOracle, FisherZTester
from causalmec.constraint import (
    close_orientations,
    orient_vstructures,
    pc,
    pc_skeleton,
    vstructs_from_sepsets,
    vstructs_majority,
)
from causalmec.errors import ContractError
from causalmec.graphs import (
    Dag,
    Skeleton,
    VStructure,
    cpdag_of,
    skeleton_of,
    unshielded_triples,
    vstructures_of,
)
from causalmec.metrics import shd_cpdag
from causalmec.scm import ErdosRenyi, LinearGaussian, sample_data, sample_graph, sample_scm
from oracles import random_dag

COLLIDER = Dag.from_edges(3, [(0, 1), (2, 1)])
CHAIN = Dag.from_edges(3, [(0, 1), (1, 2)])


def f1_sets(pred: set, truth: set) -> float:
    if not truth:
        return 100.0 if not pred else 0.0
    tp = len(pred & truth)
    if not pred or tp == 0:
        return 0.0
    p, r = tp / len(pred), tp / len(truth)
    return 200.0 * p * r / (p + r)


class TestPcSkeleton:
    def test_oracle_recovers_skeleton_on_random_dags(self):
        rng = np.random.default_rng(0)
        hits = 0
        for _ in range(100):
            d = int(rng.integers(3, 9))
            g = random_dag(rng, d, 0.35)
            skel, _ = pc_skeleton(DsepOracle(g), d, max_cond=d - 2)
            hits += skel == skeleton_of(g)
        assert hits == 100

    def test_empty_graph(self):
        g = Dag.from_edges(5, [])
        skel, sepsets = pc_skeleton(DsepOracle(g), 5)
        assert skel.n_edges() == 0
        assert len(sepsets) == 10
        assert all(z == frozenset() for _, z in sepsets.items())

    def test_finite_sample_sf1(self):
        rng = np.random.default_rng(1)
        scores = []
        for _ in range(50):
            g = sample_graph(ErdosRenyi(expected_degree=2.0), 10, rng)
            scm = sample_scm(g, LinearGaussian(), rng)
            data = sample_data(scm, 10_000, rng)
            skel, _ = pc_skeleton(FisherZTester(data, alpha=0.05), 10, max_cond=3)
            truth_edges = set(skeleton_of(g).edges())
            scores.append(f1_sets(set(skel.edges()), truth_edges))
        assert np.mean(scores) >= 85.0

    def test_order_independence_under_relabeling(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            d = 6
            g = random_dag(rng, d, 0.4)
            perm = rng.permutation(d)
            padj = np.zeros((d, d), dtype=bool)
            for i, j in g.edges():
                padj[perm[i], perm[j]] = True
            h = Dag(padj)
            skel_g, _ = pc_skeleton(DsepOracle(g), d)
            skel_h, _ = pc_skeleton(DsepOracle(h), d)
            back = np.zeros((d, d), dtype=bool)
            for i, j in skel_h.edges():
                inv = np.argsort(perm)
                back[inv[i], inv[j]] = back[inv[j], inv[i]] = True
            assert Skeleton(back) == skel_g


class TestVstructsFromSepsets:
    def test_collider(self):
        skel, sepsets = pc_skeleton(DsepOracle(COLLIDER), 3)
        assert sepsets.get(0, 2) == frozenset()
        assert vstructs_from_sepsets(skel, sepsets) == {VStructure(1, (0, 2))}

    def test_chain(self):
        skel, sepsets = pc_skeleton(DsepOracle(CHAIN), 3)
        assert sepsets.get(0, 2) == frozenset({1})
        assert vstructs_from_sepsets(skel, sepsets) == set()

    def test_missing_sepset_raises(self):
        skel = Skeleton.from_edges(3, [(0, 1), (1, 2)])
        from causalmec.graphs import SepsetMap

        with pytest.raises(ContractError):
            vstructs_from_sepsets(skel, SepsetMap())

    def test_exact_on_random_dags(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            d = int(rng.integers(3, 9))
            g = random_dag(rng, d, 0.35)
            skel, sepsets = pc_skeleton(DsepOracle(g), d)
            assert vstructs_from_sepsets(skel, sepsets) == vstructures_of(g)

    def test_subset_of_unshielded_triples(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            g = random_dag(rng, 6, 0.4)
            skel, sepsets = pc_skeleton(DsepOracle(g), 6)
            assert vstructs_from_sepsets(skel, sepsets) <= unshielded_triples(skel)


class TestVstructsMajority:
    def test_collider_fraction_zero(self):
        skel = skeleton_of(COLLIDER)
        vstructs, unclassified = vstructs_majority(DsepOracle(COLLIDER), skel)
        assert vstructs == {VStructure(1, (0, 2))}
        assert not unclassified

    def test_chain_fraction_one(self):
        skel = skeleton_of(CHAIN)
        vstructs, unclassified = vstructs_majority(DsepOracle(CHAIN), skel)
        assert vstructs == set()
        assert not unclassified

    def test_majority_beats_plain_rule_often(self):
        rng = np.random.default_rng(5)
        wins = 0
        trials = 50
        for _ in range(trials):
            g = sample_graph(ErdosRenyi(expected_degree=2.5), 8, rng)
            scm = sample_scm(g, LinearGaussian(), rng)
            data = sample_data(scm, 5_000, rng)
            tester = FisherZTester(data, alpha=0.05)
            skel, sepsets = pc_skeleton(tester, 8, max_cond=3)
            truth = {(v.center, v.leaves) for v in vstructures_of(g)}
            plain = {(v.center, v.leaves)
                     for v in vstructs_from_sepsets(skel, sepsets)}
            mpc = {(v.center, v.leaves)
                   for v in vstructs_majority(tester, skel, max_cond=3)[0]}
            if f1_sets(mpc, truth) >= f1_sets(plain, truth):
                wins += 1
        assert wins / trials >= 0.6


class TestOrientationSanitizing:
    def test_bidirectional_demand_dropped(self):
        skel = Skeleton.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        vstructs = {VStructure(1, (0, 2)), VStructure(2, (1, 3))}
        directed, undirected, diag = orient_vstructures(skel, vstructs)
        assert (1, 2) not in directed and (2, 1) not in directed
        assert directed == {(0, 1), (3, 2)}
        assert diag["orientation_conflicts"] == 1

    def test_meek_fallback_demotes_blocking_edge(self):
        # R1 wants 1 -> 2, closing 1->2->3->0->1; fallback drops an input edge
        diag: dict = {}
        p = close_orientations(4, {(0, 1), (2, 3), (3, 0)}, {(1, 2)}, diag)
        assert diag["meek_demotions"] >= 1
        assert p.skeleton() == Skeleton.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])


class TestPcPipeline:
    def test_oracle_soundness_small(self):
        rng = np.random.default_rng(6)
        for _ in range(60):
            d = int(rng.integers(2, 9))
            g = random_dag(rng, d, 0.4)
            assert pc(DsepOracle(g), d) == cpdag_of(g)

    def test_collider_data_high_success(self):
        rng = np.random.default_rng(7)
        hits = 0
        trials = 20
        for _ in range(trials):
            scm = sample_scm(COLLIDER, LinearGaussian(), rng)
            data = sample_data(scm, 10_000, rng)
            pred = pc(FisherZTester(data, alpha=0.05), 3)
            hits += shd_cpdag(pred, cpdag_of(COLLIDER)) == 0
        assert hits / trials >= 0.9

    def test_empty_graph_data(self):
        rng = np.random.default_rng(8)
        g = Dag.from_edges(4, [])
        scm = sample_scm(g, LinearGaussian(), rng)
        data = sample_data(scm, 5_000, rng)
        pred = pc(FisherZTester(data, alpha=0.05), 4)
        assert pred.directed == frozenset() and pred.undirected == frozenset()

    def test_majority_variant_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            g = random_dag(rng, 5, 0.4)
            assert pc(DsepOracle(g), 5, majority=True) == cpdag_of(g)
