import numpy as np
import pytest

from causalmec.graphs import (
    Dag,
    Pdag,
    Skeleton,
    VStructure,
    cpdag_of,
    skeleton_of,
    vstructures_of,
)
from causalmec.postproc import (
    ScoredVStructure,
    StructurePrediction,
    extract_candidates,
    indicator_prediction,
    orient_and_break_cycles,
    resolve_conflicts,
    threshold_skeleton,
    to_cpdag,
)
from oracles import all_dags, random_dag


class TestThresholdSkeleton:
    def test_all_zero(self):
        assert threshold_skeleton(np.zeros((4, 4))).n_edges() == 0

    def test_asymmetric_max_rule(self):
        S = np.zeros((2, 2))
        S[0, 1] = 0.9
        S[1, 0] = 0.1
        assert threshold_skeleton(S, 0.5).has_edge(0, 1)

    def test_strict_inequality_at_tau_one(self):
        S = np.ones((3, 3)) - np.eye(3)
        assert threshold_skeleton(S, 1.0).n_edges() == 0


class TestExtractCandidates:
    def test_no_uts_empty(self):
        s = Skeleton.from_edges(3, [(0, 1), (1, 2), (0, 2)])  # triangle
        U = np.full((3, 3, 3), 0.99)
        assert extract_candidates(U, s) == []

    def test_leaf_order_symmetrized_score(self):
        s = Skeleton.from_edges(3, [(0, 1), (1, 2)])
        U = np.zeros((3, 3, 3))
        U[1, 0, 2] = 0.8
        U[1, 2, 0] = 0.6
        cands = extract_candidates(U, s)
        assert len(cands) == 1
        assert cands[0].score == pytest.approx(0.8)
        assert cands[0].vs == VStructure(1, (0, 2))

    def test_shielded_triple_never_emitted(self):
        s = Skeleton.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        U = np.full((3, 3, 3), 0.99)
        assert extract_candidates(U, s, tau_v=0.0) == []


class TestResolveConflicts:
    def test_opposite_orientation_conflict(self):
        # (b; a, c) orients c->b; (c; b, d) orients b->c: shared edge b-c flipped
        a = ScoredVStructure(VStructure(1, (0, 2)), 0.9)
        b = ScoredVStructure(VStructure(2, (1, 3)), 0.6)
        assert resolve_conflicts([a, b]) == [a]

    def test_disjoint_candidates_kept(self):
        a = ScoredVStructure(VStructure(1, (0, 2)), 0.9)
        b = ScoredVStructure(VStructure(4, (3, 5)), 0.2)
        assert resolve_conflicts([a, b]) == [a, b]

    def test_single_candidate(self):
        a = ScoredVStructure(VStructure(1, (0, 2)), 0.51)
        assert resolve_conflicts([a]) == [a]

    def test_loser_still_eliminates_weaker_conflicts(self):
        # chain of conflicts: a beats b, b beats c; c is dropped even though
        # b itself is dropped (quantifier runs over the raw candidate list)
        a = ScoredVStructure(VStructure(1, (0, 2)), 0.9)
        b = ScoredVStructure(VStructure(2, (1, 3)), 0.8)
        c = ScoredVStructure(VStructure(3, (2, 4)), 0.7)
        assert resolve_conflicts([a, b, c]) == [a]

    def test_score_tie_deterministic(self):
        a = ScoredVStructure(VStructure(1, (0, 2)), 0.7)
        b = ScoredVStructure(VStructure(2, (1, 3)), 0.7)
        kept = resolve_conflicts([a, b])
        assert kept == [a]  # lexicographically smaller triple wins
        assert resolve_conflicts([b, a]) == [a]


class TestOrientAndBreakCycles:
    def test_acyclic_unchanged(self):
        kept = [
            ScoredVStructure(VStructure(1, (0, 2)), 0.9),
            ScoredVStructure(VStructure(4, (3, 5)), 0.8),
        ]
        edges = orient_and_break_cycles(kept)
        assert edges == {(0, 1), (2, 1), (3, 4), (5, 4)}

    def test_three_cycle_removes_weakest(self):
        # candidates whose leaf -> center edges contain the cycle 0->1->2->0
        kept = [
            ScoredVStructure(VStructure(1, (0, 3)), 0.9),
            ScoredVStructure(VStructure(2, (1, 4)), 0.8),
            ScoredVStructure(VStructure(0, (2, 5)), 0.7),
        ]
        edges = orient_and_break_cycles(kept)
        # cycle edges scored 0.9 (0->1), 0.8 (1->2), 0.7 (2->0): drop 2->0
        assert (2, 0) not in edges
        assert (0, 1) in edges and (1, 2) in edges

    def test_empty(self):
        assert orient_and_break_cycles([]) == set()


class TestToCpdag:
    def test_perfect_collider_prediction(self):
        g = Dag.from_edges(3, [(0, 1), (2, 1)])
        pred = indicator_prediction(skeleton_of(g), vstructures_of(g))
        assert to_cpdag(pred) == cpdag_of(g)

    def test_perfect_chain_prediction(self):
        g = Dag.from_edges(3, [(0, 1), (1, 2)])
        pred = indicator_prediction(skeleton_of(g), vstructures_of(g))
        p = to_cpdag(pred)
        assert p.directed == frozenset()
        assert p.undirected == frozenset({(0, 1), (1, 2)})

    def test_oracle_soundness_random_dags(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            d = int(rng.integers(2, 9))
            g = random_dag(rng, d, 0.35)
            pred = indicator_prediction(skeleton_of(g), vstructures_of(g))
            assert to_cpdag(pred) == cpdag_of(g)

    def test_idempotence_exhaustive_small(self):
        # all labeled DAGs with d <= 5
        for d in range(1, 6):
            for g in all_dags(d):
                pred = indicator_prediction(skeleton_of(g), vstructures_of(g))
                assert to_cpdag(pred) == cpdag_of(g)

    def test_adjacency_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            d = 6
            S = rng.random((d, d))
            U = rng.random((d, d, d))
            pred = StructurePrediction(S, U)
            p = to_cpdag(pred)
            assert p.skeleton() == threshold_skeleton(S)

    def test_directed_part_always_acyclic(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = 6
            pred = StructurePrediction(rng.random((d, d)), rng.random((d, d, d)))
            p = to_cpdag(pred)  # Pdag construction itself validates acyclicity
            assert isinstance(p, Pdag)

    def test_diagnostics_counters(self):
        rng = np.random.default_rng(3)
        diag: dict = {}
        pred = StructurePrediction(rng.random((6, 6)), rng.random((6, 6, 6)))
        to_cpdag(pred, diagnostics=diag)
        assert {"candidates", "conflicts_dropped", "cycle_edges_removed",
                "meek_demotions"} <= set(diag)

    def test_opposite_priority_runs(self):
        rng = np.random.default_rng(4)
        pred = StructurePrediction(rng.random((6, 6)), rng.random((6, 6, 6)))
        a = to_cpdag(pred)
        b = to_cpdag(pred, keep_lower_score_on_conflict=True)
        assert a.skeleton() == b.skeleton()


class TestStructurePrediction:
    def test_rejects_out_of_range(self):
        with pytest.raises(Exception):
            StructurePrediction(np.full((3, 3), 1.5), np.zeros((3, 3, 3)))

    def test_rejects_bad_shape(self):
        with pytest.raises(Exception):
            StructurePrediction(np.zeros((3, 3)), np.zeros((3, 3, 2)))
