"""Evaluation metrics for skeleton and CPDAG predictions.

All F1-style scores are reported on a 0-100 scale. Degenerate cases (no
positive instances in the truth) follow fixed conventions and are flagged
where the return type allows it.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .graphs import Pdag, Skeleton

__all__ = [
    "skeleton_metrics",
    "vstructure_f1",
    "orientation_f1",
    "shd_cpdag",
    "evaluate_cpdag",
]


def _f1_from_sets(pred: set, truth: set) -> tuple[float, bool]:
    """(f1 on 0-100 scale, degenerate flag)."""
    if not truth:
        return (100.0 if not pred else 0.0), True
    tp = len(pred & truth)
    if not pred:
        return 0.0, False
    precision = tp / len(pred)
    recall = tp / len(truth)
    if precision + recall == 0:
        return 0.0, False
    return 100.0 * 2 * precision * recall / (precision + recall), False


def _binary_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC-AUC via the rank statistic (exact result of a full threshold sweep)."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    # average ranks over ties
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    npos = int(labels.sum())
    nneg = labels.size - npos
    auc = (ranks[labels].sum() - npos * (npos + 1) / 2.0) / (npos * nneg)
    return 100.0 * float(auc)


def _average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall sweep (step interpolation at tied scores)."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    npos = int(labels.sum())
    ap = 0.0
    tp = 0
    seen = 0
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        group_tp = int(sorted_labels[i : j + 1].sum())
        tp += group_tp
        seen = j + 1
        if group_tp:
            precision = tp / seen
            ap += precision * (group_tp / npos)
        i = j + 1
    return 100.0 * ap


def skeleton_metrics(pred, truth: Skeleton) -> dict:
    """Classification metrics over the d(d-1)/2 unordered variable pairs.

    ``pred`` is either a Skeleton or a [0,1] probability matrix; probability
    matrices are symmetrized by elementwise max and additionally scored with
    AUC / AUPRC. Thresholding for F1/accuracy uses 0.5.
    """
    d = truth.d
    iu = np.triu_indices(d, 1)
    labels = truth.und[iu]

    probabilistic = not isinstance(pred, Skeleton)
    if probabilistic:
        mat = np.asarray(pred, dtype=float)
        if mat.shape != (d, d):
            raise InvalidInputError(f"prediction shape {mat.shape} != ({d},{d})")
        if mat.min() < 0 or mat.max() > 1:
            raise InvalidInputError("probability matrix entries must lie in [0,1]")
        sym = np.maximum(mat, mat.T)
        scores = sym[iu]
        hard = scores > 0.5
    else:
        if pred.d != d:
            raise InvalidInputError("prediction and truth dimension mismatch")
        hard = pred.und[iu]
        scores = None

    npos = int(labels.sum())
    tp = int((hard & labels).sum())
    fp = int((hard & ~labels).sum())
    fn = int((~hard & labels).sum())
    degenerate = npos == 0
    if degenerate:
        f1 = 100.0 if not hard.any() else 0.0
    elif tp == 0:
        f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 100.0 * 2 * precision * recall / (precision + recall)
    accuracy = 100.0 * float((hard == labels).mean()) if labels.size else 100.0

    out = {"f1": f1, "accuracy": accuracy, "degenerate": degenerate}
    if probabilistic:
        if degenerate or npos == labels.size:
            out["auc"] = None
            out["auprc"] = None
        else:
            out["auc"] = _binary_auc(scores, labels)
            out["auprc"] = _average_precision(scores, labels)
    return out


def _vstructure_set(p: Pdag) -> set[tuple[int, int, int]]:
    return {(vs.center, *vs.leaves) for vs in p.vstructures()}


def vstructure_f1(pred_cpdag: Pdag, truth_cpdag: Pdag) -> float:
    """F1 between the v-structure sets of two partially directed graphs."""
    if pred_cpdag.d != truth_cpdag.d:
        raise InvalidInputError("dimension mismatch")
    f1, _ = _f1_from_sets(_vstructure_set(pred_cpdag), _vstructure_set(truth_cpdag))
    return f1


def orientation_f1(pred_cpdag: Pdag, truth_cpdag: Pdag) -> float:
    """F1 between the ordered directed-edge sets of two partially directed graphs."""
    if pred_cpdag.d != truth_cpdag.d:
        raise InvalidInputError("dimension mismatch")
    f1, _ = _f1_from_sets(set(pred_cpdag.directed), set(truth_cpdag.directed))
    return f1


def shd_cpdag(pred: Pdag, truth: Pdag) -> int:
    """Structural Hamming distance between two CPDAGs.

    One unit per unordered pair whose adjacency status differs, or whose edge
    mark differs when both are adjacent (undirected vs directed, or opposite
    directions).
    """
    if pred.d != truth.d:
        raise InvalidInputError("dimension mismatch")

    def mark(p: Pdag, i: int, j: int) -> str:
        if (i, j) in p.directed:
            return ">"
        if (j, i) in p.directed:
            return "<"
        if (min(i, j), max(i, j)) in p.undirected:
            return "-"
        return ""

    dist = 0
    for i in range(pred.d):
        for j in range(i + 1, pred.d):
            if mark(pred, i, j) != mark(truth, i, j):
                dist += 1
    return dist


def evaluate_cpdag(pred: Pdag, truth_dag_cpdag: Pdag) -> dict:
    """Bundle of CPDAG-prediction metrics used by the batch evaluator."""
    skel_pred = pred.skeleton()
    skel_truth = truth_dag_cpdag.skeleton()
    skel = skeleton_metrics(skel_pred, skel_truth)
    return {
        "s_f1": skel["f1"],
        "s_accuracy": skel["accuracy"],
        "v_f1": vstructure_f1(pred, truth_dag_cpdag),
        "o_f1": orientation_f1(pred, truth_dag_cpdag),
        "shd": shd_cpdag(pred, truth_dag_cpdag),
    }
