"""Conditional independence tests.

Continuous data uses the Fisher-Z transform of the partial correlation,
discrete data the G-squared likelihood ratio, and an exact graph oracle
realizes the infinite-sample regime. Testers are stateless over read-only
data; full-matrix statistics are precomputed once per tester.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateDataError, InvalidInputError, SampleSizeError
from .graphs import Dag, d_separated
from .scm import DataSample

__all__ = [
    "CiResult",
    "fisher_z",
    "g_square",
    "partial_correlation",
    "partial_correlation_recursive",
    "FisherZTester",
    "GSquareTester",
    "DsepOracle",
    "tester_for",
]

RIDGE = 1e-10


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    independent: bool
    flags: tuple[str, ...] = ()


def _schur_conditional(cov: np.ndarray) -> np.ndarray:
    """2x2 covariance of the first two coordinates given the rest."""
    if cov.shape[0] == 2:
        return cov
    czz = cov[2:, 2:]
    cxz = cov[:2, 2:]
    try:
        solve = np.linalg.solve(czz, cxz.T)
    except np.linalg.LinAlgError:
        solve = None
    if solve is None or not np.isfinite(solve).all():
        czz = czz + RIDGE * np.eye(czz.shape[0])
        try:
            solve = np.linalg.solve(czz, cxz.T)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDataError("singular conditioning covariance") from exc
        if not np.isfinite(solve).all():
            raise DegenerateDataError("singular conditioning covariance")
    out = cov[:2, :2] - cxz @ solve
    return 0.5 * (out + out.T)


def partial_correlation(cov: np.ndarray, i: int, j: int, z: tuple[int, ...]) -> float:
    """Partial correlation of variables i, j given z, from a covariance matrix.

    Uses the Schur complement of the conditioning block (equivalently the
    precision matrix of the restricted covariance), with a small ridge on
    near-singular conditioning blocks.
    """
    idx = [i, j, *z]
    sub = cov[np.ix_(idx, idx)]
    cond = _schur_conditional(sub)
    denom = cond[0, 0] * cond[1, 1]
    if denom <= 0:
        raise DegenerateDataError("zero conditional variance")
    return float(cond[0, 1] / math.sqrt(denom))


def partial_correlation_recursive(corr: np.ndarray, i: int, j: int,
                                  z: tuple[int, ...]) -> float:
    """Classic one-variable-at-a-time recursion; reference implementation."""
    if not z:
        return float(corr[i, j])
    k, rest = z[0], tuple(z[1:])
    rij = partial_correlation_recursive(corr, i, j, rest)
    rik = partial_correlation_recursive(corr, i, k, rest)
    rjk = partial_correlation_recursive(corr, j, k, rest)
    denom = math.sqrt((1.0 - rik * rik) * (1.0 - rjk * rjk))
    if denom == 0:
        raise DegenerateDataError("degenerate recursion denominator")
    return (rij - rik * rjk) / denom


def fisher_z(data: DataSample, i: int, j: int, z=(), alpha: float = 0.05) -> CiResult:
    """Fisher-Z test of partial correlation for continuous data."""
    if data.kind != "continuous":
        raise InvalidInputError("fisher_z requires continuous data")
    return FisherZTester(data, alpha).test(i, j, z)


def g_square(data: DataSample, i: int, j: int, z=(), alpha: float = 0.05) -> CiResult:
    """G-squared likelihood-ratio test of conditional independence for discrete data."""
    if data.kind != "discrete":
        raise InvalidInputError("g_square requires discrete data")
    return GSquareTester(data, alpha).test(i, j, z)


class FisherZTester:
    """Shares one covariance matrix across all pair/set queries."""

    def __init__(self, data: DataSample, alpha: float = 0.05):
        if data.kind != "continuous":
            raise InvalidInputError("FisherZTester requires continuous data")
        self.alpha = float(alpha)
        self.n = data.n
        self.d = data.d
        stds = data.values.std(axis=0)
        if (stds == 0).any():
            raise DegenerateDataError("constant column in data")
        self.cov = np.cov(data.values, rowvar=False)
        if self.cov.ndim == 0:
            self.cov = self.cov.reshape(1, 1)

    def test(self, i: int, j: int, z=(), alpha: float | None = None) -> CiResult:
        alpha = self.alpha if alpha is None else alpha
        if i > j:
            i, j = j, i  # statistic is symmetric; canonicalize for bit-equality
        zt = tuple(sorted(int(v) for v in z))
        if i == j or i in zt or j in zt:
            raise InvalidInputError("tested pair must be distinct and outside z")
        if not all(0 <= v < self.d for v in (i, j, *zt)):
            raise InvalidInputError("vertex index out of range")
        if self.n <= len(zt) + 3:
            raise SampleSizeError(f"need n > |z| + 3, got n={self.n}, |z|={len(zt)}")
        r = partial_correlation(self.cov, i, j, zt)
        r = min(1.0 - 1e-15, max(-1.0 + 1e-15, r))
        stat = math.sqrt(self.n - len(zt) - 3) * 0.5 * math.log((1.0 + r) / (1.0 - r))
        p = math.erfc(abs(stat) / math.sqrt(2.0))
        return CiResult(stat, p, p > alpha)


class GSquareTester:
    def __init__(self, data: DataSample, alpha: float = 0.05):
        if data.kind != "discrete":
            raise InvalidInputError("GSquareTester requires discrete data")
        self.alpha = float(alpha)
        self.values = data.values
        self.arities = data.arities
        self.n = data.n
        self.d = data.d

    def test(self, i: int, j: int, z=(), alpha: float | None = None) -> CiResult:
        alpha = self.alpha if alpha is None else alpha
        zt = tuple(sorted(int(v) for v in z))
        if i == j or i in zt or j in zt:
            raise InvalidInputError("tested pair must be distinct and outside z")
        ri, rj = self.arities[i], self.arities[j]
        if ri < 2 or rj < 2:
            raise InvalidInputError("tested variables need arity >= 2")

        # stratify observations by the joint configuration of z
        if zt:
            strata = np.zeros(self.n, dtype=np.int64)
            for v in zt:
                strata = strata * self.arities[v] + self.values[:, v]
        else:
            strata = np.zeros(self.n, dtype=np.int64)
        n_strata_total = int(np.prod([self.arities[v] for v in zt])) if zt else 1

        xi = self.values[:, i]
        xj = self.values[:, j]
        joint = (strata * ri + xi) * rj + xj
        counts = np.bincount(joint, minlength=n_strata_total * ri * rj).astype(float)
        counts = counts.reshape(n_strata_total, ri, rj)

        stat = 0.0
        nonempty = 0
        for s in range(n_strata_total):
            cell = counts[s]
            total = cell.sum()
            if total == 0:
                continue  # empty stratum: skipped, df adjusted below
            nonempty += 1
            row = cell.sum(axis=1, keepdims=True)
            col = cell.sum(axis=0, keepdims=True)
            expected = row * col / total
            mask = cell > 0
            stat += 2.0 * float((cell[mask] * np.log(cell[mask] / expected[mask])).sum())

        df = (ri - 1) * (rj - 1) * nonempty
        if df < 1:
            raise DegenerateDataError("no degrees of freedom for the test")
        flags: tuple[str, ...] = ()
        if self.n < 5 * df:
            flags = ("low_power",)
        p = float(stats.chi2.sf(stat, df))
        return CiResult(stat, p, p > alpha, flags)


class DsepOracle:
    """CI tester answering from graph d-separation: the sufficient-samples regime."""

    def __init__(self, g: Dag, alpha: float = 0.05):
        self.g = g
        self.d = g.d
        self.alpha = alpha

    def test(self, i: int, j: int, z=(), alpha: float | None = None) -> CiResult:
        sep = d_separated(self.g, i, j, z)
        if sep:
            return CiResult(0.0, 1.0, True)
        return CiResult(math.inf, 0.0, False)


def tester_for(data: DataSample, alpha: float = 0.05):
    """The default finite-sample tester for a data sample's dtype."""
    if data.kind == "continuous":
        return FisherZTester(data, alpha)
    return GSquareTester(data, alpha)
