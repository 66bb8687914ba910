"""Outcome scores, Spearman correlation with Bonett-Wright intervals, tie-break
stability, and ROC AUC with DeLong intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.stats import norm

from . import kernels
from .domain import InfoCondition


class StatsError(ValueError):
    pass


def outcome_score(n_outcome: int, n_vulnerability: int) -> int:
    """Ceiling of the outcome-oriented percentage; integer arithmetic, so exact."""
    if n_outcome < 0 or n_vulnerability < 0:
        raise StatsError("counts must be nonnegative")
    total = n_outcome + n_vulnerability
    if total < 1:
        raise StatsError("outcome score needs at least one oriented decision")
    return -(-100 * n_outcome // total)


@dataclass(frozen=True)
class OutcomeScoreRecord:
    pair_id: str
    condition: InfoCondition
    n_outcome: int
    n_vulnerability: int
    n_indeterminate: int
    score: int | None

    @classmethod
    def from_counts(
        cls, pair_id: str, condition: InfoCondition | str, n_outcome: int, n_vulnerability: int, n_indeterminate: int = 0
    ) -> "OutcomeScoreRecord":
        score = outcome_score(n_outcome, n_vulnerability) if n_outcome + n_vulnerability > 0 else None
        return cls(pair_id, InfoCondition(condition), n_outcome, n_vulnerability, n_indeterminate, score)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "condition": self.condition.value,
            "n_outcome": self.n_outcome,
            "n_vulnerability": self.n_vulnerability,
            "n_indeterminate": self.n_indeterminate,
            "score": self.score,
        }


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    n: int
    ci_low: float
    ci_high: float
    level: float = 0.95

    def to_dict(self) -> dict[str, Any]:
        return {"rho": self.rho, "n": self.n, "ci_low": self.ci_low, "ci_high": self.ci_high, "level": self.level}


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError("inputs must be 1-d vectors of equal length")
    if x.shape[0] < 3:
        raise StatsError("need at least 3 observations")
    rx = kernels.midranks(x)
    ry = kernels.midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sx, sy = np.dot(rx, rx), np.dot(ry, ry)
    if sx == 0 or sy == 0:
        raise StatsError("zero rank variance")
    rho = float(np.dot(rx, ry) / math.sqrt(sx * sy))
    return min(1.0, max(-1.0, rho))


def spearman_ci(rho: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Fisher-z interval with the Bonett-Wright standard error sqrt((1 + rho^2/2) / (n - 3))."""
    if n < 4:
        raise StatsError("need n >= 4 for a Spearman interval")
    if abs(rho) >= 1:
        return (float(rho), float(rho))
    z = math.atanh(rho)
    se = math.sqrt((1 + rho * rho / 2) / (n - 3))
    q = norm.ppf(0.5 + level / 2)
    return (math.tanh(z - q * se), math.tanh(z + q * se))


def spearman_report(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> CorrelationReport:
    rho = spearman_rho(x, y)
    n = len(x)
    lo, hi = spearman_ci(rho, n, level) if n >= 4 else (rho, rho)
    return CorrelationReport(rho, n, lo, hi, level)


@dataclass(frozen=True)
class TieBreakReport:
    variants: int
    min_pairwise_rho: float
    rho_matrix: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "variants": self.variants,
            "min_pairwise_rho": self.min_pairwise_rho,
            "rho_matrix": self.rho_matrix.tolist(),
        }


def tie_break_variants(scores: Sequence[float], k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` strict rank vectors (1 = lowest score), each tie group permuted uniformly."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    out = np.empty((k, n))
    for v in range(k):
        order = np.lexsort((rng.random(n), scores))
        ranks = np.empty(n)
        ranks[order] = np.arange(1, n + 1)
        out[v] = ranks
    return out


def tie_break_stability(scores: Sequence[float], k: int = 10, rng: np.random.Generator | None = None) -> TieBreakReport:
    if k < 2:
        raise StatsError("need at least 2 variants")
    rng = rng if rng is not None else np.random.default_rng()
    variants = tie_break_variants(scores, k, rng)
    n = variants.shape[1]
    # strict ranks of 1..n: Pearson on ranks reduces to the no-ties formula
    centred = variants - (n + 1) / 2
    denom = n * (n * n - 1) / 12
    mat = centred @ centred.T / denom
    np.fill_diagonal(mat, 1.0)
    off = mat[~np.eye(k, dtype=bool)]
    return TieBreakReport(k, float(off.min()), mat)


def tie_break_lower_bound(scores: Sequence[float]) -> float:
    """Worst case: every tie group fully reversed between two variants."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    _, counts = np.unique(scores, return_counts=True)
    g = counts.astype(float)
    return 1.0 - 2.0 * float((g * (g * g - 1)).sum()) / (n * (n * n - 1))


@dataclass(frozen=True)
class AucReport:
    auc: float
    n_positive: int
    n_negative: int
    ci_low: float
    ci_high: float
    variance: float = 0.0
    level: float = 0.95

    def to_dict(self) -> dict[str, Any]:
        return {
            "auc": self.auc,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "variance": self.variance,
            "level": self.level,
        }


def roc_auc(scores: Sequence[float], labels: Sequence[bool], level: float = 0.95) -> AucReport:
    """Mann-Whitney AUC (ties count one half) with a DeLong normal interval.

    Structural components come from midranks: for a positive ``x``,
    ``V10 = (R_all(x) - R_pos(x)) / n_neg``; for a negative ``y``,
    ``V01 = 1 - (R_all(y) - R_neg(y)) / n_pos``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise StatsError("scores and labels must be 1-d and aligned")
    pos, neg = scores[labels], scores[~labels]
    m, n = pos.shape[0], neg.shape[0]
    if m < 1 or n < 1:
        raise StatsError("need at least one positive and one negative label")
    r_all = kernels.midranks(np.concatenate([pos, neg]))
    v10 = (r_all[:m] - kernels.midranks(pos)) / n
    v01 = 1.0 - (r_all[m:] - kernels.midranks(neg)) / m
    # rank sums of midranks are exact multiples of 1/2, so this matches pair counting bit for bit
    auc = float((r_all[:m].sum() - m * (m + 1) / 2) / (m * n))
    var = 0.0
    if m > 1:
        var += float(v10.var(ddof=1)) / m
    if n > 1:
        var += float(v01.var(ddof=1)) / n
    q = norm.ppf(0.5 + level / 2)
    half = q * math.sqrt(var)
    return AucReport(auc, m, n, max(0.0, auc - half), min(1.0, auc + half), var, level)
