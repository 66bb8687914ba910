"""Ordinal attribution: one-hot question/answer features regressed on a ranking
with the all-thresholds logistic loss."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .domain import CohortDataset

NORMALIZATIONS = ("max-abs", "l2", "none")


@dataclass(frozen=True)
class FeatureMatrix:
    feature_names: tuple[str, ...]
    item_ids: tuple[str, ...]
    rows: np.ndarray
    blocks: tuple[tuple[str, int, int], ...] = ()  # (question_id, start, stop)


def encode_features(dataset: CohortDataset) -> FeatureMatrix:
    """One-hot encode every (question, observed answer) pair.

    Columns follow schema order, then answers sorted lexicographically.
    """
    names: list[str] = []
    blocks = []
    col_of: dict[tuple[str, str], int] = {}
    for q_pos, qid in enumerate(dataset.schema):
        vocab = sorted({item.answers[q_pos].answer for item in dataset.items})
        start = len(names)
        for ans in vocab:
            col_of[(qid, ans)] = len(names)
            names.append(f"{qid} = {ans}")
        blocks.append((qid, start, len(names)))
    rows = np.zeros((len(dataset.items), len(names)))
    for r, item in enumerate(dataset.items):
        for qa in item.answers:
            rows[r, col_of[(qa.question_id, qa.answer)]] = 1.0
    return FeatureMatrix(tuple(names), dataset.item_ids, rows, tuple(blocks))


@dataclass(frozen=True)
class AttributionModel:
    feature_names: tuple[str, ...]
    coefficients: np.ndarray
    thresholds: np.ndarray
    l2_coefficient: float
    normalized_coefficients: np.ndarray
    normalization: str = "max-abs"
    converged: bool = True
    iterations: int = 0
    gradient_norm: float = 0.0
    loss: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "coefficient", "normalized_coefficient"])
        for name, c, nc in zip(self.feature_names, self.coefficients, self.normalized_coefficients):
            w.writerow([name, repr(float(c)), repr(float(nc))])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_names": list(self.feature_names),
            "coefficients": self.coefficients.tolist(),
            "thresholds": self.thresholds.tolist(),
            "l2_coefficient": self.l2_coefficient,
            "normalization": self.normalization,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "loss": self.loss,
        }


def normalize_coefficients(w: np.ndarray, how: str = "max-abs") -> np.ndarray:
    if how not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if how == "none":
        return w.copy()
    scale = np.abs(w).max() if how == "max-abs" else np.linalg.norm(w)
    return w / scale if scale > 0 else w.copy()


def rank_levels(n_items: int, positions: np.ndarray, bins: int | None = None) -> np.ndarray:
    """Ordinal level from 0-based rank position (0 = top); the top item gets the highest level."""
    levels = (n_items - 1 - positions).astype(np.int64)
    if bins is not None:
        if bins < 2:
            raise ValueError("bins must be at least 2")
        levels = (levels * bins) // n_items
    return levels


def ordinal_objective(
    params: np.ndarray, X: np.ndarray, levels: np.ndarray, n_thresholds: int, l2: float
) -> tuple[float, np.ndarray]:
    """All-thresholds loss plus ``l2/2 * ||w||^2``, and its gradient in ``(w, b)``."""
    d = X.shape[1]
    w, b = params[:d], params[d:d + n_thresholds]
    loss, g_s, g_b = kernels.all_thresholds(X @ w, levels, b)
    grad = np.concatenate([X.T @ g_s + l2 * w, g_b])
    return loss + 0.5 * l2 * float(w @ w), grad


def ordinal_hessian(params: np.ndarray, X: np.ndarray, levels: np.ndarray, n_thresholds: int, l2: float) -> np.ndarray:
    """Exact Hessian of :func:`ordinal_objective` (each softplus term has curvature s(1 - s))."""
    d = X.shape[1]
    w, b = params[:d], params[d:d + n_thresholds]
    z = (X @ w)[:, None] - b[None, :]
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    h = sig * (1.0 - sig)
    H = np.empty((d + n_thresholds, d + n_thresholds))
    H[:d, :d] = (X * h.sum(axis=1)[:, None]).T @ X + l2 * np.eye(d)
    H[:d, d:] = -X.T @ h
    H[d:, :d] = H[:d, d:].T
    H[d:, d:] = np.diag(h.sum(axis=0))
    return H


def fit_ordinal(
    X: FeatureMatrix,
    ranks: Sequence[str],
    l2: float = 1.0,
    *,
    bins: int | None = None,
    normalization: str = "max-abs",
    max_iterations: int = 1000,
    gtol: float = 1e-6,
    initial: np.ndarray | None = None,
) -> AttributionModel:
    """Fit the regularized all-thresholds model to a strict ranking (best first).

    Newton trust-region steps on the exact Hessian, starting from zero unless
    ``initial`` is given, stopping at gradient norm ``gtol``. Non-convergence
    is reported on the model rather than raised.
    """
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    ranks = list(ranks)
    if sorted(ranks) != sorted(X.item_ids) or len(set(ranks)) != len(ranks):
        raise ValueError("ranks must be a permutation of the encoded items")
    n, d = X.rows.shape
    position = {item: k for k, item in enumerate(ranks)}
    positions = np.array([position[item] for item in X.item_ids])
    levels = rank_levels(n, positions, bins)
    n_levels = int(levels.max()) + 1
    t = n_levels - 1
    x0 = np.zeros(d + t) if initial is None else np.asarray(initial, dtype=float).copy()
    res = minimize(
        ordinal_objective,
        x0,
        args=(X.rows, levels, t, l2),
        jac=True,
        hess=ordinal_hessian,
        method="trust-exact",
        options={"maxiter": max_iterations, "gtol": gtol},
    )
    x = res.x
    _, grad = ordinal_objective(x, X.rows, levels, t, l2)
    gnorm = float(np.abs(grad).max()) if grad.size else 0.0
    # near the optimum the trust region can stall on loss round-off; plain Newton steps finish the job
    for _ in range(5):
        if gnorm <= gtol:
            break
        try:
            step = np.linalg.solve(ordinal_hessian(x, X.rows, levels, t, l2), grad)
        except np.linalg.LinAlgError:
            break
        _, g_new = ordinal_objective(x - step, X.rows, levels, t, l2)
        g_norm_new = float(np.abs(g_new).max())
        if not g_norm_new < gnorm:
            break
        x, grad, gnorm = x - step, g_new, g_norm_new
    w, b = x[:d], x[d:]
    return AttributionModel(
        feature_names=X.feature_names,
        coefficients=w,
        thresholds=np.maximum.accumulate(b) if b.size else b,
        l2_coefficient=float(l2),
        normalized_coefficients=normalize_coefficients(w, normalization),
        normalization=normalization,
        converged=gnorm <= gtol,
        iterations=int(res.nit),
        gradient_norm=gnorm,
        loss=float(ordinal_objective(x, X.rows, levels, t, l2)[0]),
    )


def top_features(model: AttributionModel, k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be at least 1")
    pairs = list(zip(model.feature_names, (float(c) for c in model.normalized_coefficients)))
    pairs.sort(key=lambda fc: (-abs(fc[1]), fc[0]))
    return pairs[:k]


@dataclass(frozen=True)
class AttributionOverlap:
    k: int
    overlap: int
    shared: list[dict[str, Any]] = field(default_factory=list)

    @property
    def polarity_disagreements(self) -> list[str]:
        return [s["feature"] for s in self.shared if not s["signs_agree"]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "overlap": self.overlap,
            "shared": self.shared,
            "polarity_disagreements": self.polarity_disagreements,
        }


def compare_attributions(a: AttributionModel, b: AttributionModel, k: int = 5) -> AttributionOverlap:
    if a.feature_names != b.feature_names:
        raise ValueError("attribution models use different feature spaces")
    top_a = dict(top_features(a, k))
    top_b = dict(top_features(b, k))
    shared = []
    for name in sorted(set(top_a) & set(top_b)):
        ca, cb = top_a[name], top_b[name]
        shared.append(
            {"feature": name, "coefficient_a": ca, "coefficient_b": cb, "signs_agree": bool(np.sign(ca) == np.sign(cb))}
        )
    return AttributionOverlap(k, len(shared), shared)
