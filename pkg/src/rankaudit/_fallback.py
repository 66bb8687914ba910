"""Pure numpy implementations of the numeric kernels."""

from __future__ import annotations

import numpy as np


def power_iteration(P: np.ndarray, tol: float, max_iterations: int) -> tuple[np.ndarray, bool, int]:
    n = P.shape[0]
    cur = np.full(n, 1.0 / n)
    for it in range(1, max_iterations + 1):
        nxt = cur @ P
        nxt /= nxt.sum()
        diff = np.abs(nxt - cur).sum()
        cur = nxt
        if diff < tol:
            return cur, True, it
    return cur, False, max_iterations


def all_thresholds(
    scores: np.ndarray, levels: np.ndarray, thresholds: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    z = scores[:, None] - thresholds[None, :]
    below = np.arange(thresholds.shape[0])[None, :] < levels[:, None]
    # margin > 0 means the threshold is on the correct side
    margin = np.where(below, z, -z)
    loss = np.logaddexp(0.0, -margin).sum()
    g = np.exp(-np.logaddexp(0.0, margin))  # sigmoid(-margin)
    dz = np.where(below, -g, g)
    return float(loss), dz.sum(axis=1), -dz.sum(axis=0)


def midranks(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    avg = 0.5 * (starts + ends - 1) + 1.0
    out = np.empty(n)
    out[order] = np.repeat(avg, ends - starts)
    return out
