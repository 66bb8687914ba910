"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``RANKAUDIT_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("RANKAUDIT_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def power_iteration(P, tol: float, max_iterations: int) -> tuple[np.ndarray, bool, int]:
    """Iterate ``pi <- pi @ P`` from the uniform vector until the L1 step is below ``tol``."""
    P = np.ascontiguousarray(P, dtype=np.float64)
    return _impl.power_iteration(P, float(tol), int(max_iterations))


def all_thresholds(scores, levels, thresholds) -> tuple[float, np.ndarray, np.ndarray]:
    """All-thresholds logistic loss with gradients w.r.t. scores and thresholds."""
    return _impl.all_thresholds(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(levels, dtype=np.int64),
        np.ascontiguousarray(thresholds, dtype=np.float64),
    )


def midranks(x) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    return _impl.midranks(np.ascontiguousarray(x, dtype=np.float64))
