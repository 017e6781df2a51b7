"""ROC counting kernels.

The tie-grouped cumulative TP/FP sweep is the hot inner loop of the
evaluation protocol (100 resamplings x splits x horizons x models), so it has
a numba-compiled kernel and a pure-numpy fallback. Set PHD_DISABLE_NUMBA=1 to
force the numpy path; both produce identical integer count arrays.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("PHD_DISABLE_NUMBA", "").strip() not in ("", "0", "false")

if not _DISABLE:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        _DISABLE = True


def roc_counts_numpy(labels_sorted: np.ndarray, scores_sorted: np.ndarray):
    """Cumulative (fps, tps) at each distinct threshold, descending scores,
    with a leading (0, 0) point. Pure-numpy path."""
    n = labels_sorted.shape[0]
    distinct = np.flatnonzero(np.diff(scores_sorted))
    idx = np.concatenate([distinct, [n - 1]])
    tps = np.cumsum(labels_sorted)[idx]
    fps = (idx + 1) - tps
    return (np.concatenate([[0], fps]).astype(np.int64),
            np.concatenate([[0], tps]).astype(np.int64))


if not _DISABLE:
    @njit(cache=True)
    def _roc_counts_jit(labels_sorted, scores_sorted):  # pragma: no cover - jitted
        n = labels_sorted.shape[0]
        fps = np.empty(n + 1, np.int64)
        tps = np.empty(n + 1, np.int64)
        fps[0] = 0
        tps[0] = 0
        m = 1
        tp = 0
        fp = 0
        for i in range(n):
            if labels_sorted[i] == 1:
                tp += 1
            else:
                fp += 1
            if i == n - 1 or scores_sorted[i + 1] != scores_sorted[i]:
                fps[m] = fp
                tps[m] = tp
                m += 1
        return fps[:m], tps[:m]

    def roc_counts_numba(labels_sorted: np.ndarray, scores_sorted: np.ndarray):
        return _roc_counts_jit(np.ascontiguousarray(labels_sorted, dtype=np.int64),
                               np.ascontiguousarray(scores_sorted, dtype=np.float64))
else:
    roc_counts_numba = None


def numba_enabled() -> bool:
    return roc_counts_numba is not None


def roc_counts(labels_sorted: np.ndarray, scores_sorted: np.ndarray):
    """Dispatch to the active backend."""
    if roc_counts_numba is not None:
        return roc_counts_numba(labels_sorted, scores_sorted)
    return roc_counts_numpy(labels_sorted, scores_sorted)
