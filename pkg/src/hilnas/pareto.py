"""Two-objective Pareto utilities (both objectives minimized)."""

from __future__ import annotations

import numpy as np


def pareto_front(points) -> list[int]:
    """Indices of the non-dominated rows of ``points`` (n x 2), ordered by the
    second objective, then the first, then index.

    ``a`` dominates ``b`` when it is no worse in both objectives and strictly
    better in one; exact duplicates therefore never dominate each other.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(P) == 0:
        return []
    order = np.lexsort((np.arange(len(P)), P[:, 0], P[:, 1]))
    front = []
    best_q = np.inf  # best first objective among strictly smaller second objective
    i = 0
    while i < len(order):
        j = i
        lat = P[order[i], 1]
        while j < len(order) and P[order[j], 1] == lat:
            j += 1
        group = order[i:j]
        qmin = P[group, 0].min()
        if qmin < best_q:
            front.extend(int(g) for g in group if P[g, 0] == qmin)
            best_q = qmin
        i = j
    return front


def dominated_mask(points) -> np.ndarray:
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    mask = np.ones(len(P), dtype=bool)
    mask[pareto_front(P)] = False
    return mask


def _staircase(front: np.ndarray, ref) -> tuple[np.ndarray, np.ndarray]:
    """Sorted non-dominated points strictly inside ``ref``: (xs ascending, ys descending)."""
    ref = np.asarray(ref, dtype=float)
    F = np.asarray(front, dtype=float).reshape(-1, 2)
    F = F[(F[:, 0] < ref[0]) & (F[:, 1] < ref[1])]
    if len(F) == 0:
        return np.empty(0), np.empty(0)
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    keep = F[:, 1] < np.minimum.accumulate(np.concatenate([[np.inf], F[:-1, 1]]))
    F = F[keep]
    return F[:, 0], F[:, 1]


def hypervolume_2d(points, ref) -> float:
    """Area dominated by ``points`` and bounded by ``ref`` (points not strictly
    better than ``ref`` in both objectives contribute nothing)."""
    xs, ys = _staircase(points, ref)
    if xs.size == 0:
        return 0.0
    ref = np.asarray(ref, dtype=float)
    right = np.append(xs[1:], ref[0])
    return float(np.sum((right - xs) * (ref[1] - ys)))


def hv_improvement(front, candidates, ref) -> np.ndarray:
    """Exclusive hypervolume each candidate row would add to ``front``.

    Vectorized over candidates: integrates ``max(0, h(x) - y_c)`` for
    ``x`` in ``[x_c, ref_x]``, where ``h`` is the staircase of the front.
    """
    ref = np.asarray(ref, dtype=float)
    C = np.asarray(candidates, dtype=float).reshape(-1, 2)
    xs, ys = _staircase(front, ref)
    left = np.concatenate([[-np.inf], xs])
    right = np.concatenate([xs, [ref[0]]])
    height = np.concatenate([[ref[1]], ys])
    width = np.clip(np.minimum(right[None, :], ref[0]) - np.maximum(left[None, :], C[:, :1]), 0.0, None)
    depth = np.clip(height[None, :] - C[:, 1:], 0.0, None)
    return np.sum(width * depth, axis=1)
