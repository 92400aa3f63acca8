"""Bipartite matching of predicted to annotated segments, and the matching loss.

These are plain evaluable functions (no gradients) so an external trainer or
the evaluation harness can score a set of predictions against annotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidCost, InvalidParams
from .geometry import LineSegment3

PROB_EPS = 1e-12


@dataclass(frozen=True)
class Matching:
    pairs: list[tuple[int, int]]  # (prediction index, ground-truth index), sorted by prediction
    cost: float


@dataclass(frozen=True)
class LossWeights:
    match_l1: float = 1.0
    match_class: float = 1.0
    loss_l1: float = 1.0
    loss_class: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    endpoint_l1: float
    classification: float
    total: float
    weights: LossWeights = field(default_factory=LossWeights)


def _check_costs(costs) -> np.ndarray:
    C = np.asarray(costs, dtype=float)
    if C.ndim != 2 or min(C.shape) < 1:
        raise InvalidCost(f"cost matrix must be 2-D and non-empty, got shape {C.shape}")
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise InvalidCost("costs must be finite and non-negative")
    return C


def _assign_rows(C: np.ndarray) -> np.ndarray:
    """Kuhn-Munkres with potentials for ``n <= m``; returns the column of each row.

    Shortest augmenting path formulation, O(n^2 m). Row and column 0 of the
    internal arrays are sentinels.
    """
    n, m = C.shape
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j] = row matched to column j
    way = [0] * (m + 1)
    rows = [[0.0] + list(map(float, C[i])) for i in range(n)]
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def hungarian_solve(costs) -> Matching:
    """Minimum-cost matching of cardinality ``min(n_pred, n_gt)``.

    Rectangular matrices behave as if zero-padded to square: the surplus
    rows (or columns) stay unmatched.
    """
    C = _check_costs(costs)
    if C.shape[0] <= C.shape[1]:
        cols = _assign_rows(C)
        pairs = [(i, int(j)) for i, j in enumerate(cols)]
    else:
        rows = _assign_rows(C.T)
        pairs = sorted((int(i), j) for j, i in enumerate(rows))
    total = 0.0
    for i, j in pairs:
        total += C[i, j]
    return Matching(pairs, float(total))


def segment_pair_cost(pred: LineSegment3, gt: LineSegment3) -> float:
    """L1 endpoint distance minimised over the two endpoint correspondences."""
    straight = np.abs(pred.a - gt.a).sum() + np.abs(pred.b - gt.b).sum()
    swapped = np.abs(pred.a - gt.b).sum() + np.abs(pred.b - gt.a).sum()
    return float(min(straight, swapped))


def focal_loss(p: float, target_is_line: bool, alpha: float = 1.0, gamma: float = 0.0) -> float:
    """Focal loss of a line/no-line prediction.

    ``p`` is the predicted probability of the "line" class. With
    ``alpha=1, gamma=0`` this is the binary cross-entropy.
    """
    if not alpha > 0 or not gamma >= 0:
        raise InvalidParams(f"need alpha > 0 and gamma >= 0, got alpha={alpha}, gamma={gamma}")
    p_t = float(p) if target_is_line else 1.0 - float(p)
    p_t = min(1.0, max(PROB_EPS, p_t))
    return -alpha * (1.0 - p_t) ** gamma * math.log(p_t)


def matching_cost_matrix(
    preds: Sequence[LineSegment3], gts: Sequence[LineSegment3], weights: LossWeights
) -> np.ndarray:
    C = np.empty((len(preds), len(gts)))
    for i, p in enumerate(preds):
        cls = weights.match_class * (1.0 - p.confidence)
        for j, g in enumerate(gts):
            C[i, j] = weights.match_l1 * segment_pair_cost(p, g) + cls
    return C


def match_and_score(
    preds: Sequence[LineSegment3],
    gts: Sequence[LineSegment3],
    weights: LossWeights | None = None,
    alpha: float = 1.0,
    gamma: float = 0.0,
) -> tuple[Matching, LossBreakdown]:
    """Match predictions to annotations and compute the set loss.

    Matched predictions are scored against the "line" class and by L1
    endpoint distance; unmatched predictions against "no-line".
    """
    if not preds:
        raise ValueError("need at least one prediction")
    weights = weights or LossWeights()
    if gts:
        matching = hungarian_solve(matching_cost_matrix(preds, gts, weights))
    else:
        matching = Matching([], 0.0)
    matched = {i: j for i, j in matching.pairs}
    l1 = math.fsum(segment_pair_cost(preds[i], gts[j]) for i, j in matching.pairs)
    cls = math.fsum(
        focal_loss(p.confidence, i in matched, alpha, gamma) for i, p in enumerate(preds)
    )
    total = weights.loss_l1 * l1 + weights.loss_class * cls
    return matching, LossBreakdown(l1, cls, total, weights)
