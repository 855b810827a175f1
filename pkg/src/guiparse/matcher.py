"""Element matcher: optimal one-to-one assignment under box + semantic cost.

The cost of pairing ground truth ``i`` with prediction ``j`` is

    lambda_iou * box_loss(b_i, b_j) + lambda_sem * semantic_distance(t_i, t_j)

Pairs chosen by the assignment are kept only if their similarity score
``1 - cost / max_cost`` reaches ``mu``; ``max_cost`` is the largest value the
cost can take (2 per unit of GIoU weight, 1 per unit of semantic weight), so
the score lives in [0, 1] and the rule is the same as ``cost <= cutoff``.
"""

from __future__ import annotations

import math
import unicodedata
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import ValidationError, Element, EvalConfig, MatchResult, SemMethod
from .geometry import box_loss, box_loss_matrix


def normalize_text(s: str) -> str:
    return " ".join(unicodedata.normalize("NFC", s).casefold().split())


def levenshtein(a: str, b: str) -> int:
    """Edit distance over code points (unit insert/delete/substitute)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def semantic_distance(a: str, b: str, method: SemMethod = SemMethod.NORMALIZED_EDIT) -> float:
    """0 for equal text, up to 1 for unrelated text."""
    if not a.strip() or not b.strip():
        raise ValidationError("semantic_distance needs non-empty strings")
    return _semantic_distance(a, b, SemMethod(method))


# training asks for the same label pairs over and over
@lru_cache(maxsize=1 << 18)
def _semantic_distance(a: str, b: str, method: SemMethod) -> float:
    if method == SemMethod.EXACT:
        return 0.0 if a.strip() == b.strip() else 1.0
    na, nb = normalize_text(a), normalize_text(b)
    if na == nb:
        return 0.0
    return levenshtein(na, nb) / max(len(na), len(nb))


def max_cost(cfg: EvalConfig) -> float:
    box_max = 2.0 if cfg.box_loss == "giou" else 1.0
    return cfg.lambda_iou_match * box_max + cfg.lambda_sem_match


def cost_cutoff(cfg: EvalConfig) -> float:
    """Largest cost a retained pair may have (score ``>= mu``)."""
    return (1.0 - cfg.mu) * max_cost(cfg)


def match_score(cost: float, cfg: EvalConfig) -> float:
    return 1.0 - cost / max_cost(cfg)


def pair_cost(gt: Element, pred: Element, cfg: EvalConfig) -> float:
    c = 0.0
    if cfg.lambda_iou_match:
        c += cfg.lambda_iou_match * box_loss(gt.box, pred.box, cfg.box_loss)
    if cfg.lambda_sem_match:
        c += cfg.lambda_sem_match * semantic_distance(gt.semantics, pred.semantics, cfg.sem_method)
    return c


def build_cost_matrix(gt: Sequence[Element], pred: Sequence[Element], cfg: EvalConfig) -> np.ndarray:
    """``pair_cost`` for every (gt, pred) pair, bit-identical to the scalar version."""
    cost = np.zeros((len(gt), len(pred)), dtype=np.float64)
    if not gt or not pred:
        return cost
    if cfg.lambda_iou_match:
        cost += cfg.lambda_iou_match * box_loss_matrix([g.box for g in gt], [p.box for p in pred], cfg.box_loss)
    if cfg.lambda_sem_match:
        sem = np.array(
            [[semantic_distance(g.semantics, p.semantics, cfg.sem_method) for p in pred] for g in gt]
        )
        cost += cfg.lambda_sem_match * sem
    return cost


def _exact_integer_costs(cost: np.ndarray) -> list[list[int]]:
    # Every finite float is m / 2**k; scaling by the largest denominator makes
    # all entries integers, so the solver below does exact arithmetic.
    ratios = [[Fraction(float(v)) for v in row] for row in cost]
    denom = max((r.denominator for row in ratios for r in row), default=1)
    return [[int(r * denom) for r in row] for row in ratios]


def _solve_rows_le_cols(c: list[list[int]]) -> list[int]:
    """Shortest-augmenting-path assignment with potentials (rows <= cols).

    Returns ``col_of_row``. Exact on integer costs.
    """
    n, m = len(c), len(c[0])
    INF = float("inf")
    u = [0] * (n + 1)
    v = [0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) assigned to column j, 0 = free
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = -1
            ci = c[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = ci[j - 1] - u[i0] - v[j]
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
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-total-cost one-to-one assignment of ``min(rows, cols)`` pairs.

    Rectangular matrices are solved directly (every entry of the shorter side
    gets a partner). The solve runs in exact integer arithmetic, and cost ties
    are broken toward the lexicographically smallest assignment read along
    the shorter side: the lowest-index row (or column) takes the lowest
    available partner index that still allows a minimal total.

    Returns ``(row, col)`` pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValidationError("cost matrix must be 2-D")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix has non-finite entries")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    transposed = n > m
    if transposed:
        cost = cost.T
        n, m = m, n
    ints = _exact_integer_costs(cost)
    # Tie key: the sequence of chosen columns read as base-m digits, weighted
    # far below one unit of real cost so it only separates exact ties.
    base = m
    weights = [base ** (n - 1 - i) for i in range(n)]
    scale = base ** n
    keyed = [[ints[i][j] * scale + j * weights[i] for j in range(m)] for i in range(n)]
    col_of_row = _solve_rows_le_cols(keyed)
    pairs = [(i, j) for i, j in enumerate(col_of_row)]
    if transposed:
        pairs = sorted((j, i) for i, j in pairs)
    return pairs


def _result(pairs, n_gt: int, n_pred: int) -> MatchResult:
    pairs = tuple(sorted(pairs))
    return MatchResult(
        pairs=pairs,
        unmatched_gt=frozenset(range(n_gt)) - {p[0] for p in pairs},
        unmatched_pred=frozenset(range(n_pred)) - {p[1] for p in pairs},
    )


def assign_with_cutoff(cost: np.ndarray, cutoff: float) -> tuple[MatchResult, list[tuple[int, int, float]]]:
    """Optimal assignment, then drop pairs costing more than ``cutoff``.

    Also returns the dropped pairs, which callers may need (the training loss
    penalizes them).
    """
    kept, dropped = [], []
    for i, j in hungarian(cost):
        c = float(cost[i, j])
        (kept if c <= cutoff else dropped).append((i, j, c))
    return _result(kept, cost.shape[0], cost.shape[1]), dropped


def greedy_assign(cost: np.ndarray, cutoff: float = math.inf) -> MatchResult:
    """Per-row argmin over still-unclaimed columns, rows taken in order."""
    n, m = cost.shape
    claimed: set[int] = set()
    pairs = []
    for i in range(n):
        best_j, best_c = -1, math.inf
        for j in range(m):
            if j not in claimed and cost[i, j] < best_c:
                best_j, best_c = j, float(cost[i, j])
        if best_j >= 0 and best_c <= cutoff:
            claimed.add(best_j)
            pairs.append((i, best_j, best_c))
    return _result(pairs, n, m)


def match_elements(gt: Sequence[Element], pred: Sequence[Element], cfg: EvalConfig = EvalConfig()) -> MatchResult:
    cost = build_cost_matrix(gt, pred, cfg)
    result, _ = assign_with_cutoff(cost, cost_cutoff(cfg))
    return result


def greedy_match(gt: Sequence[Element], pred: Sequence[Element], cfg: EvalConfig = EvalConfig()) -> MatchResult:
    return greedy_assign(build_cost_matrix(gt, pred, cfg), cost_cutoff(cfg))
