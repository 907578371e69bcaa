"""Similarity metrics over weighted sets.

Four metrics ship here, each paired with a residual that reports how much
weight the matching process left untouched:

* residual-aware greedy matching (the headline metric): scan constituent
  pairs by descending similarity, transfer the smaller available weight at
  each match, and deduct it from both sides so nothing is counted twice;
* Jaccard index over ids (weights ignored);
* weighted Jaccard (min-sum over max-sum);
* a recall/precision/F1 greedy-argmax analog that never deducts weight.

An exact-transport oracle (small LP) computes the globally optimal
assignment the greedy scan approximates; tests use it as an upper bound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import (
    EPSILON,
    MatchStep,
    MatchTrace,
    MetricResult,
    SimilarityMatrix,
    WeightedSet,
)
from .errors import (
    DegenerateUnionError,
    DimensionMismatchError,
    TooLargeError,
    ValidationError,
)

METRIC_NAMES = ("strapsim", "jaccard", "weighted_jaccard", "bertscore")


def _check_aligned(x: WeightedSet, y: WeightedSet, s: SimilarityMatrix) -> None:
    if s.shape != (len(x), len(y)):
        raise DimensionMismatchError(
            f"similarity matrix shape {s.shape} does not match |x|={len(x)}, |y|={len(y)}"
        )


def pair_scan_order(values: np.ndarray) -> np.ndarray:
    """Flat indices of a matrix sorted by descending value, ties by (i, j).

    Stable argsort on the row-major ravel makes the tie-break the natural
    insertion order, so identical inputs always scan identically.
    """
    return np.argsort(-values.ravel(), kind="stable")


def _greedy_scan(
    wx0: np.ndarray,
    wy0: np.ndarray,
    values: np.ndarray,
    order: np.ndarray,
    min_match_sim: float,
):
    wx = wx0.copy()
    wy = wy0.copy()
    left_x = float(wx.sum())
    left_y = float(wy.sum())
    m = values.shape[1]
    flat = values.ravel().tolist()
    steps: list[MatchStep] = []
    score = 0.0
    for k in order.tolist():
        v = flat[k]
        if v <= min_match_sim:
            break
        i, j = divmod(k, m)
        a = wx[i]
        if a <= EPSILON:
            continue
        b = wy[j]
        if b <= EPSILON:
            continue
        t = a if a < b else b
        wx[i] = a - t
        wy[j] = b - t
        left_x -= t
        left_y -= t
        score += t * v
        steps.append(MatchStep(i, j, v, float(t)))
        if left_x <= EPSILON or left_y <= EPSILON:
            break
    return steps, wx, wy, score


def strapsim(
    x: WeightedSet,
    y: WeightedSet,
    s: SimilarityMatrix,
    min_match_sim: float = 0.0,
    _order: np.ndarray | None = None,
) -> MatchTrace:
    """Greedy residual-aware matching of x against y.

    All (i, j) pairs are scanned by descending similarity (ties broken by
    ascending (i, j)); each visited pair with weight remaining on both
    sides transfers the smaller remaining weight, contributing
    mass * similarity to the score and shrinking both residuals. Pairs at
    or below ``min_match_sim`` never match, so their weight stays in the
    residual; the scan also stops once either side is exhausted.
    """
    _check_aligned(x, y, s)
    order = _order if _order is not None else pair_scan_order(s.values)
    steps, rx, ry, score = _greedy_scan(x.weights, y.weights, s.values, order, min_match_sim)
    return MatchTrace(
        x_label=x.label,
        y_label=y.label,
        steps=tuple(steps),
        residual_x=rx,
        residual_y=ry,
        total_score=score,
        initial_x=x.weights,
        initial_y=y.weights,
    )


def trace_to_result(trace: MatchTrace, total_mass: float) -> MetricResult:
    """Collapse a match trace into score + residual-fraction form.

    The residual is normalized by the combined initial mass of both sides
    so it stays in [0, 1] regardless of whether inputs were normalized.
    """
    residual = trace.total_residual / total_mass if total_mass > 0 else 0.0
    return MetricResult(
        score=trace.total_score,
        residual=residual,
        extras={"raw_residual": trace.total_residual},
    )


def strapsim_metric(
    x: WeightedSet,
    y: WeightedSet,
    s: SimilarityMatrix,
    min_match_sim: float = 0.0,
) -> MetricResult:
    trace = strapsim(x, y, s, min_match_sim)
    return trace_to_result(trace, x.total_weight() + y.total_weight())


def strapsim_identity_reduction(x: WeightedSet, y: WeightedSet) -> MetricResult:
    """Greedy matching under exact-id similarity: sum of min shared weights.

    Equivalent to running the full scan with S = 1 on identical ids and 0
    elsewhere; computed in closed form.
    """
    wy = dict(zip(y.ids, y.weights.tolist()))
    score = sum(min(w, wy[i]) for i, w in zip(x.ids, x.weights.tolist()) if i in wy)
    total = x.total_weight() + y.total_weight()
    residual = (total - 2.0 * score) / total if total > 0 else 0.0
    return MetricResult(score=score, residual=residual)


def jaccard(x: WeightedSet, y: WeightedSet) -> MetricResult:
    """Intersection-over-union on id sets; weights are ignored."""
    xs, ys = set(x.ids), set(y.ids)
    score = len(xs & ys) / len(xs | ys)
    return MetricResult(score=score, residual=1.0 - score)


def weighted_jaccard(x: WeightedSet, y: WeightedSet) -> MetricResult:
    """Sum of elementwise min weights over sum of elementwise max weights."""
    wx = dict(zip(x.ids, x.weights.tolist()))
    wy = dict(zip(y.ids, y.weights.tolist()))
    num = 0.0
    den = 0.0
    for cid in {**wx, **wy}:
        a = wx.get(cid, 0.0)
        b = wy.get(cid, 0.0)
        num += a if a < b else b
        den += b if a < b else a
    if den <= 0.0:
        raise DegenerateUnionError("union weight is zero")
    score = num / den
    return MetricResult(score=score, residual=1.0 - score)


def bertscore_like(
    x: WeightedSet,
    y: WeightedSet,
    s: SimilarityMatrix,
    _row_argmax: np.ndarray | None = None,
    _col_argmax: np.ndarray | None = None,
) -> MetricResult:
    """Greedy argmax matching with static weights.

    Recall matches every x element to its most similar y element (ties to
    the lowest index) weighted by the smaller of the pair's weights;
    precision mirrors this from the y side; F1 is their harmonic mean
    (0 when both vanish). Residuals track hypothetical leftover weight:
    each match's min-weight is deducted from the matched element, leftovers
    clamp at zero, and the residual is one minus their sum. Because weights
    are never consumed during scoring, elements may be matched repeatedly.
    """
    _check_aligned(x, y, s)
    v = s.values
    wx = x.weights
    wy = y.weights

    jstar = _row_argmax if _row_argmax is not None else np.argmax(v, axis=1)
    istar = _col_argmax if _col_argmax is not None else np.argmax(v, axis=0)

    d_rows = np.minimum(wx, wy[jstar])
    r_num = float(np.dot(d_rows, v[np.arange(len(wx)), jstar]))
    r_den = float(d_rows.sum())
    recall = r_num / r_den if r_den > 0 else 0.0

    d_cols = np.minimum(wy, wx[istar])
    p_num = float(np.dot(d_cols, v[istar, np.arange(len(wy))]))
    p_den = float(d_cols.sum())
    precision = p_num / p_den if p_den > 0 else 0.0

    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    res_recall = 1.0 - float(np.maximum(wx - d_rows, 0.0).sum())
    res_precision = 1.0 - float(np.maximum(wy - d_cols, 0.0).sum())
    if res_recall + res_precision > 0:
        res_f1 = 2 * res_recall * res_precision / (res_recall + res_precision)
    else:
        res_f1 = 0.0

    return MetricResult(
        score=f1,
        residual=res_f1,
        recall=recall,
        precision=precision,
        f1=f1,
        extras={"residual_recall": res_recall, "residual_precision": res_precision},
    )


@dataclass(frozen=True)
class TransportPlan:
    """An exact solution of the capacity-constrained matching LP."""

    assignments: tuple[tuple[int, int, float], ...]
    objective: float


MAX_ORACLE_CELLS = 64


def exact_transport_oracle(
    x: WeightedSet,
    y: WeightedSet,
    s: SimilarityMatrix,
) -> TransportPlan:
    """Globally optimal similarity-weighted mass assignment (test scale).

    Solves max sum(m_ij * S_ij) subject to row sums <= w_x and column sums
    <= w_y with an LP; the greedy scan's score can never exceed this
    objective. Capped at 64 cells because it exists to check small cases,
    not to be fast.
    """
    _check_aligned(x, y, s)
    n, m = s.shape
    if n * m > MAX_ORACLE_CELLS:
        raise TooLargeError(f"{n}x{m} exceeds the {MAX_ORACLE_CELLS}-cell oracle cap")
    a_ub = np.zeros((n + m, n * m))
    for i in range(n):
        a_ub[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_ub[n + j, j::m] = 1.0
    b_ub = np.concatenate([x.weights, y.weights])
    res = linprog(-s.values.ravel(), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if not res.success:
        raise ValidationError(f"transport LP failed: {res.message}")
    mass = res.x.reshape(n, m)
    assignments = tuple(
        (i, j, float(mass[i, j])) for i in range(n) for j in range(m) if mass[i, j] > EPSILON
    )
    objective = float(np.sum(mass * s.values))
    return TransportPlan(assignments=assignments, objective=objective)


@dataclass(frozen=True)
class PairwiseScores:
    """Symmetric metric scores and residuals between every pair of sets."""

    labels: tuple[str, ...]
    metric: str
    scores: np.ndarray
    residuals: np.ndarray

    def result(self, i: int, j: int) -> MetricResult:
        return MetricResult(score=float(self.scores[i, j]), residual=float(self.residuals[i, j]))


# -- batch kernels for sets sharing one id tuple ------------------------------
#
# When every set holds the same ids (tabular instances), the aligned
# similarity block and its scan order are common to all pairs, so the greedy
# recursion can run for many pairs at once: one pass over the sorted cells,
# with each pair's residual weights advanced in lockstep. Semantics are
# identical to the per-pair operations (tests assert bitwise-tolerance
# agreement); only the evaluation order over pairs differs.

def _batch_strapsim(wa: np.ndarray, wb: np.ndarray, values: np.ndarray, order, min_match_sim):
    """Greedy-matching scores for P pairs at once; returns (scores, residuals)."""
    wx = wa.copy()
    wy = wb.copy()
    totals = wa.sum(axis=1) + wb.sum(axis=1)
    m = values.shape[1]
    flat = values.ravel()
    scores = np.zeros(wa.shape[0])
    for k in order.tolist():
        v = flat[k]
        if v <= min_match_sim:
            break
        i, j = divmod(k, m)
        t = np.minimum(wx[:, i], wy[:, j])
        wx[:, i] -= t
        wy[:, j] -= t
        scores += v * t
    raw_residual = wx.sum(axis=1) + wy.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        residuals = np.where(totals > 0, raw_residual / totals, 0.0)
    return scores, residuals


def _batch_bertscore(wa, wb, values, jstar, istar):
    """Static-weight argmax scores for P pairs at once."""
    n, m = values.shape
    v_row = values[np.arange(n), jstar]
    v_col = values[istar, np.arange(m)]

    d_rows = np.minimum(wa, wb[:, jstar])
    r_den = d_rows.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(r_den > 0, (d_rows @ v_row) / r_den, 0.0)
    d_cols = np.minimum(wb, wa[:, istar])
    p_den = d_cols.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(p_den > 0, (d_cols @ v_col) / p_den, 0.0)
    pr = precision + recall
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(pr > 0, 2 * precision * recall / pr, 0.0)

    res_recall = 1.0 - np.maximum(wa - d_rows, 0.0).sum(axis=1)
    res_precision = 1.0 - np.maximum(wb - d_cols, 0.0).sum(axis=1)
    rr = res_recall + res_precision
    with np.errstate(invalid="ignore", divide="ignore"):
        res_f1 = np.where(rr > 0, 2 * res_recall * res_precision / rr, 0.0)
    return f1, res_f1


def _batch_weighted_jaccard(wa, wb):
    num = np.minimum(wa, wb).sum(axis=1)
    den = np.maximum(wa, wb).sum(axis=1)
    if np.any(den <= 0):
        raise DegenerateUnionError("union weight is zero")
    score = num / den
    return score, 1.0 - score


def _pairwise_shared(sets, block, metric, min_match_sim):
    """Fill the full pairwise matrix using the batch kernels."""
    n = len(sets)
    weights = np.array([ws.weights for ws in sets])
    iu, ju = np.triu_indices(n)
    wa, wb = weights[iu], weights[ju]
    if metric == "strapsim":
        order = pair_scan_order(block.values)
        s, r = _batch_strapsim(wa, wb, block.values, order, min_match_sim)
    elif metric == "bertscore":
        jstar = np.argmax(block.values, axis=1)
        istar = np.argmax(block.values, axis=0)
        s, r = _batch_bertscore(wa, wb, block.values, jstar, istar)
    elif metric == "weighted_jaccard":
        s, r = _batch_weighted_jaccard(wa, wb)
    else:  # jaccard over identical id sets
        s = np.ones(len(iu))
        r = np.zeros(len(iu))
    scores = np.zeros((n, n))
    residuals = np.zeros((n, n))
    scores[iu, ju] = s
    scores[ju, iu] = s
    residuals[iu, ju] = r
    residuals[ju, iu] = r
    return scores, residuals


def _pair_metric(metric, a, b, s, min_match_sim, order, row_argmax, col_argmax):
    if metric == "jaccard":
        return jaccard(a, b)
    if metric == "weighted_jaccard":
        return weighted_jaccard(a, b)
    if metric == "strapsim":
        trace = strapsim(a, b, s, min_match_sim, _order=order)
        return trace_to_result(trace, a.total_weight() + b.total_weight())
    if metric == "bertscore":
        return bertscore_like(a, b, s, _row_argmax=row_argmax, _col_argmax=col_argmax)
    raise ValidationError(f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")


def pairwise_matrix(
    sets: list[WeightedSet],
    s: SimilarityMatrix | None = None,
    metric: str = "strapsim",
    min_match_sim: float = 0.0,
    threads: int | None = None,
) -> PairwiseScores:
    """Compute one metric between every pair of sets.

    Only the upper triangle is computed; the mirror cell is filled from it,
    which also guarantees exact symmetry of the output. When all sets share
    one id tuple (tabular instances), the aligned similarity block and its
    scan order are reused across every pair.
    """
    from .core import align_matrix

    if metric not in METRIC_NAMES:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")
    needs_s = metric in ("strapsim", "bertscore")
    if needs_s and s is None:
        raise ValidationError(f"metric {metric!r} requires a constituent similarity matrix")

    n = len(sets)
    if n > 1 and all(ws.ids == sets[0].ids for ws in sets):
        block = align_matrix(s, sets[0], sets[0]) if needs_s else None
        scores, residuals = _pairwise_shared(sets, block, metric, min_match_sim)
        return PairwiseScores(
            labels=tuple(ws.label for ws in sets),
            metric=metric,
            scores=scores,
            residuals=residuals,
        )

    scores = np.zeros((n, n))
    residuals = np.zeros((n, n))

    def compute(ij):
        i, j = ij
        a, b = sets[i], sets[j]
        try:
            block = align_matrix(s, a, b) if needs_s else None
            r = _pair_metric(metric, a, b, block, min_match_sim, None, None, None)
        except ValidationError as exc:
            raise type(exc)(f"pair ({a.label}, {b.label}): {exc}") from exc
        scores[i, j] = scores[j, i] = r.score
        residuals[i, j] = residuals[j, i] = r.residual

    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(compute, pairs))
    else:
        for ij in pairs:
            compute(ij)

    return PairwiseScores(
        labels=tuple(ws.label for ws in sets),
        metric=metric,
        scores=scores,
        residuals=residuals,
    )
