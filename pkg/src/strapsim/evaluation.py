"""Experiment harness: KNN prediction, cross-validation, error metrics,
Spearman rank analysis, and the portfolio-vs-returns ranking study.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import SimilarityMatrix, WeightedSet
from .errors import (
    ConstantInputError,
    EmptyPoolError,
    LengthMismatchError,
    MissingReturnsError,
    TooFewRowsError,
    TooShortError,
    ValidationError,
    ZeroTruthForMapeError,
)
from .metrics import pairwise_matrix


@dataclass(frozen=True)
class NeighborList:
    """Top-k pool members for a query, ordered by descending similarity."""

    query: str
    neighbors: tuple[tuple[str, float], ...]
    k: int


def _ranked_indices(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; equal scores keep pool order."""
    return np.lexsort((np.arange(len(scores)), -scores))


def nearest_neighbors(
    query: WeightedSet,
    pool: list[WeightedSet],
    sim,
    k: int,
) -> NeighborList:
    """Rank pool sets by similarity to the query, excluding the query itself."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    candidates = [ws for ws in pool if ws.label != query.label]
    if not candidates:
        raise EmptyPoolError("no candidates besides the query")
    scores = np.array([sim(query, ws) for ws in candidates])
    order = _ranked_indices(scores)[:k]
    return NeighborList(
        query=query.label,
        neighbors=tuple((candidates[i].label, float(scores[i])) for i in order),
        k=k,
    )


def _vote(labels: list[str], sims: np.ndarray) -> str:
    """Majority vote; ties go to the higher similarity sum, then lexicographic."""
    tally: dict[str, list] = {}
    for lbl, s in zip(labels, sims):
        entry = tally.setdefault(lbl, [0, 0.0])
        entry[0] += 1
        entry[1] += float(s)
    return min(tally.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))[0]


def knn_classify(
    query: WeightedSet,
    pool: list[tuple[WeightedSet, str]],
    sim,
    k: int,
) -> str:
    """Label of the majority among the k most similar pool members."""
    if not pool:
        raise EmptyPoolError("empty pool")
    neighbors = nearest_neighbors(query, [ws for ws, _ in pool], sim, k)
    label_of = {ws.label: lbl for ws, lbl in pool}
    chosen = [label_of[name] for name, _ in neighbors.neighbors]
    sims = np.array([s for _, s in neighbors.neighbors])
    return _vote(chosen, sims)


def knn_regress(
    query: WeightedSet,
    pool: list[tuple[WeightedSet, float]],
    sim,
    k: int,
) -> float:
    """Similarity-weighted mean of the top-k targets.

    Falls back to the plain mean of those k neighbors when no similarity
    is positive.
    """
    if not pool:
        raise EmptyPoolError("empty pool")
    neighbors = nearest_neighbors(query, [ws for ws, _ in pool], sim, k)
    target_of = {ws.label: t for ws, t in pool}
    targets = np.array([target_of[name] for name, _ in neighbors.neighbors])
    sims = np.array([s for _, s in neighbors.neighbors])
    return weighted_prediction(targets, sims)


def weighted_prediction(targets: np.ndarray, sims: np.ndarray) -> float:
    total = sims.sum()
    if total <= 0:
        return float(targets.mean())
    return float(np.dot(sims, targets) / total)


def top_k_from_scores(scores: np.ndarray, k: int, exclude: int | None = None) -> np.ndarray:
    """Top-k indices by descending score, optionally skipping one index."""
    order = _ranked_indices(scores)
    if exclude is not None:
        order = order[order != exclude]
    return order[:k]


def error_metrics(pred, truth, task: str) -> dict[str, float]:
    """Pooled error metrics for one task.

    Classification: exact-match accuracy and macro-averaged F1.
    Regression: RMSE, MAE, and MAPE in percent (every truth must be
    nonzero for MAPE).
    """
    if len(pred) != len(truth):
        raise LengthMismatchError(f"{len(pred)} predictions vs {len(truth)} truths")
    if len(pred) == 0:
        raise LengthMismatchError("empty inputs")
    if task == "classification":
        pred = list(pred)
        truth = list(truth)
        accuracy = sum(p == t for p, t in zip(pred, truth)) / len(truth)
        return {"accuracy": accuracy, "f1": macro_f1(pred, truth)}
    if task == "regression":
        pred = np.asarray(pred, dtype=np.float64)
        truth = np.asarray(truth, dtype=np.float64)
        if np.any(truth == 0):
            raise ZeroTruthForMapeError("MAPE undefined: zero value in truth")
        err = pred - truth
        return {
            "rmse": float(np.sqrt(np.mean(err**2))),
            "mae": float(np.mean(np.abs(err))),
            "mape": float(np.mean(np.abs(err / truth)) * 100.0),
        }
    raise ValidationError(f"unknown task {task!r}")


def macro_f1(pred: list, truth: list) -> float:
    """Unweighted mean of per-class F1 over every class seen in pred or truth."""
    classes = sorted(set(truth) | set(pred))
    scores = []
    for c in classes:
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class EvalReport:
    """Pooled metrics for one experiment plus its per-fold breakdown."""

    task: str
    metrics: dict[str, float]
    fold_metrics: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "metrics": self.metrics,
            "folds": self.fold_metrics,
            "config": self.config,
        }


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle split into near-equal folds."""
    if folds < 2:
        raise TooFewRowsError("need at least 2 folds")
    if n < folds:
        raise TooFewRowsError(f"{n} rows < {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def cross_validate_scores(
    score_matrix: np.ndarray,
    y,
    task: str,
    k: int = 5,
    folds: int = 10,
    seed: int = 0,
) -> EvalReport:
    """K-fold CV of a KNN predictor driven by a precomputed score matrix.

    Row i of the matrix holds similarity of instance i to every other
    instance; per fold, each test row is predicted from the k most similar
    training rows (vote for classification, similarity-weighted mean for
    regression) and metrics are pooled over all predictions.
    """
    n = score_matrix.shape[0]
    if score_matrix.shape != (n, n):
        raise LengthMismatchError("score matrix must be square")
    if len(y) != n:
        raise LengthMismatchError("labels length does not match matrix")
    slices = fold_assignment(n, folds, seed)
    y = np.asarray(y)

    all_pred = []
    all_truth = []
    fold_rows = []
    for f, test_idx in enumerate(slices):
        train_idx = np.concatenate([s for g, s in enumerate(slices) if g != f])
        preds = []
        for i in test_idx:
            scores = score_matrix[i, train_idx]
            top = top_k_from_scores(scores, k)
            if task == "classification":
                preds.append(_vote(list(y[train_idx][top]), scores[top]))
            else:
                preds.append(weighted_prediction(y[train_idx][top].astype(float), scores[top]))
        truth = list(y[test_idx])
        all_pred.extend(preds)
        all_truth.extend(truth)
        fold_rows.append({"fold": f, "n": len(test_idx), **error_metrics(preds, truth, task)})

    pooled = error_metrics(all_pred, all_truth, task)
    return EvalReport(
        task=task,
        metrics=pooled,
        fold_metrics=fold_rows,
        config={"k": k, "folds": folds, "seed": seed},
    )


# -- Spearman ---------------------------------------------------------------

def spearman(a, b, exact: bool = False) -> tuple[float, float]:
    """Spearman rank correlation with a two-sided p-value.

    rho is the Pearson correlation of average-ranked values. The p-value
    uses the Student-t approximation (rho = +-1 maps to p = 0); with
    ``exact=True`` and n <= 10, the full permutation distribution is used
    instead.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatchError("inputs differ in length")
    n = len(a)
    if n < 3:
        raise TooShortError(f"need at least 3 observations, got {n}")
    ra = stats.rankdata(a, method="average")
    rb = stats.rankdata(b, method="average")
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise ConstantInputError("zero rank variance")
    rho = _pearson(ra, rb)
    if exact:
        if n > 10:
            raise ValidationError("exact permutation p-value available only for n <= 10")
        return rho, _exact_p(ra, rb, rho)
    if abs(rho) >= 1.0 - 1e-12:
        return float(np.sign(rho)), 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(stats.t.sf(abs(t), n - 2))
    return float(rho), min(p, 1.0)


def _pearson(u: np.ndarray, v: np.ndarray) -> float:
    du = u - u.mean()
    dv = v - v.mean()
    return float(np.dot(du, dv) / np.sqrt(np.dot(du, du) * np.dot(dv, dv)))


def _exact_p(ra: np.ndarray, rb: np.ndarray, rho: float) -> float:
    from itertools import permutations

    n = len(ra)
    da = ra - ra.mean()
    sa = np.sqrt(np.dot(da, da))
    db = rb - rb.mean()
    sb = np.sqrt(np.dot(db, db))
    hits = 0
    total = 0
    for perm in permutations(range(n)):
        r = float(np.dot(da, db[list(perm)]) / (sa * sb))
        if abs(r) >= abs(rho) - 1e-12:
            hits += 1
        total += 1
    return hits / total


# -- return series and ranking study ----------------------------------------

MIN_RETURN_OVERLAP = 12


@dataclass(frozen=True)
class ReturnSeries:
    """Per-entity ordered (period, return) observations, monthly fractions."""

    entity_id: str
    periods: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.periods) != len(self.values):
            raise LengthMismatchError("periods and values differ in length")
        if any(self.periods[i] >= self.periods[i + 1] for i in range(len(self.periods) - 1)):
            raise ValidationError(f"periods of {self.entity_id!r} not strictly increasing")
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def return_correlation(
    a: ReturnSeries,
    b: ReturnSeries,
    min_overlap: int = MIN_RETURN_OVERLAP,
) -> float | None:
    """Pearson correlation over overlapping periods; None if overlap < 12."""
    pos_b = {p: k for k, p in enumerate(b.periods)}
    common = [(k, pos_b[p]) for k, p in enumerate(a.periods) if p in pos_b]
    if len(common) < min_overlap:
        return None
    ia, ib = zip(*common)
    va = a.values[list(ia)]
    vb = b.values[list(ib)]
    if va.std() == 0 or vb.std() == 0:
        return None
    return _pearson(va, vb)


@dataclass(frozen=True)
class RankingStudyRow:
    metric: str
    average_coefficient: float
    average_p_value: float
    pct_significant_5: float
    pct_significant_10: float
    per_entity: tuple[dict, ...]


def etf_ranking_study(
    sets: list[WeightedSet],
    s: SimilarityMatrix | None,
    returns: list[ReturnSeries],
    metrics: list[str],
    min_match_sim: float = 0.0,
    threads: int | None = None,
) -> list[RankingStudyRow]:
    """Spearman agreement between metric rankings and return-correlation rankings.

    For each entity, its metric scores against all others are rank-correlated
    with its return correlations against all others; the study reports the
    per-metric average coefficient, average p-value, and the share of
    entities significant at the 5% and 10% levels. An entity whose score
    vector carries no ranking information (all equal) is recorded with
    rho = 0, p = 1.
    """
    if len(sets) < 4:
        raise TooFewRowsError("ranking study needs at least 4 entities")
    by_entity = {r.entity_id: r for r in returns}
    for ws in sets:
        if ws.label not in by_entity:
            raise MissingReturnsError(ws.label)

    n = len(sets)
    corr = np.full((n, n), np.nan)
    for i in range(n):
        corr[i, i] = 1.0
        for j in range(i + 1, n):
            c = return_correlation(by_entity[sets[i].label], by_entity[sets[j].label])
            if c is not None:
                corr[i, j] = corr[j, i] = c

    rows = []
    for metric in metrics:
        pw = pairwise_matrix(sets, s, metric, min_match_sim=min_match_sim, threads=threads)
        per_entity = []
        for i in range(n):
            others = [j for j in range(n) if j != i and not np.isnan(corr[i, j])]
            if len(others) < 3:
                warnings.warn(f"entity {sets[i].label!r} has too few comparable peers; skipped")
                continue
            sims = pw.scores[i, others]
            rets = corr[i, others]
            try:
                rho, p = spearman(sims, rets)
                degenerate = False
            except ConstantInputError:
                rho, p, degenerate = 0.0, 1.0, True
            per_entity.append(
                {"entity": sets[i].label, "rho": rho, "p_value": p, "degenerate": degenerate}
            )
        if not per_entity:
            raise TooFewRowsError("no entity had enough comparable peers")
        rhos = np.array([e["rho"] for e in per_entity])
        ps = np.array([e["p_value"] for e in per_entity])
        rows.append(
            RankingStudyRow(
                metric=metric,
                average_coefficient=float(rhos.mean()),
                average_p_value=float(ps.mean()),
                pct_significant_5=float(np.mean(ps < 0.05) * 100.0),
                pct_significant_10=float(np.mean(ps < 0.10) * 100.0),
                per_entity=tuple(per_entity),
            )
        )
    return rows
