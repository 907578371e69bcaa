"""End-to-end experiment drivers: tabular KNN benchmarks, the movie
recommendation task, and the synthetic portfolio ranking study.

Each driver wires the pieces together the same way: build weighted sets,
obtain a constituent-level similarity matrix, score every pair with each
metric, and evaluate predictions or rank agreement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .constituent import (
    FeatureTable,
    feature_correlation_matrix,
    instance_sets,
    max_scale,
    row_cosine_similarity,
    tfidf_build,
    tfidf_cosine_matrix,
)
from .core import SimilarityMatrix, WeightedSet, align_matrix
from .errors import TooFewRowsError, ValidationError
from .evaluation import (
    EvalReport,
    RankingStudyRow,
    cross_validate_scores,
    error_metrics,
    etf_ranking_study,
    fold_assignment,
    top_k_from_scores,
    weighted_prediction,
)
from .ingest import MovieData, SyntheticUniverseSpec, generate_synthetic_universe
from .metrics import (
    METRIC_NAMES,
    bertscore_like,
    jaccard,
    pair_scan_order,
    pairwise_matrix,
    strapsim,
    trace_to_result,
    weighted_jaccard,
)

DEFAULT_K_SWEEP = (1, 3, 5, 10, 20)


@dataclass(frozen=True)
class ToyExperimentResult:
    """Per-metric, per-k evaluation reports for one tabular dataset."""

    task: str
    ks: tuple[int, ...]
    reports: dict[str, dict[int, EvalReport]]
    config: dict = field(default_factory=dict)

    def best_k(self, metric: str) -> int:
        """k with the best pooled headline metric (accuracy, or RMSE)."""
        per_k = self.reports[metric]
        if self.task == "classification":
            return max(per_k, key=lambda k: (per_k[k].metrics["accuracy"], -k))
        return min(per_k, key=lambda k: (per_k[k].metrics["rmse"], k))

    def table_rows(self, k: int) -> list[dict]:
        rows = []
        for metric, per_k in self.reports.items():
            rows.append({"metric": metric, "k": k, **per_k[k].metrics})
        return rows


def toy_experiment(
    table: FeatureTable,
    task: str,
    metrics: tuple[str, ...] = METRIC_NAMES,
    ks: tuple[int, ...] = (5,),
    folds: int = 10,
    seed: int = 0,
    normalize: bool = True,
    threads: int | None = None,
) -> ToyExperimentResult:
    """KNN benchmark where each row is a weighted set of its features.

    Feature values are max-scaled and used as weights (normalized to unit
    sum by default, so similarity reflects the weight profile rather than
    total magnitude); the constituent similarity is the cosine between
    feature columns. Every metric scores all row pairs once, then each k
    runs the same seeded k-fold CV.
    """
    scaled = max_scale(table)
    sets = instance_sets(scaled, normalize=normalize)
    sim = feature_correlation_matrix(scaled)
    if task == "classification":
        y = np.array(table.labels)
    else:
        if len(table.targets) != 1:
            raise ValidationError("regression experiment needs exactly one target")
        y = next(iter(table.targets.values()))

    reports: dict[str, dict[int, EvalReport]] = {}
    for metric in metrics:
        scores = pairwise_matrix(sets, sim, metric, threads=threads).scores
        reports[metric] = {
            k: cross_validate_scores(scores, y, task, k=k, folds=folds, seed=seed) for k in ks
        }
    return ToyExperimentResult(
        task=task,
        ks=tuple(ks),
        reports=reports,
        config={"folds": folds, "seed": seed, "normalize": normalize, "metrics": list(metrics)},
    )


# -- movie recommendation -----------------------------------------------------

@dataclass(frozen=True)
class MovieExperimentResult:
    reports: dict[str, EvalReport]
    residuals: list[dict]
    config: dict = field(default_factory=dict)


def _user_profiles(
    triples: list[tuple[str, str, float]],
    users: list[str],
) -> dict[str, WeightedSet]:
    by_user: dict[str, list[tuple[str, float]]] = {u: [] for u in users}
    for uid, mid, rating in triples:
        if uid in by_user:
            by_user[uid].append((mid, rating))
    return {
        u: WeightedSet(u, tuple(m for m, _ in entries), np.array([r for _, r in entries]))
        for u, entries in by_user.items()
        if entries
    }


def _user_similarity(
    profiles: dict[str, WeightedSet],
    users: list[str],
    movie_sim: SimilarityMatrix,
    metric: str,
) -> np.ndarray:
    """Pairwise user similarity for one metric (upper triangle mirrored)."""
    n = len(users)
    out = np.zeros((n, n))
    sets = [profiles.get(u) for u in users]
    for i in range(n):
        if sets[i] is None:
            continue
        out[i, i] = 1.0
        for j in range(i + 1, n):
            if sets[j] is None:
                continue
            a, b = sets[i], sets[j]
            if metric == "jaccard":
                score = jaccard(a, b).score
            elif metric == "weighted_jaccard":
                score = weighted_jaccard(a, b).score
            else:
                block = align_matrix(movie_sim, a, b)
                if metric == "strapsim":
                    score = strapsim(a, b, block).total_score
                else:
                    score = bertscore_like(a, b, block).score
            out[i, j] = out[j, i] = score
    return out


def movie_experiment(
    data: MovieData,
    metrics: tuple[str, ...] = METRIC_NAMES,
    k: int = 20,
    folds: int = 10,
    seed: int = 0,
    max_users: int = 200,
    min_user_ratings: int = 10,
) -> MovieExperimentResult:
    """Rating prediction from the k most similar users, 10-fold over ratings.

    Users are weighted sets of the movies they rated, weighted by the raw
    rating. Movie-movie similarity is TF-IDF cosine over description plus
    tagline. A held-out rating is predicted as the similarity-weighted mean
    of the neighbors' ratings of that movie. The residual report compares,
    per user, how much profile weight each metric leaves unmatched
    (profiles normalized so metrics are on one scale).
    """
    triples = [t for t in data.ratings if t[1] in data.texts]
    counts: dict[str, int] = {}
    for uid, _, _ in triples:
        counts[uid] = counts.get(uid, 0) + 1
    eligible = sorted(u for u, c in counts.items() if c >= min_user_ratings)
    if len(eligible) < folds:
        raise TooFewRowsError("not enough users with the minimum rating count")
    rng = np.random.default_rng(seed)
    if len(eligible) > max_users:
        users = sorted(rng.choice(eligible, size=max_users, replace=False).tolist())
    else:
        users = eligible
    user_pos = {u: i for i, u in enumerate(users)}
    triples = [t for t in triples if t[0] in user_pos]

    movie_ids = sorted({mid for _, mid, _ in triples})
    index = tfidf_build([(m, data.texts[m]) for m in movie_ids])
    movie_sim = tfidf_cosine_matrix(index, movie_ids)

    slices = fold_assignment(len(triples), folds, seed)
    preds: dict[str, list[float]] = {m: [] for m in metrics}
    truth: list[float] = []
    fold_truth_slices = []
    fold_preds: dict[str, list[list[float]]] = {m: [] for m in metrics}

    for f, test_idx in enumerate(slices):
        test_set = set(test_idx.tolist())
        train = [t for i, t in enumerate(triples) if i not in test_set]
        test = [triples[i] for i in test_idx]
        profiles = _user_profiles(train, users)
        global_mean = float(np.mean([r for _, _, r in train]))
        raters: dict[str, list[tuple[int, float]]] = {}
        for uid, mid, rating in train:
            raters.setdefault(mid, []).append((user_pos[uid], rating))

        sims = {m: _user_similarity(profiles, users, movie_sim, m) for m in metrics}

        fold_t = [r for _, _, r in test]
        truth.extend(fold_t)
        fold_truth_slices.append(fold_t)
        for metric in metrics:
            sim_m = sims[metric]
            fold_p = []
            for uid, mid, _ in test:
                u = user_pos[uid]
                candidates = [(v, r) for v, r in raters.get(mid, []) if v != u]
                if not candidates or uid not in profiles:
                    fold_p.append(global_mean)
                    continue
                cand_scores = np.array([sim_m[u, v] for v, _ in candidates])
                cand_targets = np.array([r for _, r in candidates])
                top = top_k_from_scores(cand_scores, k)
                fold_p.append(weighted_prediction(cand_targets[top], cand_scores[top]))
            preds[metric].extend(fold_p)
            fold_preds[metric].append(fold_p)

    reports = {}
    for metric in metrics:
        fold_rows = [
            {"fold": f, "n": len(ts), **error_metrics(ps, ts, "regression")}
            for f, (ps, ts) in enumerate(zip(fold_preds[metric], fold_truth_slices))
        ]
        reports[metric] = EvalReport(
            task="regression",
            metrics=error_metrics(preds[metric], truth, "regression"),
            fold_metrics=fold_rows,
            config={"k": k, "folds": folds, "seed": seed, "metric": metric},
        )

    residuals = _residual_report(triples, users, movie_sim, metrics)
    return MovieExperimentResult(
        reports=reports,
        residuals=residuals,
        config={
            "k": k,
            "folds": folds,
            "seed": seed,
            "users": len(users),
            "max_users": max_users,
            "min_user_ratings": min_user_ratings,
            "ratings": len(triples),
            "movies": len(movie_ids),
        },
    )


def _residual_report(triples, users, movie_sim, metrics) -> list[dict]:
    """Mean per-user residual against every other user, per metric."""
    profiles = _user_profiles(triples, users)
    norm = {u: ws.normalized() for u, ws in profiles.items()}
    present = [u for u in users if u in norm]
    n = len(present)
    acc = {m: np.zeros(n) for m in metrics}
    cnt = np.zeros(n)
    orders: dict[tuple[str, str], np.ndarray] = {}
    for i in range(n):
        a = norm[present[i]]
        for j in range(i + 1, n):
            b = norm[present[j]]
            cnt[i] += 1
            cnt[j] += 1
            block = None
            for metric in metrics:
                if metric == "jaccard":
                    r = jaccard(a, b).residual
                elif metric == "weighted_jaccard":
                    r = weighted_jaccard(a, b).residual
                else:
                    if block is None:
                        block = align_matrix(movie_sim, a, b)
                    if metric == "strapsim":
                        trace = strapsim(a, b, block)
                        r = trace_to_result(trace, a.total_weight() + b.total_weight()).residual
                    else:
                        r = bertscore_like(a, b, block).residual
                acc[metric][i] += r
                acc[metric][j] += r
    rows = []
    for i, u in enumerate(present):
        for metric in metrics:
            rows.append(
                {
                    "user": u,
                    "metric": metric,
                    "mean_residual": float(acc[metric][i] / cnt[i]) if cnt[i] else 0.0,
                }
            )
    return rows


# -- synthetic portfolio ranking ------------------------------------------------

@dataclass(frozen=True)
class SyntheticEtfResult:
    per_seed: dict[int, list[RankingStudyRow]]
    config: dict = field(default_factory=dict)

    def win_count(self, metric_a: str = "strapsim", metric_b: str = "jaccard") -> int:
        wins = 0
        for rows in self.per_seed.values():
            avg = {r.metric: r.average_coefficient for r in rows}
            wins += avg[metric_a] > avg[metric_b]
        return wins

    def average_rows(self) -> list[dict]:
        metrics = [r.metric for r in next(iter(self.per_seed.values()))]
        out = []
        for m in metrics:
            rows = [r for per in self.per_seed.values() for r in per if r.metric == m]
            out.append(
                {
                    "metric": m,
                    "average_coefficient": float(np.mean([r.average_coefficient for r in rows])),
                    "average_p_value": float(np.mean([r.average_p_value for r in rows])),
                    "pct_significant_5": float(np.mean([r.pct_significant_5 for r in rows])),
                    "pct_significant_10": float(np.mean([r.pct_significant_10 for r in rows])),
                }
            )
        return out


def universe_similarity(universe, spec: SyntheticUniverseSpec) -> SimilarityMatrix:
    """Constituent similarity for a generated universe.

    Cosine between raw loading rows (all loading columns); in concordant
    mode the features are unit (cos, sin) pairs, so this equals the planted
    return correlation exactly.
    """
    if spec.concordant:
        return row_cosine_similarity(universe.features)
    loading_cols = [c for c in universe.features.feature_names if c.startswith("loading_")]
    return row_cosine_similarity(universe.features.select(loading_cols))


def synthetic_etf_experiment(
    metrics: tuple[str, ...] = METRIC_NAMES,
    seeds: tuple[int, ...] = tuple(range(10)),
    spec: SyntheticUniverseSpec | None = None,
    threads: int | None = None,
) -> SyntheticEtfResult:
    """Run the ranking study over freshly generated universes, one per seed."""
    base = spec or SyntheticUniverseSpec()
    per_seed = {}
    for seed in seeds:
        sp = SyntheticUniverseSpec(
            n_portfolios=base.n_portfolios,
            n_constituents=base.n_constituents,
            n_factors=base.n_factors,
            overlap=base.overlap,
            noise=base.noise,
            seed=seed,
            mean_holdings=base.mean_holdings,
            n_periods=base.n_periods,
            start_period=base.start_period,
            concordant=base.concordant,
        )
        universe = generate_synthetic_universe(sp)
        sim = universe_similarity(universe, sp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            per_seed[seed] = etf_ranking_study(
                universe.holdings, sim, universe.returns, list(metrics), threads=threads
            )
    return SyntheticEtfResult(per_seed=per_seed, config={"seeds": list(seeds)})
