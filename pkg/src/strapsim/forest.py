"""Bagged regression trees and leaf-co-membership proximity.

Each tree is grown on a bootstrap sample with a fresh random subset of
ceil(sqrt(p)) candidate features at every split; splits minimize the
summed squared error of the children (variance reduction) and leaves hold
the mean target. The proximity between two rows is the fraction of trees
in which they land in the same leaf, so values are exact multiples of 1/T.

Everything is deterministic given the seed: per-tree generators are
spawned from one seed sequence, which also makes per-tree work safe to
parallelize.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constituent import FeatureTable
from .core import SimilarityMatrix
from .errors import (
    InsufficientRowsError,
    SchemaMismatchError,
    TargetMissingError,
    ValidationError,
)

MIN_LEAF = 2
MIN_TRAIN_ROWS = 10


@dataclass
class TreeNode:
    """A split or (when feature is None) a leaf."""

    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0
    n: int = 0
    leaf_id: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _best_split(x: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Best (feature, threshold) among candidates by squared-error reduction."""
    n = len(y)
    total = y.sum()
    parent_sse = float(y @ y - total * total / n)
    best = None
    best_score = parent_sse - 1e-12
    for f in features:
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        cs = col[order]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        # split after position k: left = first k+1 rows
        ks = np.arange(MIN_LEAF - 1, n - MIN_LEAF)
        if len(ks) == 0:
            continue
        valid = cs[ks] < cs[ks + 1]
        ks = ks[valid]
        if len(ks) == 0:
            continue
        nl = ks + 1.0
        nr = n - nl
        sl = csum[ks]
        sr = total - sl
        sse = (csq[ks] - sl * sl / nl) + ((csq[-1] - csq[ks]) - sr * sr / nr)
        k_best = int(np.argmin(sse))
        if sse[k_best] < best_score:
            best_score = float(sse[k_best])
            k = ks[k_best]
            best = (int(f), float((cs[k] + cs[k + 1]) / 2.0))
    return best


def _grow(x, y, idx, depth, max_depth, n_candidates, rng, counter) -> TreeNode:
    ys = y[idx]
    node = TreeNode(value=float(ys.mean()), n=len(idx))
    if (
        (max_depth is not None and depth >= max_depth)
        or len(idx) < 2 * MIN_LEAF
        or float(ys.max() - ys.min()) <= 0.0
    ):
        node.leaf_id = counter[0]
        counter[0] += 1
        return node
    features = rng.choice(x.shape[1], size=n_candidates, replace=False)
    split = _best_split(x[idx], ys, features)
    if split is None:
        node.leaf_id = counter[0]
        counter[0] += 1
        return node
    f, thr = split
    mask = x[idx, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(x, y, idx[mask], depth + 1, max_depth, n_candidates, rng, counter)
    node.right = _grow(x, y, idx[~mask], depth + 1, max_depth, n_candidates, rng, counter)
    return node


def _apply(node: TreeNode, x: np.ndarray, leaves: np.ndarray, values: np.ndarray, idx: np.ndarray):
    if node.is_leaf:
        leaves[idx] = node.leaf_id
        values[idx] = node.value
        return
    mask = x[idx, node.feature] <= node.threshold
    _apply(node.left, x, leaves, values, idx[mask])
    _apply(node.right, x, leaves, values, idx[~mask])


@dataclass(frozen=True)
class ForestModel:
    """A trained forest plus the metadata needed to reuse and audit it."""

    trees: tuple[TreeNode, ...]
    feature_names: tuple[str, ...]
    target: str
    n_trees: int
    max_depth: int | None
    seed: int
    metrics: dict = field(default_factory=dict)

    def _check_schema(self, table: FeatureTable):
        if table.feature_names != self.feature_names:
            raise SchemaMismatchError(
                f"table features {table.feature_names} do not match model "
                f"features {self.feature_names}"
            )

    def leaf_matrix(self, table: FeatureTable) -> np.ndarray:
        """Leaf index of every row in every tree, shape (n_trees, n_rows)."""
        self._check_schema(table)
        x = table.values
        out = np.empty((len(self.trees), x.shape[0]), dtype=np.int32)
        vals = np.empty(x.shape[0])
        idx = np.arange(x.shape[0])
        for t, tree in enumerate(self.trees):
            _apply(tree, x, out[t], vals, idx)
        return out

    def predict(self, table: FeatureTable) -> np.ndarray:
        self._check_schema(table)
        x = table.values
        acc = np.zeros(x.shape[0])
        leaves = np.empty(x.shape[0], dtype=np.int32)
        vals = np.empty(x.shape[0])
        idx = np.arange(x.shape[0])
        for tree in self.trees:
            _apply(tree, x, leaves, vals, idx)
            acc += vals
        return acc / len(self.trees)


@dataclass(frozen=True)
class ForestConfig:
    trees: int = 100
    max_depth: int | None = None
    seed: int = 0
    cv_folds: int = 5
    holdout: float = 0.1


def _rmse(pred, truth):
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _mape(pred, truth):
    if np.any(truth == 0):
        return None
    return float(np.mean(np.abs((pred - truth) / truth)))


def _fit_forest(x, y, feature_names, target, config: ForestConfig) -> ForestModel:
    n_candidates = max(1, math.ceil(math.sqrt(x.shape[1])))
    seqs = np.random.SeedSequence(config.seed).spawn(config.trees)
    trees = []
    all_idx = np.arange(x.shape[0])
    for seq in seqs:
        rng = np.random.default_rng(seq)
        boot = rng.integers(0, x.shape[0], size=x.shape[0])
        counter = [0]
        trees.append(_grow(x, y, all_idx[boot], 0, config.max_depth, n_candidates, rng, counter))
    return ForestModel(
        trees=tuple(trees),
        feature_names=feature_names,
        target=target,
        n_trees=config.trees,
        max_depth=config.max_depth,
        seed=config.seed,
    )


def forest_train(table: FeatureTable, target: str, config: ForestConfig | None = None) -> ForestModel:
    """Train a forest on the table, holding out a seeded test slice.

    The holdout fraction (default 10%) is split off after a seeded
    shuffle; train/test RMSE and MAPE land in ``model.metrics``. Set
    holdout=0 to fit on every row.
    """
    config = config or ForestConfig()
    if target not in table.targets:
        raise TargetMissingError(f"target column {target!r} not in table")
    if table.n_rows < MIN_TRAIN_ROWS:
        raise InsufficientRowsError(
            f"{table.n_rows} rows < {MIN_TRAIN_ROWS} required to train"
        )
    if config.trees < 1:
        raise ValidationError("need at least one tree")

    y_all = table.targets[target]
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(table.n_rows)
    n_test = int(round(config.holdout * table.n_rows))
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    x_train = table.values[train_idx]
    y_train = y_all[train_idx]
    model = _fit_forest(x_train, y_train, table.feature_names, target, config)

    metrics = {}
    pred_train = model.predict(table.take_rows(train_idx))
    metrics["train_rmse"] = _rmse(pred_train, y_train)
    metrics["train_mape"] = _mape(pred_train, y_train)
    if n_test:
        pred_test = model.predict(table.take_rows(test_idx))
        metrics["test_rmse"] = _rmse(pred_test, y_all[test_idx])
        metrics["test_mape"] = _mape(pred_test, y_all[test_idx])
    object.__setattr__(model, "metrics", metrics)
    return model


def tune_forest(
    table: FeatureTable,
    target: str,
    trees_grid: list[int],
    depth_grid: list[int | None],
    cv_folds: int = 5,
    seed: int = 0,
) -> tuple[int, int | None, list[dict]]:
    """Grid search (trees x depth) by k-fold CV RMSE; first best wins ties."""
    if target not in table.targets:
        raise TargetMissingError(f"target column {target!r} not in table")
    if table.n_rows < cv_folds:
        raise InsufficientRowsError(f"{table.n_rows} rows < {cv_folds} folds")
    y = table.targets[target]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n_rows)
    fold_slices = np.array_split(perm, cv_folds)

    results = []
    best = None
    for trees in trees_grid:
        for depth in depth_grid:
            fold_rmse = []
            for f, test_idx in enumerate(fold_slices):
                train_idx = np.concatenate([s for g, s in enumerate(fold_slices) if g != f])
                cfg = ForestConfig(trees=trees, max_depth=depth, seed=seed + 1)
                model = _fit_forest(
                    table.values[train_idx], y[train_idx], table.feature_names, target, cfg
                )
                fold_rmse.append(_rmse(model.predict(table.take_rows(test_idx)), y[test_idx]))
            mean_rmse = float(np.mean(fold_rmse))
            results.append({"trees": trees, "max_depth": depth, "cv_rmse": mean_rmse})
            if best is None or mean_rmse < best[0]:
                best = (mean_rmse, trees, depth)
    return best[1], best[2], results


def forest_proximity(model: ForestModel, table: FeatureTable) -> SimilarityMatrix:
    """Fraction of trees in which each pair of rows shares a leaf."""
    leaves = model.leaf_matrix(table)
    n = leaves.shape[1]
    counts = np.zeros((n, n), dtype=np.int32)
    for t in range(leaves.shape[0]):
        row = leaves[t]
        counts += row[:, None] == row[None, :]
    return SimilarityMatrix(table.row_ids, table.row_ids, counts / leaves.shape[0])


def average_proximity(models: list[ForestModel], table: FeatureTable) -> SimilarityMatrix:
    """Mean of per-model proximities (one forest per training target)."""
    if not models:
        raise ValidationError("no models given")
    acc = np.zeros((table.n_rows, table.n_rows))
    for model in models:
        acc += forest_proximity(model, table).values
    return SimilarityMatrix(table.row_ids, table.row_ids, acc / len(models))


# -- serialization ----------------------------------------------------------

FOREST_FORMAT = "strapsim-forest"
FOREST_VERSION = 1


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf": {"value": node.value, "n": node.n, "id": node.leaf_id}}
    return {
        "split": {
            "feature": node.feature,
            "threshold": node.threshold,
            "left": _node_to_dict(node.left),
            "right": _node_to_dict(node.right),
        }
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "leaf" in d:
        leaf = d["leaf"]
        return TreeNode(value=float(leaf["value"]), n=int(leaf["n"]), leaf_id=int(leaf["id"]))
    split = d["split"]
    return TreeNode(
        feature=int(split["feature"]),
        threshold=float(split["threshold"]),
        left=_node_from_dict(split["left"]),
        right=_node_from_dict(split["right"]),
    )


def model_to_json(model: ForestModel) -> str:
    doc = {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "feature_names": list(model.feature_names),
        "target": model.target,
        "n_trees": model.n_trees,
        "max_depth": model.max_depth,
        "seed": model.seed,
        "metrics": model.metrics,
        "trees": [_node_to_dict(t) for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_VERSION:
        raise SchemaMismatchError("not a recognized forest model document")
    return ForestModel(
        trees=tuple(_node_from_dict(t) for t in doc["trees"]),
        feature_names=tuple(doc["feature_names"]),
        target=doc["target"],
        n_trees=int(doc["n_trees"]),
        max_depth=doc["max_depth"],
        seed=int(doc["seed"]),
        metrics=doc.get("metrics", {}),
    )
