"""Shared domain types: weighted sets, similarity matrices, match traces.

A weighted set is an ordered collection of unique string ids with
non-negative weights (a portfolio of bonds, a user's rated movies, an
instance's features). Insertion order is preserved and is the tie-break
order for every matching algorithm, which keeps runs deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptySetError,
    NegativeWeightError,
    NotSquareError,
    AsymmetryError,
    UnknownConstituentError,
)

# Mass below this is treated as exhausted during matching.
EPSILON = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeightedSet:
    """An ordered set of constituents with non-negative weights."""

    label: str
    ids: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        if len(self.ids) == 0:
            raise EmptySetError(f"weighted set {self.label!r} has no entries")
        if len(self.ids) != len(self.weights):
            raise ValueError("ids and weights length mismatch")
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise DuplicateIdError(f"duplicate constituent id {dup!r} in {self.label!r}")
        if any(not i for i in self.ids):
            raise EmptySetError(f"empty constituent id in {self.label!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise NegativeWeightError(f"negative weight in {self.label!r}")
        if not np.any(w > 0):
            raise EmptySetError(f"weighted set {self.label!r} has no positive weight")
        object.__setattr__(self, "weights", _frozen(w))

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.ids)

    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.ids, self.weights.tolist()))

    def normalized(self) -> "WeightedSet":
        return WeightedSet(self.label, self.ids, self.weights / self.weights.sum())

    def index_of(self) -> dict[str, int]:
        return {cid: k for k, cid in enumerate(self.ids)}


def make_weighted_set(
    label: str,
    entries: list[tuple[str, float]],
    normalize: bool = False,
) -> WeightedSet:
    """Build a WeightedSet, optionally dividing weights by their sum."""
    if not entries:
        raise EmptySetError(f"weighted set {label!r} has no entries")
    ids = tuple(str(i) for i, _ in entries)
    weights = np.array([float(w) for _, w in entries], dtype=np.float64)
    ws = WeightedSet(label, ids, weights)
    if normalize:
        ws = ws.normalized()
    return ws


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense pairwise constituent similarities, clamped to [0, 1].

    Self-mode (row_ids == col_ids) matrices must be symmetric with a unit
    diagonal; small numerical drift (within 1e-9) is snapped exact so
    downstream invariants hold without tolerance bookkeeping.
    """

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape != (len(self.row_ids), len(self.col_ids)):
            raise NotSquareError(
                f"matrix shape {v.shape} does not match {len(self.row_ids)} row ids "
                f"and {len(self.col_ids)} col ids"
            )
        v = np.clip(v, 0.0, 1.0)
        if self.is_self_mode:
            if np.max(np.abs(v - v.T)) > 1e-9:
                raise AsymmetryError("self-mode similarity matrix is not symmetric")
            if np.max(np.abs(np.diag(v) - 1.0)) > 1e-9:
                raise AsymmetryError("self-mode similarity matrix diagonal is not 1")
            v = (v + v.T) / 2.0
            np.fill_diagonal(v, 1.0)
        object.__setattr__(self, "values", _frozen(v))

    @property
    def is_self_mode(self) -> bool:
        return self.row_ids == self.col_ids

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def align_matrix(matrix: SimilarityMatrix, x: WeightedSet, y: WeightedSet) -> SimilarityMatrix:
    """Project a similarity matrix onto the |x| x |y| block ordered as x by y.

    Self-mode matrices are looked up on both axes; rectangular matrices are
    used as-is when x maps to rows and y to columns, or transposed when the
    orientation is reversed.
    """
    row_index = {cid: k for k, cid in enumerate(matrix.row_ids)}
    col_index = {cid: k for k, cid in enumerate(matrix.col_ids)}

    for cid in x.ids + y.ids:
        if cid not in row_index and cid not in col_index:
            raise UnknownConstituentError(cid)

    if all(i in row_index for i in x.ids) and all(j in col_index for j in y.ids):
        values, x_index, y_index = matrix.values, row_index, col_index
    elif all(i in col_index for i in x.ids) and all(j in row_index for j in y.ids):
        values, x_index, y_index = matrix.values.T, col_index, row_index
    else:
        missing = next(
            (i for i in x.ids if i not in row_index),
            next(j for j in y.ids if j not in col_index),
        )
        raise UnknownConstituentError(missing)

    xi = np.array([x_index[i] for i in x.ids], dtype=np.intp)
    yi = np.array([y_index[j] for j in y.ids], dtype=np.intp)
    return SimilarityMatrix(x.ids, y.ids, values[np.ix_(xi, yi)])


@dataclass(frozen=True)
class MatchStep:
    """One greedy match: transfer of mass between a row and column element."""

    i: int
    j: int
    score: float
    mass: float

    @property
    def contribution(self) -> float:
        return self.mass * self.score


@dataclass(frozen=True)
class MatchTrace:
    """Ordered record of a greedy matching run plus per-side residuals."""

    x_label: str
    y_label: str
    steps: tuple[MatchStep, ...]
    residual_x: np.ndarray
    residual_y: np.ndarray
    total_score: float
    initial_x: np.ndarray = field(repr=False, default=None)
    initial_y: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "residual_x", _frozen(np.asarray(self.residual_x, dtype=np.float64)))
        object.__setattr__(self, "residual_y", _frozen(np.asarray(self.residual_y, dtype=np.float64)))

    @property
    def total_residual(self) -> float:
        """Unmatched weight remaining across both sets."""
        return float(self.residual_x.sum() + self.residual_y.sum())

    def matched_mass(self) -> float:
        return float(sum(s.mass for s in self.steps))


@dataclass(frozen=True)
class MetricResult:
    """A similarity score with its residual, plus optional R/P/F1 components."""

    score: float
    residual: float
    recall: float | None = None
    precision: float | None = None
    f1: float | None = None
    extras: dict = field(default_factory=dict)
