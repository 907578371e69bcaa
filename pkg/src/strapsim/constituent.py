"""Constituent-level similarity backends.

Three ways to obtain the pairwise similarity matrix the set metrics
consume: cosine between feature columns for tabular instances, TF-IDF
cosine for text-described items, and random-forest proximity (see
``forest``) for instances with a learnable structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import re

import numpy as np

from .core import SimilarityMatrix, WeightedSet
from .errors import (
    DuplicateIdError,
    EmptyCorpusError,
    NonPositiveColumnMaxError,
    SchemaMismatchError,
    TooFewRowsError,
    UnknownDocumentError,
    ZeroVectorError,
)

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class FeatureTable:
    """A rectangular numeric table with optional targets and class labels."""

    feature_names: tuple[str, ...]
    values: np.ndarray
    row_ids: tuple[str, ...]
    targets: dict[str, np.ndarray] = field(default_factory=dict)
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape != (len(self.row_ids), len(self.feature_names)):
            raise SchemaMismatchError(
                f"table shape {v.shape} does not match {len(self.row_ids)} rows "
                f"x {len(self.feature_names)} features"
            )
        if not np.all(np.isfinite(v)):
            raise SchemaMismatchError("table contains missing or non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def select(self, names: list[str]) -> "FeatureTable":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureTable(
            tuple(names), self.values[:, idx], self.row_ids, self.targets, self.labels
        )

    def take_rows(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(
            self.feature_names,
            self.values[idx],
            tuple(self.row_ids[i] for i in idx),
            {k: v[idx] for k, v in self.targets.items()},
            tuple(self.labels[i] for i in idx) if self.labels is not None else None,
        )


def one_hot_columns(values: list[str], name: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Expand a categorical column into one indicator column per level.

    All levels are kept (no reference level dropped) so that proximity
    between rows does not depend on which level happened to be first.
    """
    levels = sorted(set(values))
    cols = np.zeros((len(values), len(levels)))
    level_index = {lv: k for k, lv in enumerate(levels)}
    for r, v in enumerate(values):
        cols[r, level_index[v]] = 1.0
    return tuple(f"{name}={lv}" for lv in levels), cols


def max_scale(table: FeatureTable) -> FeatureTable:
    """Divide every feature column by its maximum."""
    maxima = table.values.max(axis=0)
    for name, mx in zip(table.feature_names, maxima):
        if mx <= 0:
            raise NonPositiveColumnMaxError(name)
    return FeatureTable(
        table.feature_names, table.values / maxima, table.row_ids, table.targets, table.labels
    )


def feature_correlation_matrix(table: FeatureTable) -> SimilarityMatrix:
    """Cosine similarity between feature columns, as a self-mode matrix.

    Cosine is invariant to per-column positive scaling, so max-scaled and
    raw non-negative columns give the same matrix.
    """
    if table.n_rows < 2:
        raise TooFewRowsError("feature correlation needs at least 2 rows")
    v = table.values
    norms = np.linalg.norm(v, axis=0)
    for name, nrm in zip(table.feature_names, norms):
        if nrm <= 0:
            raise NonPositiveColumnMaxError(name)
    sim = (v.T @ v) / np.outer(norms, norms)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(table.feature_names, table.feature_names, np.clip(sim, 0.0, 1.0))


def row_cosine_similarity(table: FeatureTable) -> SimilarityMatrix:
    """Cosine similarity between instance rows, as a self-mode matrix."""
    v = table.values
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms <= 0):
        bad = table.row_ids[int(np.argmin(norms))]
        raise ZeroVectorError(f"row {bad!r} has zero norm")
    sim = (v @ v.T) / np.outer(norms, norms)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(table.row_ids, table.row_ids, np.clip(sim, 0.0, 1.0))


def instance_sets(table: FeatureTable, normalize: bool = False) -> list[WeightedSet]:
    """One weighted set per row: features as ids, cell values as weights."""
    sets = []
    for r, rid in enumerate(table.row_ids):
        w = table.values[r]
        if normalize:
            w = w / w.sum()
        sets.append(WeightedSet(rid, table.feature_names, w))
    return sets


# -- TF-IDF -----------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class TfidfIndex:
    """Term-frequency / inverse-document-frequency vectors for a corpus."""

    vocabulary: dict[str, int]
    idf: np.ndarray
    doc_ids: tuple[str, ...]
    vectors: np.ndarray

    def vector(self, doc_id: str) -> np.ndarray:
        try:
            return self.vectors[self.doc_ids.index(doc_id)]
        except ValueError:
            raise UnknownDocumentError(doc_id) from None


def tfidf_build(docs: list[tuple[str, str]]) -> TfidfIndex:
    """Build tf-idf vectors: raw term counts times smoothed idf.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, the add-one convention, so no
    term gets a zero weight merely for appearing everywhere.
    """
    if not docs:
        raise EmptyCorpusError("no documents")
    ids = [d[0] for d in docs]
    if len(set(ids)) != len(ids):
        raise DuplicateIdError("duplicate document id in corpus")
    token_lists = [tokenize(text) for _, text in docs]
    vocab: dict[str, int] = {}
    for toks in token_lists:
        for t in toks:
            if t not in vocab:
                vocab[t] = len(vocab)
    n_docs = len(docs)
    tf = np.zeros((n_docs, max(len(vocab), 1)))
    for r, toks in enumerate(token_lists):
        for t in toks:
            tf[r, vocab[t]] += 1.0
    df = (tf > 0).sum(axis=0)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return TfidfIndex(vocab, idf, tuple(ids), tf * idf)


def tfidf_cosine_matrix(index: TfidfIndex, ids: list[str]) -> SimilarityMatrix:
    """Pairwise cosine between the tf-idf vectors of the requested docs."""
    doc_pos = {d: k for k, d in enumerate(index.doc_ids)}
    rows = []
    for d in ids:
        if d not in doc_pos:
            raise UnknownDocumentError(d)
        rows.append(doc_pos[d])
    v = index.vectors[rows]
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms <= 0):
        bad = ids[int(np.argmin(norms))]
        raise ZeroVectorError(f"document {bad!r} has an empty tf-idf vector")
    sim = (v @ v.T) / np.outer(norms, norms)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(tuple(ids), tuple(ids), np.clip(sim, 0.0, 1.0))
