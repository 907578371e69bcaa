"""Deterministic file IO and the synthetic-universe generator.

All formats are plain UTF-8 CSV (or JSON for matrices). Floats are written
with repr-exact formatting so write -> load round-trips reproduce values
bit for bit on any platform.

Bundled reference datasets live under ``strapsim/data``: the real Iris
measurements plus deterministic synthetic stand-ins for the datasets whose
originals must be fetched by the user (see README). Loaders accept
user-supplied paths with the same schemas.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constituent import FeatureTable, one_hot_columns
from .core import SimilarityMatrix, WeightedSet, make_weighted_set
from .errors import (
    AsymmetryError,
    BadPeriodFormatError,
    ClampWarning,
    DuplicateHoldingError,
    DuplicatePeriodError,
    NegativeWeightError,
    NotSquareError,
    ParseError,
    RowCountMismatchWarning,
    SchemaMismatchError,
    ValidationError,
)
from .evaluation import ReturnSeries

_PERIOD = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


def _fmt(x: float) -> str:
    """Shortest decimal string that parses back to exactly x."""
    return repr(float(x))


def _read_rows(path) -> list[list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [row for row in csv.reader(fh)]


# -- holdings ----------------------------------------------------------------

HOLDINGS_HEADER = ["portfolio_id", "constituent_id", "weight"]


def load_holdings(path, normalize: bool = False) -> list[WeightedSet]:
    """Read portfolio holdings, one weighted set per portfolio in file order."""
    rows = _read_rows(path)
    if not rows or rows[0] != HOLDINGS_HEADER:
        raise SchemaMismatchError(
            f"expected header {','.join(HOLDINGS_HEADER)!r} in {path}"
        )
    portfolios: dict[str, list[tuple[str, float]]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        pid, cid, wtext = row
        key = (pid, cid)
        if key in seen:
            raise DuplicateHoldingError(f"duplicate holding ({pid}, {cid})", line=lineno)
        seen.add(key)
        try:
            w = float(wtext)
        except ValueError:
            raise ParseError(f"bad weight {wtext!r}", line=lineno) from None
        if w < 0:
            raise NegativeWeightError(f"line {lineno}: negative weight {wtext}")
        portfolios.setdefault(pid, []).append((cid, w))
    return [make_weighted_set(pid, entries, normalize) for pid, entries in portfolios.items()]


def write_holdings(path, sets: list[WeightedSet]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(HOLDINGS_HEADER) + "\n")
        for ws in sets:
            for cid, w in ws.entries():
                fh.write(f"{ws.label},{cid},{_fmt(w)}\n")


# -- similarity matrices -----------------------------------------------------

def load_matrix(path) -> SimilarityMatrix:
    """Read a similarity matrix from CSV (ids on both margins) or JSON.

    Values outside [0, 1] are clamped with a warning. Self-mode matrices
    tolerate asymmetry and diagonal drift up to 1e-6, which is symmetrized
    away; anything larger is an error.
    """
    path = Path(path)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if "ids" in doc:
            row_ids = col_ids = tuple(doc["ids"])
        else:
            row_ids = tuple(doc["row_ids"])
            col_ids = tuple(doc["col_ids"])
        values = np.asarray(doc["values"], dtype=np.float64)
    else:
        rows = _read_rows(path)
        if not rows or rows[0][0] != "":
            raise SchemaMismatchError("matrix CSV must start with an empty corner cell")
        col_ids = tuple(rows[0][1:])
        row_ids = tuple(r[0] for r in rows[1:])
        try:
            values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        except ValueError as exc:
            raise ParseError(f"bad matrix value: {exc}") from None

    if values.ndim != 2 or values.shape != (len(row_ids), len(col_ids)):
        raise NotSquareError(
            f"matrix shape {values.shape} does not match its {len(row_ids)} x "
            f"{len(col_ids)} id margins"
        )
    if np.any(values < -1e-12) or np.any(values > 1.0 + 1e-12):
        warnings.warn(
            f"{int(np.sum((values < 0) | (values > 1)))} similarity values "
            "outside [0, 1] were clamped",
            ClampWarning,
        )
        values = np.clip(values, 0.0, 1.0)
    if row_ids == col_ids:
        if np.max(np.abs(values - values.T)) > 1e-6:
            raise AsymmetryError("self-mode matrix asymmetric beyond 1e-6")
        if np.max(np.abs(np.diag(values) - 1.0)) > 1e-6:
            raise AsymmetryError("self-mode matrix diagonal differs from 1 beyond 1e-6")
        values = (values + values.T) / 2.0
        np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(row_ids, col_ids, values)


def write_matrix(path, matrix: SimilarityMatrix) -> None:
    path = Path(path)
    if path.suffix == ".json":
        if matrix.is_self_mode:
            doc = {"ids": list(matrix.row_ids), "values": matrix.values.tolist()}
        else:
            doc = {
                "row_ids": list(matrix.row_ids),
                "col_ids": list(matrix.col_ids),
                "values": matrix.values.tolist(),
            }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, separators=(",", ":"))
            fh.write("\n")
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("," + ",".join(matrix.col_ids) + "\n")
        for rid, row in zip(matrix.row_ids, matrix.values):
            fh.write(rid + "," + ",".join(_fmt(v) for v in row) + "\n")


# -- return series ------------------------------------------------------------

RETURNS_HEADER = ["entity_id", "period", "return"]


def load_returns(path) -> list[ReturnSeries]:
    """Read monthly return observations grouped per entity."""
    rows = _read_rows(path)
    if not rows or rows[0] != RETURNS_HEADER:
        raise SchemaMismatchError(f"expected header {','.join(RETURNS_HEADER)!r} in {path}")
    data: dict[str, dict[str, float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        eid, period, rtext = row
        if not _PERIOD.match(period):
            raise BadPeriodFormatError(f"line {lineno}: bad period {period!r}, want YYYY-MM")
        series = data.setdefault(eid, {})
        if period in series:
            raise DuplicatePeriodError(f"line {lineno}: duplicate period ({eid}, {period})")
        try:
            series[period] = float(rtext)
        except ValueError:
            raise ParseError(f"bad return {rtext!r}", line=lineno) from None
    out = []
    for eid, series in data.items():
        periods = tuple(sorted(series))
        out.append(ReturnSeries(eid, periods, np.array([series[p] for p in periods])))
    return out


def write_returns(path, series: list[ReturnSeries]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RETURNS_HEADER) + "\n")
        for rs in series:
            for period, value in zip(rs.periods, rs.values):
                fh.write(f"{rs.entity_id},{period},{_fmt(value)}\n")


def month_range(start: str, count: int) -> list[str]:
    if not _PERIOD.match(start):
        raise BadPeriodFormatError(f"bad period {start!r}, want YYYY-MM")
    year, month = int(start[:4]), int(start[5:7])
    out = []
    for _ in range(count):
        out.append(f"{year:04d}-{month:02d}")
        month += 1
        if month > 12:
            month, year = 1, year + 1
    return out


# -- reference datasets --------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    filename: str
    features: tuple[str, ...]
    label: str | None = None
    target: str | None = None
    expected_rows: int | None = None
    id_column: str | None = None
    missing_marker: str | None = None


DATASETS = {
    "iris": DatasetSpec(
        filename="iris.csv",
        features=("sepal_length", "sepal_width", "petal_length", "petal_width"),
        label="species",
        expected_rows=150,
    ),
    "breast-cancer": DatasetSpec(
        filename="breast_cancer.csv",
        features=(
            "clump_thickness",
            "uniformity_cell_size",
            "uniformity_cell_shape",
            "marginal_adhesion",
            "single_epithelial_cell_size",
            "bare_nuclei",
            "bland_chromatin",
            "normal_nucleoli",
            "mitoses",
        ),
        label="class",
        expected_rows=699,
        missing_marker="?",
    ),
    "big-mac": DatasetSpec(
        filename="big_mac.csv",
        features=(
            "bread",
            "rice",
            "food_index",
            "bus",
            "apt",
            "teach_gi",
            "teach_ni",
            "tax_rate",
            "teach_hours",
        ),
        target="big_mac",
        expected_rows=69,
        id_column="city",
    ),
}


def bundled_path(filename: str) -> Path:
    return Path(importlib.resources.files("strapsim") / "data" / filename)


def load_feature_csv(path, spec: DatasetSpec) -> FeatureTable:
    rows = _read_rows(path)
    if not rows:
        raise SchemaMismatchError(f"empty file {path}")
    header = rows[0]
    wanted = list(spec.features)
    extra = [c for c in (spec.id_column, spec.label, spec.target) if c]
    for col in wanted + extra:
        if col not in header:
            raise SchemaMismatchError(f"missing column {col!r} in {path}")
    pos = {c: header.index(c) for c in header}

    n_raw = 0
    dropped = 0
    values, labels, targets, row_ids = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        n_raw += 1
        cells = [row[pos[c]] for c in wanted]
        if spec.missing_marker is not None and spec.missing_marker in cells:
            dropped += 1
            continue
        try:
            values.append([float(v) for v in cells])
        except ValueError as exc:
            raise ParseError(f"bad numeric value: {exc}", line=lineno) from None
        if spec.label:
            labels.append(row[pos[spec.label]])
        if spec.target:
            targets.append(float(row[pos[spec.target]]))
        row_ids.append(row[pos[spec.id_column]] if spec.id_column else f"row{n_raw:04d}")

    if spec.expected_rows is not None and n_raw != spec.expected_rows:
        warnings.warn(
            f"{path}: expected {spec.expected_rows} rows, found {n_raw}",
            RowCountMismatchWarning,
        )
    if dropped:
        warnings.warn(
            f"{path}: dropped {dropped} rows with missing cells", RowCountMismatchWarning
        )
    return FeatureTable(
        feature_names=tuple(wanted),
        values=np.array(values),
        row_ids=tuple(row_ids),
        targets={spec.target: np.array(targets)} if spec.target else {},
        labels=tuple(labels) if spec.label else None,
    )


def load_dataset(name: str, path=None) -> FeatureTable:
    """Load a named reference dataset, or the same schema from a custom path."""
    if name not in DATASETS:
        raise SchemaMismatchError(
            f"unknown dataset {name!r}; expected one of {sorted(DATASETS)}"
        )
    spec = DATASETS[name]
    return load_feature_csv(path or bundled_path(spec.filename), spec)


@dataclass(frozen=True)
class MovieData:
    """User-movie ratings plus per-movie text for the recommendation task."""

    ratings: tuple[tuple[str, str, float], ...]
    texts: dict[str, str]


def load_movie_ratings(path) -> list[tuple[str, str, float]]:
    rows = _read_rows(path)
    if not rows or rows[0] != ["user_id", "movie_id", "rating"]:
        raise SchemaMismatchError(f"expected header user_id,movie_id,rating in {path}")
    seen = set()
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        uid, mid, rtext = row
        if (uid, mid) in seen:
            raise DuplicateHoldingError(f"duplicate rating ({uid}, {mid})", line=lineno)
        seen.add((uid, mid))
        try:
            out.append((uid, mid, float(rtext)))
        except ValueError:
            raise ParseError(f"bad rating {rtext!r}", line=lineno) from None
    return out


def load_movie_metadata(path) -> dict[str, str]:
    rows = _read_rows(path)
    if not rows or rows[0] != ["movie_id", "description", "tagline"]:
        raise SchemaMismatchError(f"expected header movie_id,description,tagline in {path}")
    texts = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        mid, desc, tagline = row
        if mid in texts:
            raise DuplicateHoldingError(f"duplicate movie {mid}", line=lineno)
        texts[mid] = f"{desc} {tagline}".strip()
    return texts


def load_movies(ratings_path=None, metadata_path=None) -> MovieData:
    ratings_path = ratings_path or bundled_path("movie_ratings.csv")
    metadata_path = metadata_path or bundled_path("movie_metadata.csv")
    return MovieData(
        ratings=tuple(load_movie_ratings(ratings_path)),
        texts=load_movie_metadata(metadata_path),
    )


# -- synthetic universe --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticUniverseSpec:
    """Knobs for the planted-factor portfolio universe.

    ``overlap`` in [0, 1] concentrates portfolio sampling on a shared
    popular core (higher means more common holdings); ``noise`` scales
    idiosyncratic monthly return noise relative to factor volatility.
    ``concordant`` switches to a degenerate universe whose constituent
    similarities equal return correlations exactly, used to sanity-check
    the ranking study end to end.
    """

    n_portfolios: int = 20
    n_constituents: int = 2000
    n_factors: int = 4
    overlap: float = 0.5
    noise: float = 0.1
    seed: int = 42
    mean_holdings: int = 120
    n_periods: int = 26
    start_period: str = "2022-02"
    concordant: bool = False

    def __post_init__(self):
        if min(self.n_portfolios, self.n_constituents, self.n_factors) < 1:
            raise ValidationError("all universe counts must be >= 1")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValidationError("overlap must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticUniverse:
    holdings: list[WeightedSet]
    features: FeatureTable
    categoricals: dict[str, tuple[str, ...]]
    returns: list[ReturnSeries]
    factor_returns: np.ndarray = field(repr=False, default=None)


FACTOR_VOL = 0.03


def generate_synthetic_universe(spec: SyntheticUniverseSpec) -> SyntheticUniverse:
    """Deterministically build holdings, constituent features, and returns.

    Constituents carry factor loadings concentrated on one sector;
    portfolios draw constituents with sector-tilted, popularity-weighted
    probabilities and hold normalized lognormal weights. Monthly portfolio
    returns are the weighted factor returns plus idiosyncratic noise, so
    portfolios with aligned exposures co-move.
    """
    if spec.concordant:
        return _generate_concordant(spec)
    rng = np.random.default_rng(spec.seed)
    n_c, n_f, n_p = spec.n_constituents, spec.n_factors, spec.n_portfolios

    sectors = rng.integers(0, n_f, size=n_c)
    loadings = 0.08 * rng.random((n_c, n_f))
    loadings[np.arange(n_c), sectors] += 0.85 + 0.3 * rng.random(n_c)

    popularity = rng.permutation(np.arange(1, n_c + 1)).astype(np.float64) ** -1.1

    duration = 1.0 + 9.0 * rng.random(n_c)
    coupon = 1.0 + 7.0 * rng.random(n_c)
    spread_per_factor = 40.0 + 160.0 * rng.random(n_f)
    oas = 30.0 + loadings @ spread_per_factor + 12.0 * rng.standard_normal(n_c)
    oas = np.maximum(oas, 5.0)
    yld = 1.5 + oas / 100.0 + 0.12 * duration + 0.05 * rng.standard_normal(n_c)

    cids = tuple(f"c{k:05d}" for k in range(n_c))
    feature_names = tuple(f"loading_{f}" for f in range(n_f)) + ("duration", "coupon")
    features = FeatureTable(
        feature_names=feature_names,
        values=np.column_stack([loadings, duration, coupon]),
        row_ids=cids,
        targets={"oas": oas, "yield": yld},
    )
    categoricals = {"sector": tuple(f"s{int(s)}" for s in sectors)}

    holdings = []
    exposures = np.zeros((n_p, n_f))
    for p in range(n_p):
        tilt = rng.dirichlet(np.full(n_f, 1.2))
        prob = popularity ** (3.0 * spec.overlap) * tilt[sectors]
        prob /= prob.sum()
        size = min(n_c, max(5, int(round(rng.normal(spec.mean_holdings, spec.mean_holdings * 0.15)))))
        chosen = rng.choice(n_c, size=size, replace=False, p=prob)
        weights = rng.lognormal(0.0, 0.8, size=size)
        weights /= weights.sum()
        label = f"p{p:03d}"
        holdings.append(WeightedSet(label, tuple(cids[c] for c in chosen), weights))
        exposures[p] = weights @ loadings[chosen]

    factor_returns = FACTOR_VOL * rng.standard_normal((spec.n_periods, n_f))
    idio = spec.noise * FACTOR_VOL * rng.standard_normal((spec.n_periods, n_p))
    portfolio_returns = factor_returns @ exposures.T + idio

    periods = tuple(month_range(spec.start_period, spec.n_periods))
    returns = [
        ReturnSeries(holdings[p].label, periods, portfolio_returns[:, p].copy())
        for p in range(n_p)
    ]
    return SyntheticUniverse(holdings, features, categoricals, returns, factor_returns)


def _generate_concordant(spec: SyntheticUniverseSpec) -> SyntheticUniverse:
    """One constituent per portfolio on an angular spectrum.

    Returns are cosines over a full cycle of uniformly spaced phases, so the
    sample correlation between entities i and j is exactly cos(theta_i -
    theta_j) -- the same value as the cosine similarity of their (cos, sin)
    feature vectors. Rankings by similarity and by return correlation
    therefore coincide for every entity.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_portfolios
    theta = np.sort(rng.uniform(0.05, np.pi / 2 - 0.05, size=n))
    cids = tuple(f"c{k:05d}" for k in range(n))
    features = FeatureTable(
        feature_names=("f_cos", "f_sin"),
        values=np.column_stack([np.cos(theta), np.sin(theta)]),
        row_ids=cids,
        targets={},
    )
    holdings = [WeightedSet(f"p{k:03d}", (cids[k],), np.array([1.0])) for k in range(n)]
    phases = 2.0 * np.pi * np.arange(spec.n_periods) / spec.n_periods
    series = 0.02 * np.cos(theta[:, None] + phases[None, :])
    periods = tuple(month_range(spec.start_period, spec.n_periods))
    returns = [ReturnSeries(holdings[k].label, periods, series[k].copy()) for k in range(n)]
    return SyntheticUniverse(holdings, features, {}, returns, None)


def universe_feature_table(universe: SyntheticUniverse) -> FeatureTable:
    """Numeric features plus one-hot categorical columns, for forest training."""
    table = universe.features
    names = list(table.feature_names)
    blocks = [table.values]
    for cname, values in universe.categoricals.items():
        hot_names, hot = one_hot_columns(list(values), cname)
        names.extend(hot_names)
        blocks.append(hot)
    return FeatureTable(
        tuple(names), np.column_stack(blocks), table.row_ids, table.targets, table.labels
    )


def write_universe(universe: SyntheticUniverse, out_dir) -> dict[str, Path]:
    """Emit holdings/features/returns in the ingest formats; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "holdings": out_dir / "holdings.csv",
        "features": out_dir / "features.csv",
        "returns": out_dir / "returns.csv",
    }
    write_holdings(paths["holdings"], universe.holdings)
    write_returns(paths["returns"], universe.returns)

    table = universe.features
    cat_names = list(universe.categoricals)
    target_names = list(table.targets)
    header = ["constituent_id"] + cat_names + list(table.feature_names) + target_names
    with open(paths["features"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r, rid in enumerate(table.row_ids):
            cells = [rid]
            cells += [universe.categoricals[c][r] for c in cat_names]
            cells += [_fmt(v) for v in table.values[r]]
            cells += [_fmt(table.targets[t][r]) for t in target_names]
            fh.write(",".join(cells) + "\n")
    return paths


def load_universe_features(path) -> tuple[FeatureTable, dict[str, tuple[str, ...]]]:
    """Read a features CSV back into a numeric table plus categorical columns."""
    rows = _read_rows(path)
    if not rows or rows[0][0] != "constituent_id":
        raise SchemaMismatchError(f"expected constituent_id as first column in {path}")
    header = rows[0]
    body = [r for r in rows[1:] if r]
    row_ids = tuple(r[0] for r in body)

    numeric_cols: dict[str, list[float]] = {}
    categoricals: dict[str, tuple[str, ...]] = {}
    for k, name in enumerate(header[1:], start=1):
        raw = [r[k] for r in body]
        try:
            numeric_cols[name] = [float(v) for v in raw]
        except ValueError:
            categoricals[name] = tuple(raw)

    target_names = [n for n in ("oas", "yield") if n in numeric_cols]
    feature_names = [n for n in numeric_cols if n not in target_names]
    table = FeatureTable(
        feature_names=tuple(feature_names),
        values=np.column_stack([numeric_cols[n] for n in feature_names]),
        row_ids=row_ids,
        targets={t: np.array(numeric_cols[t]) for t in target_names},
    )
    return table, categoricals
