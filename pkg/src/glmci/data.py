"""CSV ingestion: typed columns, imputation and reference-level encoding.

Deterministic by construction: column order follows the header, one-hot
blocks expand in place, and dummy columns follow first-observed level
order with the first observed level dropped as the reference. Numeric
missing values take the column median; categorical missing values take the
most frequent level. Every imputation is logged on the returned Dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "NAN", "?", "NULL", "null"})


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    target_name: str
    encoding_map: dict[str, list[str]] = field(default_factory=dict)
    imputation_log: dict[str, dict] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _parse_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def _sanitize_level(level: str) -> str:
    return level.strip().replace(" ", ".")


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate column names {dupes}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, header has {len(header)}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def load_csv(
    path: str,
    target: str,
    drop_columns=(),
    categorical_columns=None,
    missing_tokens=MISSING_TOKENS,
) -> Dataset:
    """Load a modeling table from CSV.

    categorical_columns=None auto-detects: any column with a non-missing
    cell that fails float parsing is treated as categorical. The target
    must be numeric and complete.
    """
    header, rows = _read_table(path)
    drop = set(drop_columns)
    unknown = (drop | {target}) - set(header)
    if unknown:
        raise DataError(f"{path}: columns not in header: {sorted(unknown)}")
    if categorical_columns is not None:
        missing_cats = set(categorical_columns) - set(header)
        if missing_cats:
            raise DataError(f"{path}: categorical columns not in header: {sorted(missing_cats)}")

    columns = {name: [row[i].strip() for row in rows] for i, name in enumerate(header)}
    n = len(rows)

    y = np.empty(n)
    for i, cell in enumerate(columns[target]):
        if cell in missing_tokens:
            raise DataError(f"{path}: target {target!r} missing at row {i + 2}")
        val = _parse_float(cell)
        if val is None:
            raise DataError(f"{path}: target {target!r} not numeric at row {i + 2}: {cell!r}")
        y[i] = val

    feature_cols = [h for h in header if h != target and h not in drop]

    def is_categorical(name: str) -> bool:
        if categorical_columns is not None:
            return name in set(categorical_columns)
        return any(
            cell not in missing_tokens and _parse_float(cell) is None
            for cell in columns[name]
        )

    feature_names: list[str] = []
    blocks: list[np.ndarray] = []
    encoding_map: dict[str, list[str]] = {}
    imputation_log: dict[str, dict] = {}

    for name in feature_cols:
        cells = columns[name]
        if is_categorical(name):
            observed = [c for c in cells if c not in missing_tokens]
            if not observed:
                raise DataError(f"{path}: column {name!r} has no observed values")
            levels: list[str] = []
            counts: dict[str, int] = {}
            for c in observed:
                if c not in counts:
                    levels.append(c)
                counts[c] = counts.get(c, 0) + 1
            n_missing = n - len(observed)
            if n_missing:
                fill = max(levels, key=lambda lv: counts[lv])  # first-observed wins ties
                cells = [fill if c in missing_tokens else c for c in cells]
                imputation_log[name] = {"count": n_missing, "value": fill}
            encoding_map[name] = levels
            for level in levels[1:]:
                feature_names.append(f"{name}_{_sanitize_level(level)}")
                blocks.append(np.array([1.0 if c == level else 0.0 for c in cells]))
        else:
            vals = np.empty(n)
            missing_idx = []
            for i, cell in enumerate(cells):
                if cell in missing_tokens:
                    missing_idx.append(i)
                    vals[i] = np.nan
                    continue
                v = _parse_float(cell)
                if v is None:
                    raise DataError(
                        f"{path}: column {name!r} expected numeric at row {i + 2}: {cell!r}"
                    )
                vals[i] = v
            if missing_idx:
                observed_vals = vals[~np.isnan(vals)]
                if observed_vals.size == 0:
                    raise DataError(f"{path}: column {name!r} has no observed values")
                med = float(np.median(observed_vals))
                vals[np.isnan(vals)] = med
                imputation_log[name] = {"count": len(missing_idx), "value": med}
            feature_names.append(name)
            blocks.append(vals)

    if not blocks:
        raise DataError(f"{path}: no feature columns remain after drops")
    X = np.column_stack(blocks)
    return Dataset(
        X=X,
        y=y,
        feature_names=feature_names,
        target_name=target,
        encoding_map=encoding_map,
        imputation_log=imputation_log,
    )


def design_with_intercept(data: Dataset):
    """Design matrix with a leading ones column, its names and penalty factors."""
    X = np.hstack([np.ones((data.n, 1)), data.X])
    names = ["intercept"] + list(data.feature_names)
    factors = np.ones(X.shape[1])
    factors[0] = 0.0
    return X, names, factors
