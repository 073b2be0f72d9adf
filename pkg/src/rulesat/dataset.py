"""Tabular ingestion and binarization.

Raw columns come in three kinds. Binary columns yield the column and its
complement, categorical columns are one-hot encoded, and continuous columns
are compared against a handful of thresholds in both directions
(``x > t`` and ``x <= t``). The resulting :class:`FeatureMap` records every
indicator so that unseen raw rows can be mapped to the same binary layout.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

BINARY = "binary"
CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
KINDS = (BINARY, CATEGORICAL, CONTINUOUS)

IDENTITY = "identity"
COMPLEMENT = "complement"
ONEHOT = "onehot"
GT = "gt"
LE = "le"
TRANSFORMS = (IDENTITY, COMPLEMENT, ONEHOT, GT, LE)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})
MAP_FORMAT = "rulesat.featuremap"


class DatasetError(ValueError):
    """Malformed table, data file or feature map."""


def is_missing(cell: Any) -> bool:
    if cell is None:
        return True
    if isinstance(cell, float) and math.isnan(cell):
        return True
    return isinstance(cell, str) and cell.strip().lower() in MISSING_TOKENS


def _as_float(cell: Any) -> float | None:
    if isinstance(cell, (bool, int, float, np.integer, np.floating)):
        return float(cell)
    try:
        return float(str(cell).strip())
    except ValueError:
        return None


def category_key(cell: Any) -> str:
    """Canonical text for a categorical cell, so ``3``, ``"3"`` and ``"3.0"`` agree."""
    v = _as_float(cell)
    if v is None or not math.isfinite(v):
        return str(cell).strip()
    return str(int(v)) if v.is_integer() else repr(v)


def format_threshold(t: float) -> str:
    """Six significant digits; integral values keep a trailing ``.0``."""
    text = format(t, ".6g")
    return text + ".0" if text.lstrip("-").isdigit() else text


def infer_kind(values: Sequence[Any], max_categories: int = 10) -> str:
    """Binary if the values are a subset of {0, 1}; categorical if any value
    is non-numeric or there are at most `max_categories` distinct numbers;
    continuous otherwise. Missing cells are ignored."""
    nums = [_as_float(v) for v in values if not is_missing(v)]
    if any(x is None for x in nums):
        return CATEGORICAL
    distinct = set(nums)
    if distinct <= {0.0, 1.0}:
        return BINARY
    if len(distinct) <= max_categories:
        return CATEGORICAL
    return CONTINUOUS


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    values: tuple


@dataclass(frozen=True)
class RawTable:
    columns: tuple[Column, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.columns:
            raise DatasetError("table has no feature columns")
        n = len(self.labels)
        if n == 0:
            raise DatasetError("table is empty")
        seen = set()
        for col in self.columns:
            if col.kind not in KINDS:
                raise DatasetError(f"column {col.name!r}: unknown kind {col.kind!r}")
            if len(col.values) != n:
                raise DatasetError(
                    f"column {col.name!r} has {len(col.values)} values, expected {n}")
            if col.name in seen:
                raise DatasetError(f"duplicate column name {col.name!r}")
            seen.add(col.name)
        if any(v not in (0, 1) for v in self.labels):
            raise DatasetError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def row(self, i: int) -> dict[str, Any]:
        return {c.name: c.values[i] for c in self.columns}


def make_table(columns: Mapping[str, Sequence[Any]], labels: Sequence[int],
               kinds: Mapping[str, str] | None = None,
               max_categories: int = 10) -> RawTable:
    """Build a RawTable from in-memory columns, inferring undeclared kinds."""
    kinds = dict(kinds or {})
    unknown = set(kinds) - set(columns)
    if unknown:
        raise DatasetError(f"kind overrides name unknown columns {sorted(unknown)}")
    cols = tuple(
        Column(name, kinds.get(name) or infer_kind(vals, max_categories), tuple(vals))
        for name, vals in columns.items())
    return RawTable(cols, tuple(int(v) for v in labels))


def coerce_labels(cells: Sequence[Any], positive: Any = None,
                  column: str = "label") -> list[int]:
    """Map label cells to {0,1}. With `positive`, that value maps to 1 and
    every other value to 0; without it cells must already be 0/1."""
    out = []
    pos = None if positive is None else category_key(positive)
    for i, cell in enumerate(cells):
        if is_missing(cell):
            raise DatasetError(f"label column {column!r}: missing label in row {i}")
        if pos is not None:
            out.append(int(category_key(cell) == pos))
            continue
        v = _as_float(cell)
        if v not in (0.0, 1.0):
            raise DatasetError(
                f"label column {column!r}: value {cell!r} in row {i} is not 0/1; "
                "declare which value is positive")
        out.append(int(v))
    return out


def load_csv(path: str | Path, label: str, *, delimiter: str = ",",
             kinds: Mapping[str, str] | None = None, positive: Any = None,
             max_categories: int = 10,
             ignore: Sequence[str] = ()) -> RawTable:
    """Read a delimited file with a header row into a RawTable."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DatasetError(f"{path}: cannot read: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if label not in header:
        raise DatasetError(f"{path}: label column {label!r} not in header {header}")
    if not body:
        raise DatasetError(f"{path}: no data rows")
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DatasetError(
                f"{path}: line {lineno} has {len(r)} fields, header has {len(header)}")
    li = header.index(label)
    labels = coerce_labels([r[li] for r in body], positive, label)
    skip = set(ignore) | {label}
    columns = {h: [r[i].strip() for r in body]
               for i, h in enumerate(header) if h not in skip}
    try:
        return make_table(columns, labels, kinds, max_categories)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class BinFeature:
    """One indicator column: a transform applied to a source column."""

    column: str
    transform: str
    value: float | str | None = None

    def __post_init__(self) -> None:
        if self.transform not in TRANSFORMS:
            raise DatasetError(f"unknown transform {self.transform!r}")
        if self.transform in (GT, LE) and not isinstance(self.value, float):
            object.__setattr__(self, "value", float(self.value))

    def label(self, negated: bool = False) -> str:
        t, c = self.transform, self.column
        if t == IDENTITY:
            return f"not {c}" if negated else c
        if t == COMPLEMENT:
            return c if negated else f"not {c}"
        if t == ONEHOT:
            return f"{c} {'!=' if negated else '='} {self.value}"
        if t == GT:
            return f"{c} {'<=' if negated else '>'} {format_threshold(self.value)}"
        return f"{c} {'>' if negated else '<='} {format_threshold(self.value)}"

    def evaluate(self, v: Any) -> int:
        t = self.transform
        if t == IDENTITY:
            return int(v == 1)
        if t == COMPLEMENT:
            return int(v == 0)
        if t == ONEHOT:
            return int(v == self.value)
        if t == GT:
            return int(v > self.value)
        return int(v <= self.value)


@dataclass(frozen=True)
class SourceColumn:
    name: str
    kind: str
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureMap:
    columns: tuple[SourceColumn, ...]
    features: tuple[BinFeature, ...]

    def __post_init__(self) -> None:
        if len(set(self.features)) != len(self.features):
            raise DatasetError("feature map contains duplicate entries")
        names = {c.name for c in self.columns}
        for f in self.features:
            if f.column not in names:
                raise DatasetError(f"feature refers to unknown column {f.column!r}")
        pairs = {(f.column, f.transform, f.value) for f in self.features}
        for f in self.features:
            if f.transform in (GT, LE):
                other = LE if f.transform == GT else GT
                if (f.column, other, f.value) not in pairs:
                    raise DatasetError(
                        f"threshold {f.value} on {f.column!r} lacks its {other} partner")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.label() for f in self.features]

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d: dict[str, Any] = {"column": f.column, "transform": f.transform}
            if f.transform in (GT, LE):
                d["threshold"] = f.value
            elif f.transform == ONEHOT:
                d["category"] = f.value
            feats.append(d)
        return {
            "format": MAP_FORMAT,
            "version": 1,
            "columns": [{"name": c.name, "kind": c.kind,
                         **({"categories": list(c.categories)} if c.kind == CATEGORICAL else {})}
                        for c in self.columns],
            "features": feats,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> FeatureMap:
        if d.get("format") != MAP_FORMAT:
            raise DatasetError("not a feature map (format tag missing)")
        try:
            cols = tuple(SourceColumn(c["name"], c["kind"], tuple(c.get("categories", ())))
                         for c in d["columns"])
            feats = tuple(BinFeature(f["column"], f["transform"],
                                     f.get("threshold", f.get("category")))
                          for f in d["features"])
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"malformed feature map: {exc}") from exc
        return cls(cols, feats)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> FeatureMap:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"{path}: cannot read feature map: {exc}") from exc


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """An n x m 0/1 feature matrix with 0/1 labels.

    `rows` optionally records which rows of the source table survived
    (rows with missing values may be dropped during binarization).
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    rows: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.uint8, copy=True)
        y = np.array(self.y, dtype=np.uint8, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError(f"feature matrix must be n x m with n, m >= 1, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DatasetError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if X.max() > 1 or y.max() > 1:
            raise DatasetError("features and labels must be 0/1")
        if len(self.names) != X.shape[1]:
            raise DatasetError(f"{X.shape[1]} features but {len(self.names)} names")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: Sequence[int]) -> BinaryDataset:
        idx = np.asarray(idx, dtype=int)
        rows = None if self.rows is None else tuple(self.rows[i] for i in idx)
        return BinaryDataset(self.X[idx], self.y[idx], self.names, rows)

    def with_labels(self, y: Sequence[int]) -> BinaryDataset:
        return BinaryDataset(self.X, np.asarray(y), self.names, self.rows)

    def save_csv(self, path: str | Path, label: str = "label") -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.names, label])
            for row, yi in zip(self.X, self.y):
                w.writerow([*row.tolist(), int(yi)])


def load_binary_csv(path: str | Path, label: str, delimiter: str = ",") -> BinaryDataset:
    """Read an already-binarized file: every non-label column must be 0/1.

    Columns are used as-is (no complements, constant columns kept)."""
    raw = load_csv(path, label, delimiter=delimiter)
    bad = [c.name for c in raw.columns
           if any(_as_float(v) not in (0.0, 1.0) for v in c.values)]
    if bad:
        raise DatasetError(f"{path}: columns {bad} are not 0/1")
    X = np.array([[int(_as_float(v)) for v in c.values] for c in raw.columns]).T
    return BinaryDataset(X, np.array(raw.labels), tuple(raw.names))


def bundled_path(name: str) -> Path:
    """Path of a dataset shipped with the package (``iris``, ``toy``)."""
    p = resources.files("rulesat") / "data" / f"{name}.csv"
    if not p.is_file():
        raise DatasetError(f"no bundled dataset named {name!r}")
    return Path(str(p))


# -- binarization -----------------------------------------------------------

def quantile_thresholds(values: Sequence[float], q: int) -> list[float]:
    """Data-valued quantile cuts at 1/q, 2/q, ..., 1.

    The cut for level p is the smallest value v with fraction(values <= v) >= p.
    Columns with fewer than q distinct values use every distinct value."""
    v = np.sort(np.asarray(values, dtype=float))
    uniq = np.unique(v)
    if len(uniq) < q:
        return uniq.tolist()
    n = len(v)
    cuts = {float(v[-(-t * n // q) - 1]) for t in range(1, q + 1)}
    return sorted(cuts)


def uniform_thresholds(values: Sequence[float], q: int) -> list[float]:
    """q evenly spaced interior cuts of the value range."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo == hi:
        return []
    return [lo + t * (hi - lo) / (q + 1) for t in range(1, q + 1)]


def _parse_cell(cell: Any, kind: str, column: str) -> float | str:
    if kind == CATEGORICAL:
        return category_key(cell)
    v = _as_float(cell)
    if v is None:
        raise DatasetError(f"column {column!r}: non-numeric value {cell!r}")
    if kind == BINARY and v not in (0.0, 1.0):
        raise DatasetError(f"binary column {column!r}: value {cell!r} is not 0/1")
    return v


def binarize(raw: RawTable, thresholds: int = 10, strategy: str = "quantile",
             missing: str = "strict") -> tuple[BinaryDataset, FeatureMap]:
    """Binarize every column of `raw`.

    Parameters
    ----------
    raw : RawTable
    thresholds : int
        Number of cut points per continuous column.
    strategy : {"quantile", "uniform"}
    missing : {"strict", "drop"}
        ``strict`` rejects tables with missing cells, ``drop`` removes the rows.

    Returns
    -------
    (BinaryDataset, FeatureMap)
        Indicators that are constant over the data are dropped, as are
        indicators duplicating an earlier column. Paired indicators (a
        column and its complement, ``> t`` and ``<= t``) are kept or
        dropped together.
    """
    if thresholds < 1:
        raise DatasetError("thresholds per feature must be >= 1")
    if strategy not in ("quantile", "uniform"):
        raise DatasetError(f"unknown threshold strategy {strategy!r}")
    if missing not in ("strict", "drop"):
        raise DatasetError(f"unknown missing-value policy {missing!r}")

    bad = sorted({i for c in raw.columns for i, v in enumerate(c.values) if is_missing(v)})
    if bad and missing == "strict":
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise DatasetError(f"missing values in rows {shown}")
    keep = [i for i in range(raw.n_rows) if i not in set(bad)]
    if not keep:
        raise DatasetError("every row has a missing value")

    thresholds_fn = quantile_thresholds if strategy == "quantile" else uniform_thresholds
    sources: list[SourceColumn] = []
    groups: list[list[tuple[BinFeature, np.ndarray]]] = []
    for col in raw.columns:
        vals = [_parse_cell(col.values[i], col.kind, col.name) for i in keep]
        if col.kind == BINARY:
            arr = np.asarray(vals)
            sources.append(SourceColumn(col.name, BINARY))
            groups.append([(BinFeature(col.name, IDENTITY), arr == 1),
                           (BinFeature(col.name, COMPLEMENT), arr == 0)])
        elif col.kind == CATEGORICAL:
            cats = sorted(set(vals))
            sources.append(SourceColumn(col.name, CATEGORICAL, tuple(cats)))
            arr = np.asarray(vals, dtype=object)
            for c in cats:
                groups.append([(BinFeature(col.name, ONEHOT, c), arr == c)])
        else:
            arr = np.asarray(vals, dtype=float)
            sources.append(SourceColumn(col.name, CONTINUOUS))
            for t in thresholds_fn(arr, thresholds):
                groups.append([(BinFeature(col.name, GT, t), arr > t),
                               (BinFeature(col.name, LE, t), arr <= t)])

    kept: list[BinFeature] = []
    cols: list[np.ndarray] = []
    seen: set[bytes] = set()
    for group in groups:
        arrays = [a.astype(np.uint8) for _, a in group]
        keys = [a.tobytes() for a in arrays]
        if any(a.min() == a.max() for a in arrays) or any(k in seen for k in keys):
            continue
        for (feat, _), a, k in zip(group, arrays, keys):
            kept.append(feat)
            cols.append(a)
            seen.add(k)
    if not kept:
        raise DatasetError("binarization produced no informative feature")

    fmap = FeatureMap(tuple(sources), tuple(kept))
    X = np.column_stack(cols)
    y = np.asarray([raw.labels[i] for i in keep])
    return BinaryDataset(X, y, tuple(fmap.names), tuple(keep)), fmap


def apply_map(fmap: FeatureMap, row: Mapping[str, Any] | Sequence[Any]) -> np.ndarray:
    """Binarize one raw row with a fitted feature map.

    `row` is either a mapping from column name to cell or a sequence aligned
    with the map's source columns. A categorical value never seen when the
    map was built yields an all-zero one-hot group and a warning.
    """
    names = [c.name for c in fmap.columns]
    if isinstance(row, Mapping):
        absent = [c for c in names if c not in row]
        if absent:
            raise DatasetError(f"row lacks source columns {absent}")
        cells = [row[c] for c in names]
    else:
        if len(row) != len(names):
            raise DatasetError(f"row has {len(row)} cells, feature map expects {len(names)}")
        cells = list(row)
    parsed: dict[str, Any] = {}
    for col, cell in zip(fmap.columns, cells):
        if is_missing(cell):
            raise DatasetError(f"missing value in column {col.name!r}")
        v = _parse_cell(cell, col.kind, col.name)
        if col.kind == CATEGORICAL and v not in col.categories:
            warnings.warn(f"column {col.name!r}: unseen category {v!r}", stacklevel=2)
        parsed[col.name] = v
    return np.fromiter((f.evaluate(parsed[f.column]) for f in fmap.features),
                       dtype=np.uint8, count=len(fmap.features))


def read_rows(path: str | Path, delimiter: str = ",") -> list[dict[str, str]]:
    """Rows of a delimited file as dicts keyed by header; no label required."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh, delimiter=delimiter))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DatasetError(f"{path}: cannot read: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return [{k.strip(): (v or "").strip() for k, v in r.items() if k is not None} for r in rows]


def apply_map_rows(fmap: FeatureMap, rows: Sequence[Mapping[str, Any]]) -> np.ndarray:
    """Binarize many raw rows; columns are matched by name."""
    out = np.zeros((len(rows), len(fmap)), dtype=np.uint8)
    for i, row in enumerate(rows):
        try:
            out[i] = apply_map(fmap, row)
        except DatasetError as exc:
            raise DatasetError(f"row {i}: {exc}") from exc
    return out
