"""Typed columnar tables, CSV ingestion, winsorizing and subsampling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

NUMERIC = "numeric"
CATEGORICAL = "categorical"

_MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise DataError(f"column {self.name!r}: categorical column needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"column {self.name!r}: duplicate levels")
        elif self.levels:
            raise DataError(f"column {self.name!r}: numeric column cannot have levels")

    def to_json(self) -> dict:
        if self.kind == NUMERIC:
            return {"kind": NUMERIC}
        return {"kind": CATEGORICAL, "levels": list(self.levels)}

    @classmethod
    def from_json(cls, name: str, obj) -> "ColumnSpec":
        if isinstance(obj, str):
            obj = {"kind": obj}
        elif isinstance(obj, (list, tuple)):
            # {"categorical", ...} written as a JSON array: ["categorical", [levels]]
            obj = {"kind": obj[0], "levels": obj[1] if len(obj) > 1 else []}
        if not isinstance(obj, Mapping) or "kind" not in obj:
            raise DataError(f"schema entry for {name!r} must name a kind")
        return cls(name, obj["kind"], tuple(str(v) for v in obj.get("levels", ())))


@dataclass(frozen=True)
class WinsorCutpoints:
    variable: str
    lower: float
    upper: float
    lower_pct: float = 0.05
    upper_pct: float = 0.95

    def apply(self, values) -> np.ndarray:
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def describe(self) -> str:
        """Bracket form used in term tables, e.g. ``18 <= score <= 38``."""
        return f"{format_number(self.lower)} <= {self.variable} <= {format_number(self.upper)}"


def format_number(x: float) -> str:
    """Shortest repr of a float, without a trailing ``.0`` for integral values."""
    x = float(x)
    if x == 0:
        return "0"
    s = repr(x)
    if s.endswith(".0"):
        s = s[:-2]
    return s


@dataclass(frozen=True, eq=False)
class DataSet:
    """Immutable table of numeric and categorical columns.

    Numeric columns are stored as float64 arrays. Categorical columns are stored
    as integer codes into ``ColumnSpec.levels``. ``response_names`` may be empty
    for tables that only carry predictors (new data for prediction).
    """

    columns: tuple[ColumnSpec, ...]
    data: Mapping[str, np.ndarray]
    response_names: tuple[str, ...] = ()
    n_rows: int = field(init=False)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        missing = [r for r in self.response_names if r not in names]
        if missing:
            raise DataError(f"response column(s) not found: {', '.join(missing)}")
        lengths = {len(self.data[c.name]) for c in self.columns}
        if len(lengths) > 1:
            raise DataError("columns have different lengths")
        frozen = {}
        for spec in self.columns:
            arr = np.array(self.data[spec.name], dtype=float if spec.kind == NUMERIC else np.int64)
            if spec.kind == NUMERIC and not np.all(np.isfinite(arr)):
                raise DataError(f"column {spec.name!r} contains non-finite values")
            if spec.kind == CATEGORICAL and arr.size and (arr.min() < 0 or arr.max() >= len(spec.levels)):
                raise DataError(f"column {spec.name!r} has codes outside its levels")
            arr.setflags(write=False)
            frozen[spec.name] = arr
        object.__setattr__(self, "data", frozen)
        object.__setattr__(self, "n_rows", lengths.pop() if lengths else 0)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence], response: Sequence[str] | str = (),
                     levels: Mapping[str, Sequence[str]] | None = None) -> "DataSet":
        """Build a table from raw python/numpy columns.

        Columns whose values are all numbers become numeric, the rest categorical
        with levels in first-appearance order (unless ``levels`` fixes them).
        """
        levels = dict(levels or {})
        specs, data = [], {}
        for name, values in columns.items():
            values = list(values) if not isinstance(values, np.ndarray) else values
            if name in levels:
                spec = ColumnSpec(name, CATEGORICAL, tuple(str(v) for v in levels[name]))
                data[name] = _encode(spec, [str(v) for v in values])
            elif isinstance(values, np.ndarray) and values.dtype.kind in "fiub":
                spec = ColumnSpec(name, NUMERIC)
                data[name] = values.astype(float)
            elif all(_is_number(v) for v in values):
                spec = ColumnSpec(name, NUMERIC)
                data[name] = np.array([float(v) for v in values])
            else:
                labels = [str(v) for v in values]
                spec = ColumnSpec(name, CATEGORICAL, tuple(dict.fromkeys(labels)))
                data[name] = _encode(spec, labels)
            specs.append(spec)
        if isinstance(response, str):
            response = (response,)
        return cls(tuple(specs), data, tuple(response))

    # accessors ------------------------------------------------------------

    @cached_property
    def schema(self) -> dict[str, ColumnSpec]:
        return {c.name: c for c in self.columns}

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def predictor_names(self) -> list[str]:
        return [c.name for c in self.columns if c.name not in self.response_names]

    def spec(self, name: str) -> ColumnSpec:
        try:
            return self.schema[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def values(self, name: str) -> np.ndarray:
        """Numeric values, or integer codes for a categorical column."""
        self.spec(name)
        return self.data[name]

    def labels(self, name: str) -> np.ndarray:
        """Values as strings (categorical) or floats (numeric)."""
        spec = self.spec(name)
        if spec.kind == NUMERIC:
            return self.data[name]
        return np.asarray(spec.levels, dtype=object)[self.data[name]]

    def row(self, i: int) -> dict:
        out = {}
        for spec in self.columns:
            v = self.data[spec.name][i]
            out[spec.name] = float(v) if spec.kind == NUMERIC else spec.levels[int(v)]
        return out

    # derived tables ---------------------------------------------------------

    def take(self, rows) -> "DataSet":
        rows = np.asarray(rows, dtype=np.int64)
        return DataSet(self.columns, {k: v[rows] for k, v in self.data.items()}, self.response_names)

    def with_values(self, name: str, value) -> "DataSet":
        """Copy with column ``name`` set to ``value`` in every row (label for categorical)."""
        spec = self.spec(name)
        if spec.kind == NUMERIC:
            col = np.full(self.n_rows, float(value))
        else:
            if str(value) not in spec.levels:
                raise DataError(f"{value!r} is not a level of {name!r}")
            col = np.full(self.n_rows, spec.levels.index(str(value)), dtype=np.int64)
        data = dict(self.data)
        data[name] = col
        return DataSet(self.columns, data, self.response_names)

    def with_response(self, response: Sequence[str] | str) -> "DataSet":
        if isinstance(response, str):
            response = (response,)
        return DataSet(self.columns, self.data, tuple(response))

    def schema_json(self) -> dict:
        return {c.name: c.to_json() for c in self.columns}

    def __len__(self) -> int:
        return self.n_rows

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataSet):
            return NotImplemented
        return (self.columns == other.columns and self.response_names == other.response_names
                and all(np.array_equal(self.data[k], other.data[k]) for k in self.data))

    __hash__ = None


def _is_number(v) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, (int, float, np.integer, np.floating)):
        return True
    try:
        float(v)
    except (TypeError, ValueError):
        return False
    return True


def _encode(spec: ColumnSpec, labels: Sequence[str]) -> np.ndarray:
    index = {lvl: i for i, lvl in enumerate(spec.levels)}
    try:
        return np.array([index[v] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"column {spec.name!r}: unseen level {exc.args[0]!r}") from None


def read_schema(path) -> dict[str, ColumnSpec]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, Mapping):
        raise DataError(f"{path}: schema must be a JSON object")
    return {name: ColumnSpec.from_json(name, obj) for name, obj in raw.items()}


def load_csv(path, schema: Mapping[str, ColumnSpec] | str | Path | None = None,
             response: Sequence[str] | str = (), *, require_all: bool = True) -> DataSet:
    """Read a header-first, comma-delimited UTF-8 CSV file.

    Without a schema, a column whose cells all parse as numbers is numeric and
    any other column is categorical with levels in first-appearance order. With
    a schema, listed columns take the given kind; ``require_all=False`` lets the
    file omit schema columns and carry extra (inferred) ones.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    if isinstance(schema, (str, Path)):
        schema = read_schema(schema)
    schema = dict(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(rec)}")
            for name, cell in zip(header, rec):
                if cell.strip().lower() in _MISSING_TOKENS:
                    raise DataError(f"{path}:{lineno}: missing value in column {name!r}")
            rows.append(rec)
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if require_all:
        absent = [k for k in schema if k not in header]
        if absent:
            raise DataError(f"{path}: schema columns missing from file: {', '.join(absent)}")
    unknown = [h for h in header if h not in schema]
    if schema and require_all and unknown:
        raise DataError(f"{path}: columns not in schema: {', '.join(unknown)}")

    specs, data = [], {}
    for j, name in enumerate(header):
        cells = [r[j].strip() for r in rows]
        spec = schema.get(name)
        if spec is None:
            if all(_parse_float(c) is not None for c in cells):
                spec = ColumnSpec(name, NUMERIC)
            else:
                spec = ColumnSpec(name, CATEGORICAL, tuple(dict.fromkeys(cells)) or ("",))
        if spec.kind == NUMERIC:
            vals = []
            for i, c in enumerate(cells):
                x = _parse_float(c)
                if x is None:
                    raise DataError(f"{path}:{i + 2}: column {name!r} expects a number, got {c!r}")
                vals.append(x)
            data[name] = np.array(vals, dtype=float)
        else:
            index = {lvl: k for k, lvl in enumerate(spec.levels)}
            codes = []
            for i, c in enumerate(cells):
                if c not in index:
                    raise DataError(f"{path}:{i + 2}: unseen level {c!r} in column {name!r}")
                codes.append(index[c])
            data[name] = np.array(codes, dtype=np.int64)
        specs.append(spec)
    if isinstance(response, str):
        response = (response,)
    return DataSet(tuple(specs), data, tuple(response))


def _parse_float(s: str):
    try:
        x = float(s)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def write_csv(ds: DataSet, path, schema_path=None) -> None:
    """Write ``ds`` so that ``load_csv(path, schema_path)`` restores it exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ds.names)
        cols = []
        for spec in ds.columns:
            if spec.kind == NUMERIC:
                cols.append([repr(float(v)) for v in ds.data[spec.name]])
            else:
                cols.append([spec.levels[int(v)] for v in ds.data[spec.name]])
        writer.writerows(zip(*cols))
    if schema_path is not None:
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump(ds.schema_json(), fh, indent=2)


def winsorize(values, lower_pct: float = 0.05, upper_pct: float = 0.95,
              variable: str = "") -> tuple[np.ndarray, WinsorCutpoints]:
    """Clamp values to their empirical ``lower_pct``/``upper_pct`` quantiles.

    Quantiles are type 7 (linear interpolation between order statistics).
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DataError("cannot winsorize an empty vector")
    if not 0.0 <= lower_pct < upper_pct <= 1.0:
        raise DataError("winsorizing fractions must satisfy 0 <= lower < upper <= 1")
    lo, hi = np.quantile(x, [lower_pct, upper_pct], method="linear")
    cut = WinsorCutpoints(variable, float(lo), float(hi), lower_pct, upper_pct)
    return cut.apply(x), cut


def subsample_indices(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """``floor(fraction * n)`` distinct indices drawn uniformly, returned sorted."""
    if n < 1:
        raise DataError("need at least one row to subsample")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"subsample fraction must lie in (0, 1], got {fraction}")
    size = max(1, int(math.floor(fraction * n)))
    if size == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=size, replace=False))


def kfold_assignment(n: int, k: int, rng: np.random.Generator, strata=None) -> np.ndarray:
    """Fold id per row; folds differ in size by at most one.

    With ``strata``, each stratum is dealt round-robin over the folds so every
    fold sees every class whenever the class has at least ``k`` members.
    """
    if k < 2 or n < k:
        raise DataError(f"need 2 <= k <= n for k-fold assignment (n={n}, k={k})")
    folds = np.empty(n, dtype=np.int64)
    if strata is None:
        folds[rng.permutation(n)] = np.arange(n) % k
        return folds
    strata = np.asarray(strata)
    offset = 0
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return folds

