"""Tabular schema, CSV ingestion, train/val/test splits and the quantile preprocessor."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    ConstantFeature,
    NonNumericValue,
    RowArityMismatch,
    SchemaError,
    UnknownCategory,
)

CATEGORICAL = "categorical"
NUMERICAL = "numerical"
# Empty CSV cell; for categorical columns it is an ordinary extra category.
MISSING_LABEL = ""
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    target: bool = False

    @property
    def cardinality(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if not self.columns:
            raise SchemaError("schema needs at least one feature")
        for c in self.columns:
            if c.kind not in (CATEGORICAL, NUMERICAL):
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.kind == CATEGORICAL:
                if c.cardinality < 2:
                    raise SchemaError(f"column {c.name!r}: need at least 2 categories")
                if len(set(c.categories)) != c.cardinality:
                    raise SchemaError(f"column {c.name!r}: duplicate category labels")
        if sum(c.target for c in self.columns) > 1:
            raise SchemaError("at most one target column")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def cat_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind == CATEGORICAL]

    @property
    def num_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind == NUMERICAL]

    @property
    def cardinalities(self) -> list[int]:
        return [c.cardinality for c in self.cat_columns]

    @property
    def target(self) -> Column | None:
        return next((c for c in self.columns if c.target), None)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_missing_category(self, name: str) -> "FeatureSchema":
        """Return a schema where categorical ``name`` also carries the missing label."""
        cols = []
        for c in self.columns:
            if c.name == name and MISSING_LABEL not in c.categories:
                c = replace(c, categories=c.categories + (MISSING_LABEL,))
            cols.append(c)
        return FeatureSchema(tuple(cols))

    def to_dict(self) -> dict:
        out = []
        for c in self.columns:
            d: dict = {"name": c.name, "kind": c.kind}
            if c.kind == CATEGORICAL:
                d["categories"] = list(c.categories)
            if c.target:
                d["target"] = True
            out.append(d)
        return {"columns": out}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            cols = tuple(
                Column(
                    name=str(c["name"]),
                    kind=str(c["kind"]),
                    categories=tuple(str(v) for v in c.get("categories", ())),
                    target=bool(c.get("target", False)),
                )
                for c in d["columns"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls(cols)

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True)
class Dataset:
    """Encoded table. ``num`` holds NaN wherever ``missing`` is true."""

    schema: FeatureSchema
    cat: np.ndarray
    num: np.ndarray
    missing: np.ndarray
    split: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.cat.shape[0]
        if self.num.shape[0] != n or self.missing.shape != self.num.shape:
            raise SchemaError("inconsistent dataset shapes")
        if self.cat.shape[1] != len(self.schema.cat_columns):
            raise SchemaError("categorical width does not match schema")
        if self.num.shape[1] != len(self.schema.num_columns):
            raise SchemaError("numerical width does not match schema")
        for j, c in enumerate(self.schema.cat_columns):
            col = self.cat[:, j]
            if n and (col.min() < 0 or col.max() >= c.cardinality):
                raise SchemaError(f"column {c.name!r}: category index out of range")
        t = self.schema.target
        if t is not None and t.kind == NUMERICAL:
            if self.missing[:, self.num_index(t.name)].any():
                raise SchemaError("target column cannot contain missing values")

    def __len__(self) -> int:
        return self.cat.shape[0]

    def cat_index(self, name: str) -> int:
        return [c.name for c in self.schema.cat_columns].index(name)

    def num_index(self, name: str) -> int:
        return [c.name for c in self.schema.num_columns].index(name)

    def rows(self, idx) -> "Dataset":
        split = None if self.split is None else self.split[idx]
        return Dataset(self.schema, self.cat[idx], self.num[idx], self.missing[idx], split)

    def subset(self, tag: str) -> "Dataset":
        if self.split is None:
            raise ValueError("dataset has no split tags")
        return self.rows(np.flatnonzero(self.split == tag))

    def column_values(self, name: str) -> np.ndarray:
        """Raw column: category labels (object array) or floats with NaN for missing."""
        col = self.schema.column(name)
        if col.kind == CATEGORICAL:
            labels = np.array(col.categories, dtype=object)
            return labels[self.cat[:, self.cat_index(name)]]
        return self.num[:, self.num_index(name)]


def from_columns(schema: FeatureSchema, data: dict[str, Sequence]) -> Dataset:
    """Build a Dataset from per-column label/float sequences (NaN or None = missing)."""
    n = len(next(iter(data.values())))
    cat = np.zeros((n, len(schema.cat_columns)), dtype=np.int64)
    num = np.full((n, len(schema.num_columns)), np.nan)
    for j, c in enumerate(schema.cat_columns):
        lookup = {lab: k for k, lab in enumerate(c.categories)}
        for i, v in enumerate(data[c.name]):
            v = MISSING_LABEL if v is None else str(v)
            if v not in lookup:
                raise UnknownCategory(i, c.name, v)
            cat[i, j] = lookup[v]
    for j, c in enumerate(schema.num_columns):
        num[:, j] = np.array([np.nan if v is None else v for v in data[c.name]], dtype=float)
    missing = np.isnan(num)
    return Dataset(schema, cat, num, missing)


def load_dataset(csv_path: str | Path, schema: FeatureSchema) -> Dataset:
    """Parse an RFC-4180 CSV with a header row matching the schema's column names.

    Column order in the file is free; cells are matched by header name. An empty
    numerical cell is missing. An empty categorical cell is the missing category;
    if the schema does not list it, it is appended to that column's labels.
    """
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file, header row required") from None
        if sorted(header) != sorted(schema.names):
            raise SchemaError(
                f"{csv_path}: header {header} does not match schema columns {schema.names}"
            )
        pos = {name: k for k, name in enumerate(header)}
        records = []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                raise RowArityMismatch(i, len(header), len(rec))
            records.append(rec)

    for c in schema.cat_columns:
        k = pos[c.name]
        if any(r[k] == MISSING_LABEL for r in records):
            schema = schema.with_missing_category(c.name)

    n = len(records)
    cat = np.zeros((n, len(schema.cat_columns)), dtype=np.int64)
    num = np.full((n, len(schema.num_columns)), np.nan)
    for j, c in enumerate(schema.cat_columns):
        k = pos[c.name]
        lookup = {lab: v for v, lab in enumerate(c.categories)}
        for i, r in enumerate(records):
            try:
                cat[i, j] = lookup[r[k]]
            except KeyError:
                raise UnknownCategory(i, c.name, r[k]) from None
    for j, c in enumerate(schema.num_columns):
        k = pos[c.name]
        for i, r in enumerate(records):
            cell = r[k].strip()
            if cell == "":
                continue
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericValue(i, c.name, r[k]) from None
            if not math.isfinite(v):
                raise NonNumericValue(i, c.name, r[k])
            num[i, j] = v
    return Dataset(schema, cat, num, np.isnan(num))


def format_float(v: float) -> str:
    return repr(float(v))


def write_dataset(ds: Dataset, path: str | Path, columns: Iterable[str] | None = None) -> None:
    """Write raw-scale values; missing cells are empty."""
    names = list(columns) if columns is not None else ds.schema.names
    cols = []
    for name in names:
        vals = ds.column_values(name)
        if ds.schema.column(name).kind == NUMERICAL:
            cols.append(["" if np.isnan(v) else format_float(v) for v in vals])
        else:
            cols.append(list(vals))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        w.writerows(zip(*cols))


def split_dataset(ds: Dataset, seed: int) -> Dataset:
    """Tag rows train/val/test at 70/10/20; val and test sizes are floored, rest to train."""
    n = len(ds)
    if n < 10:
        raise ValueError("need at least 10 rows to split")
    n_val, n_test = int(math.floor(0.1 * n)), int(math.floor(0.2 * n))
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype="<U5")
    tags[order[:n_val]] = "val"
    tags[order[n_val:n_val + n_test]] = "test"
    tags[order[n_val + n_test:]] = "train"
    return replace(ds, split=tags)


def _training_rows(ds: Dataset) -> Dataset:
    return ds if ds.split is None else ds.subset("train")


@dataclass(frozen=True)
class FeatureQuantiles:
    values: np.ndarray  # sorted distinct training values
    cdf: np.ndarray  # plotting position rank/(n+1), ties share their mean rank
    mean: float
    std: float

    def transform(self, x: np.ndarray) -> np.ndarray:
        u = np.interp(x, self.values, self.cdf)
        return (ndtri(u) - self.mean) / self.std

    def inverse(self, y: np.ndarray) -> np.ndarray:
        u = ndtr(np.asarray(y) * self.std + self.mean)
        return np.interp(u, self.cdf, self.values)


@dataclass(frozen=True)
class Preprocessor:
    """Per-feature quantile-to-normal map followed by standardization."""

    features: tuple[FeatureQuantiles, ...]

    def apply(self, ds: Dataset) -> Dataset:
        num = np.zeros_like(ds.num)
        for j, q in enumerate(self.features):
            obs = ~ds.missing[:, j]
            num[obs, j] = q.transform(ds.num[obs, j])
        return replace(ds, num=num)

    def transform_column(self, j: int, x: np.ndarray) -> np.ndarray:
        return self.features[j].transform(x)

    def invert_column(self, j: int, y: np.ndarray) -> np.ndarray:
        return self.features[j].inverse(y)

    def to_dict(self) -> dict:
        return {
            "features": [
                {
                    "values": q.values.tolist(),
                    "cdf": q.cdf.tolist(),
                    "mean": q.mean,
                    "std": q.std,
                }
                for q in self.features
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls(
            tuple(
                FeatureQuantiles(
                    np.asarray(f["values"], float), np.asarray(f["cdf"], float), f["mean"], f["std"]
                )
                for f in d["features"]
            )
        )


def fit_feature_quantiles(x: np.ndarray, name: str = "?") -> FeatureQuantiles:
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    values, first, counts = np.unique(x, return_index=True, return_counts=True)
    if values.size < 2:
        raise ConstantFeature(name)
    # mean 1-based rank of each tie block
    mean_rank = first + (counts + 1) / 2.0
    cdf = mean_rank / (n + 1)
    z = np.repeat(ndtri(cdf), counts)
    return FeatureQuantiles(values, cdf, float(z.mean()), float(z.std()))


def fit_preprocessor(ds: Dataset) -> Preprocessor:
    train = _training_rows(ds)
    feats = []
    for j, c in enumerate(train.schema.num_columns):
        obs = ~train.missing[:, j]
        feats.append(fit_feature_quantiles(train.num[obs, j], c.name))
    return Preprocessor(tuple(feats))
