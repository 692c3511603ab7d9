"""Tabular ingestion: CSV parsing, categorical encoding, min-max scaling,
train/test/prediction splits and cyclic feature windows.

Named presets cover the five UCI datasets used for the experiments; they are
read from a local directory and never downloaded.  Synthetic data with a
controllable correlation structure lives in :mod:`agnostic_vfl.synthetic`.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Column",
    "Schema",
    "Dataset",
    "SplitSpec",
    "Partition",
    "DataError",
    "load_csv",
    "encode_categorical",
    "normalize",
    "split",
    "window_partitions",
    "PRESETS",
    "load_preset",
    "prepare",
]

NUMERIC = "numeric"
CATEGORICAL = "categorical"
LABEL = "label"
DROP = "drop"


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset operations."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERIC

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL, LABEL, DROP):
            raise DataError(f"unknown column kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class Schema:
    """Column descriptors for a delimited file.

    ``header`` says whether the first row holds column names.  When it does,
    the names must match the schema in order.
    """

    columns: tuple[Column, ...]
    delimiter: str = ","
    header: bool = True
    skip_blank: bool = True

    @property
    def label_index(self) -> int:
        idx = [i for i, c in enumerate(self.columns) if c.kind == LABEL]
        if len(idx) != 1:
            raise DataError("schema must name exactly one label column")
        return idx[0]

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        cols = tuple(Column(c["name"], c.get("kind", NUMERIC)) for c in doc["columns"])
        return cls(cols, doc.get("delimiter", ","), doc.get("header", True))


@dataclass
class Dataset:
    """Feature matrix plus integer labels.

    Raw datasets hold ``object`` arrays in which categorical columns are still
    strings; after :func:`encode_categorical` every column is float.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    categorical: list[bool] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.categorical:
            self.categorical = [False] * self.features.shape[1]
        if not self.class_names:
            self.class_names = [str(i) for i in range(int(self.labels.max()) + 1)] if len(self.labels) else []

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def d_t(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return len(self.class_names)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class SplitSpec:
    prediction_fraction: float = 0.20
    test_fraction_of_train: float = 0.20
    seed: int = 0

    def __post_init__(self):
        for f in (self.prediction_fraction, self.test_fraction_of_train):
            if not 0.0 < f < 1.0:
                raise DataError(f"split fractions must lie in (0, 1), got {f}")


@dataclass(frozen=True)
class Partition:
    """Passive-party feature window; the active party holds the complement."""

    passive_indices: tuple[int, ...]
    active_indices: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.passive_indices)

    @property
    def start(self) -> int:
        return self.passive_indices[0]


def load_csv(path: str | os.PathLike, schema: Schema) -> Dataset:
    """Parse a delimited file into a raw :class:`Dataset`.

    Numeric columns are converted to float; categorical columns stay as
    strings.  Row indices in error messages count data rows from 0.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    ncol = len(schema.columns)
    label_col = schema.label_index
    keep = [i for i, c in enumerate(schema.columns) if c.kind in (NUMERIC, CATEGORICAL)]

    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        if schema.delimiter == " ":
            reader = (line.split() for line in fh)
        else:
            reader = csv.reader(fh, delimiter=schema.delimiter, skipinitialspace=True)
        if schema.header:
            head = next(reader, None)
            if head is None:
                raise DataError(f"{path}: empty file")
            head = [h.strip() for h in head]
            if len(head) != ncol:
                raise DataError(f"{path}: header has {len(head)} columns, schema has {ncol}")
        for r in reader:
            if schema.skip_blank and (not r or all(not s.strip() for s in r)):
                continue
            if len(r) != ncol:
                raise DataError(f"{path}: row {len(rows)} has {len(r)} fields, expected {ncol}")
            rows.append([s.strip() for s in r])
    if not rows:
        raise DataError(f"{path}: no data rows")

    raw_labels = [r[label_col].rstrip(".") for r in rows]
    class_names = sorted(set(raw_labels), key=_natural_key)
    lookup = {c: i for i, c in enumerate(class_names)}
    labels = np.array([lookup[v] for v in raw_labels], dtype=np.int64)

    feats = np.empty((len(rows), len(keep)), dtype=object)
    for j, ci in enumerate(keep):
        col = schema.columns[ci]
        if col.kind == NUMERIC:
            for i, r in enumerate(rows):
                try:
                    feats[i, j] = float(r[ci])
                except ValueError:
                    raise DataError(f"{path}: row {i}, column {col.name!r}: not a number: {r[ci]!r}") from None
        else:
            feats[:, j] = [r[ci] for r in rows]
    return Dataset(
        features=feats,
        labels=labels,
        feature_names=[schema.columns[i].name for i in keep],
        categorical=[schema.columns[i].kind == CATEGORICAL for i in keep],
        class_names=class_names,
    )


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


@dataclass
class CategoryEncoder:
    """Target-mean code per category, fitted on training rows only."""

    maps: dict[int, dict[str, float]]
    fallback: dict[int, float]

    def transform(self, ds: Dataset, strict: bool = False) -> Dataset:
        out = np.empty(ds.features.shape, dtype=float)
        for j in range(ds.d_t):
            if j in self.maps:
                m, fb = self.maps[j], self.fallback[j]
                col = ds.features[:, j]
                if strict:
                    unknown = set(col) - set(m)
                    if unknown:
                        raise DataError(f"unknown category {sorted(unknown)[0]!r} in {ds.feature_names[j]!r}")
                out[:, j] = [m.get(v, fb) for v in col]
            else:
                out[:, j] = ds.features[:, j].astype(float)
        return replace(ds, features=out, categorical=[False] * ds.d_t)


def fit_category_encoder(ds: Dataset, train_mask: np.ndarray) -> CategoryEncoder:
    train_mask = np.asarray(train_mask, dtype=bool)
    y = ds.labels[train_mask]
    if len(np.unique(y)) < ds.k:
        raise DataError("training rows do not cover every class")
    maps, fallback = {}, {}
    for j, is_cat in enumerate(ds.categorical):
        if not is_cat:
            continue
        col = ds.features[train_mask, j]
        cats, inverse = np.unique(col.astype(str), return_inverse=True)
        sums = np.bincount(inverse, weights=y.astype(float), minlength=len(cats))
        counts = np.bincount(inverse, minlength=len(cats))
        maps[j] = {c: s / n for c, s, n in zip(cats.tolist(), sums, counts)}
        # mean of the encoded training column equals the mean label
        fallback[j] = float(y.mean())
    return CategoryEncoder(maps, fallback)


def encode_categorical(ds: Dataset, train_mask: np.ndarray) -> Dataset:
    """Replace each category by the mean class index of training rows holding it.

    For two classes this is P(class 1 | category).  Categories that never occur
    in the training rows fall back to the global training mean.
    """
    return fit_category_encoder(ds, train_mask).transform(ds)


def normalize(ds: Dataset, train_mask: np.ndarray | None = None) -> Dataset:
    """Per-feature min-max scaling into [0, 1] over the whole dataset.

    ``train_mask`` is accepted for interface symmetry but unused: the scaling
    deliberately uses every row.  Constant features map to 0.
    """
    x = np.asarray(ds.features, dtype=float)
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - lo) / safe, 0.0)
    return replace(ds, features=np.clip(out, 0.0, 1.0))


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_pred = int(round(spec.prediction_fraction * n))
    n_rest = n - n_pred
    n_test = int(round(spec.test_fraction_of_train * n_rest))
    n_train = n_rest - n_test
    if min(n_pred, n_test, n_train) < 1:
        raise DataError(f"n={n} too small for the requested split")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[:n_train], perm[n_train:n_rest], perm[n_rest:]


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Return (train, test, prediction) subsets; see :func:`split_indices`."""
    tr, te, pr = split_indices(ds.n_samples, spec)
    if len(np.unique(ds.labels[tr])) < ds.k:
        raise DataError(f"seed {spec.seed} leaves a class out of the training split; re-seed")
    return ds.subset(tr), ds.subset(te), ds.subset(pr)


def window_partitions(d_t: int, d: int) -> list[Partition]:
    """All ``d_t`` cyclic windows of ``d`` passive features."""
    if not 1 <= d < d_t:
        raise DataError(f"window size must satisfy 1 <= d < d_t, got d={d}, d_t={d_t}")
    out = []
    for i in range(d_t):
        passive = tuple((i + j) % d_t for j in range(d))
        active = tuple(j for j in range(d_t) if j not in passive)
        out.append(Partition(passive, active))
    return out


def _cols(names: Sequence[str], kinds: dict[str, str], default=NUMERIC) -> tuple[Column, ...]:
    return tuple(Column(n, kinds.get(n, default)) for n in names)


_BANK = [
    "age", "job", "marital", "education", "default", "housing", "loan", "contact", "month",
    "day_of_week", "duration", "campaign", "pdays", "previous", "poutcome", "emp.var.rate",
    "cons.price.idx", "cons.conf.idx", "euribor3m", "nr.employed", "y",
]
_ADULT = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week",
    "native-country", "income",
]

# name -> (files tried in order and concatenated, schema)
PRESETS: dict[str, tuple[tuple[str, ...], Schema]] = {
    "bank": (
        ("bank-additional-full.csv",),
        Schema(
            _cols(_BANK, {
                **{c: CATEGORICAL for c in ("job", "marital", "education", "default", "housing", "loan",
                                            "contact", "month", "day_of_week", "poutcome")},
                "duration": DROP, "y": LABEL,
            }),
            delimiter=";",
        ),
    ),
    "adult": (
        ("adult.data", "adult.test"),
        Schema(
            _cols(_ADULT, {
                **{c: CATEGORICAL for c in ("workclass", "marital-status", "occupation", "relationship",
                                            "race", "sex", "native-country")},
                "education": DROP, "income": LABEL,
            }),
            header=False,
        ),
    ),
    "satellite": (
        ("sat.trn", "sat.tst"),
        Schema(_cols([f"a{i}" for i in range(36)] + ["class"], {"class": LABEL}), delimiter=" ", header=False),
    ),
    "pendigits": (
        ("pendigits.tra", "pendigits.tes"),
        Schema(_cols([f"a{i}" for i in range(16)] + ["digit"], {"digit": LABEL}), header=False),
    ),
    "grid": (
        ("Data_for_UCI_named.csv",),
        Schema(_cols(
            [f"tau{i}" for i in range(1, 5)] + [f"p{i}" for i in range(1, 5)]
            + [f"g{i}" for i in range(1, 5)] + ["stab", "stabf"],
            {"stabf": LABEL},
        )),
    ),
}


def load_preset(name: str, data_dir: str | os.PathLike) -> Dataset:
    """Load a named UCI dataset from ``data_dir`` (raw, unencoded)."""
    if name not in PRESETS:
        raise DataError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    files, schema = PRESETS[name]
    parts = [load_csv(Path(data_dir) / f, schema) for f in files if (Path(data_dir) / f).exists()]
    if not parts:
        raise DataError(f"preset {name!r}: none of {files} found in {data_dir}")
    if len(parts) == 1:
        return parts[0]
    names = sorted(set().union(*(p.class_names for p in parts)), key=_natural_key)
    labels = [np.array([names.index(p.class_names[i]) for i in p.labels]) for p in parts]
    return Dataset(
        features=np.concatenate([p.features for p in parts]),
        labels=np.concatenate(labels),
        feature_names=parts[0].feature_names,
        categorical=parts[0].categorical,
        class_names=names,
    )


def prepare(raw: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Encode, normalize and split a raw dataset in the order the encoding needs.

    The split indices are drawn first so that categorical codes see training
    rows only; min-max scaling then runs over all rows.
    """
    tr, te, pr = split_indices(raw.n_samples, spec)
    mask = np.zeros(raw.n_samples, dtype=bool)
    mask[tr] = True
    ds = normalize(encode_categorical(raw, mask))
    if len(np.unique(ds.labels[tr])) < ds.k:
        raise DataError(f"seed {spec.seed} leaves a class out of the training split; re-seed")
    return ds.subset(tr), ds.subset(te), ds.subset(pr)
