"""Raw tables to balanced, encoded, split datasets, plus a synthetic source.

Raw data is a pandas DataFrame with one binary label column. Column
kinds come from a declarative mapping {column name: "categorical" |
"numerical" | "label"}. Categorical columns one-hot encode over the
categories seen at fit time (sorted order); numerical columns z-score
with the sample standard deviation (n - 1 denominator). Fit statistics
come from training rows only; transforming unseen rows reuses them.

Encoded datasets persist as a CSV of encoded feature columns plus a
``label`` column, with a JSON sidecar holding the fitted column specs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DomainError, PipelineError

VALID_KINDS = ("categorical", "numerical", "label")


class UnknownCategoryWarning(UserWarning):
    """A transform met a category absent at fit time (block left all-zero)."""


@dataclass(frozen=True)
class ColumnSpec:
    """Encoding recipe for one raw column."""

    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    mean: float | None = None
    std: float | None = None

    def encoded_names(self):
        if self.kind == "categorical":
            return [f"{self.name}={c}" for c in self.categories]
        return [self.name]


@dataclass
class EncodedDataset:
    features: np.ndarray          # (n, d) float64
    labels: np.ndarray            # (n,) int8
    specs: tuple[ColumnSpec, ...]
    feature_names: tuple[str, ...]
    provenance: dict = field(default_factory=dict)


def load_kinds(path) -> dict:
    with open(path) as fh:
        kinds = json.load(fh)
    for name, kind in kinds.items():
        if kind not in VALID_KINDS:
            raise PipelineError(f"column {name!r} has unknown kind {kind!r}")
    return kinds


def _ordered_columns(table: pd.DataFrame, kinds: dict):
    label_cols = [c for c, k in kinds.items() if k == "label"]
    if len(label_cols) != 1:
        raise PipelineError(f"need exactly one label column, got {label_cols}")
    feature_cols = [c for c, k in kinds.items() if k != "label"]
    missing = [c for c in kinds if c not in table.columns]
    if missing:
        raise PipelineError(f"columns missing from the table: {missing}")
    return feature_cols, label_cols[0]


def _check_no_missing(table: pd.DataFrame, columns):
    for col in columns:
        if table[col].isna().any():
            raise PipelineError(
                f"column {col!r} has missing values; imputation is not supported")


def _label_values(table: pd.DataFrame, label_col: str) -> np.ndarray:
    values = table[label_col].to_numpy()
    as_int = values.astype(np.int8, copy=False) if values.dtype != object \
        else np.array([int(v) for v in values], dtype=np.int8)
    if not np.isin(as_int, (0, 1)).all():
        raise PipelineError(f"label column {label_col!r} must be binary 0/1")
    return as_int.astype(np.int8)


def fit_encode(table: pd.DataFrame, kinds: dict):
    """Fit encodings on the table and encode it; returns (dataset, specs)."""
    feature_cols, label_col = _ordered_columns(table, kinds)
    _check_no_missing(table, feature_cols + [label_col])
    specs = []
    for col in feature_cols:
        if kinds[col] == "numerical":
            values = table[col].to_numpy(dtype=float)
            mean = float(values.mean())
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            if std == 0.0:
                raise PipelineError(
                    f"numerical column {col!r} is constant (std = 0)")
            specs.append(ColumnSpec(col, "numerical", mean=mean, std=std))
        else:
            cats = tuple(sorted(str(v) for v in pd.unique(table[col])))
            specs.append(ColumnSpec(col, "categorical", categories=cats))
    specs.append(ColumnSpec(label_col, "label"))
    dataset = transform(table, tuple(specs))
    dataset.provenance["fit_rows"] = len(table)
    return dataset, tuple(specs)


def transform(table: pd.DataFrame, specs) -> EncodedDataset:
    """Encode rows with previously fitted specs."""
    specs = tuple(specs)
    label_spec = [s for s in specs if s.kind == "label"]
    if len(label_spec) != 1:
        raise PipelineError("specs must contain exactly one label column")
    feature_specs = [s for s in specs if s.kind != "label"]
    _check_no_missing(table, [s.name for s in specs if s.name in table.columns])
    blocks = []
    names = []
    unknown = {}
    for spec in feature_specs:
        if spec.name not in table.columns:
            raise PipelineError(f"column {spec.name!r} missing from the table")
        if spec.kind == "numerical":
            values = table[spec.name].to_numpy(dtype=float)
            blocks.append(((values - spec.mean) / spec.std)[:, None])
        else:
            values = table[spec.name].astype(str).to_numpy()
            block = np.zeros((len(values), len(spec.categories)))
            index = {c: i for i, c in enumerate(spec.categories)}
            for r, val in enumerate(values):
                col = index.get(val)
                if col is None:
                    unknown[spec.name] = unknown.get(spec.name, 0) + 1
                else:
                    block[r, col] = 1.0
            blocks.append(block)
        names.extend(spec.encoded_names())
    if unknown:
        warnings.warn(f"unseen categories left all-zero blocks: {unknown}",
                      UnknownCategoryWarning, stacklevel=2)
    labels = _label_values(table, label_spec[0].name)
    features = np.hstack(blocks) if blocks else np.zeros((len(table), 0))
    return EncodedDataset(features, labels, specs, tuple(names),
                          {"unknown_categories": unknown})


@dataclass(frozen=True)
class CorrelationDrop:
    kept: str
    dropped: str
    r: float


def correlation_filter(table: pd.DataFrame, kinds: dict, threshold: float):
    """Drop the later of any numerical pair with |Pearson r| >= threshold."""
    numeric = [c for c, k in kinds.items() if k == "numerical"
               and c in table.columns]
    if len(numeric) < 2:
        return table, []
    values = table[numeric].to_numpy(dtype=float)
    with np.errstate(invalid="ignore"):
        corr = np.corrcoef(values, rowvar=False)
    dropped = set()
    report = []
    for i in range(len(numeric)):
        if numeric[i] in dropped:
            continue
        for j in range(i + 1, len(numeric)):
            if numeric[j] in dropped:
                continue
            r = corr[i, j]
            if np.isfinite(r) and abs(r) >= threshold:
                dropped.add(numeric[j])
                report.append(CorrelationDrop(numeric[i], numeric[j], float(r)))
    return table.drop(columns=sorted(dropped)), report


def undersample_balance(table: pd.DataFrame, label_col: str,
                        seed: int) -> pd.DataFrame:
    """Keep every fraud row plus an equal uniform sample of the majority."""
    labels = _label_values(table, label_col)
    minority_idx = np.flatnonzero(labels == 1)
    majority_idx = np.flatnonzero(labels == 0)
    if len(minority_idx) == 0 or len(majority_idx) == 0:
        raise PipelineError("both classes must be non-empty")
    if len(majority_idx) < len(minority_idx):
        raise PipelineError(
            f"majority class ({len(majority_idx)}) smaller than minority "
            f"({len(minority_idx)}); undersampling is undefined")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(majority_idx, size=len(minority_idx), replace=False)
    keep = np.sort(np.concatenate([minority_idx, chosen]))
    return table.iloc[keep].reset_index(drop=True)


def split(table: pd.DataFrame, label_col: str, train_fraction: float = 0.8,
          seed: int = 0):
    """Stratified train/test split; disjoint and exhaustive.

    The train size is round(fraction * n) overall; strata receive their
    proportional share by largest remainder so the total is preserved.
    """
    if not 0 < train_fraction < 1:
        raise DomainError("train_fraction must lie in (0, 1)")
    if len(table) == 0:
        raise PipelineError("cannot split an empty table")
    labels = _label_values(table, label_col)
    rng = np.random.default_rng(seed)
    classes = [cls for cls in (0, 1) if (labels == cls).any()]
    counts = {cls: int((labels == cls).sum()) for cls in classes}
    total_train = int(np.floor(train_fraction * len(table) + 0.5))
    quota = {cls: train_fraction * counts[cls] for cls in classes}
    take = {cls: int(np.floor(quota[cls])) for cls in classes}
    leftover = total_train - sum(take.values())
    by_remainder = sorted(classes, key=lambda c: (take[c] - quota[c], c))
    for cls in by_remainder[:leftover]:
        take[cls] += 1
    train_idx = []
    test_idx = []
    for cls in classes:
        order = rng.permutation(np.flatnonzero(labels == cls))
        train_idx.extend(order[:take[cls]])
        test_idx.extend(order[take[cls]:])
    train = table.iloc[np.sort(train_idx)].reset_index(drop=True)
    test = table.iloc[np.sort(test_idx)].reset_index(drop=True)
    return train, test


_CATEGORY_NAMES = ("A", "B", "C")


def synth_generate(n_rows: int, n_numeric: int, n_categorical: int,
                   class_sep: float, fraud_rate: float,
                   seed: int) -> pd.DataFrame:
    """Class-conditional synthetic transactions.

    Numeric feature f is standard normal shifted by ``class_sep`` for
    fraud rows. Categorical features use three categories whose odds
    tilt oppositely for the two classes, with tilt strength
    ``class_sep / 2`` in log-odds, so ``class_sep = 0`` carries no
    signal at all.
    """
    if n_rows < 1 or n_numeric < 1 or n_categorical < 0:
        raise DomainError("row and feature counts must be positive")
    if not 0 < fraud_rate <= 0.5:
        raise DomainError("fraud_rate must lie in (0, 0.5]")
    rng = np.random.default_rng(seed)
    n_fraud = int(round(fraud_rate * n_rows))
    labels = np.zeros(n_rows, dtype=np.int8)
    labels[rng.permutation(n_rows)[:n_fraud]] = 1
    data = {}
    for f in range(n_numeric):
        data[f"num_{f}"] = rng.standard_normal(n_rows) + class_sep * labels
    tilt = class_sep / 2.0
    logits = {0: np.array([tilt, 0.0, -tilt]), 1: np.array([-tilt, 0.0, tilt])}
    probs = {cls: np.exp(lg) / np.exp(lg).sum() for cls, lg in logits.items()}
    for f in range(n_categorical):
        column = np.empty(n_rows, dtype=object)
        for cls in (0, 1):
            rows = np.flatnonzero(labels == cls)
            column[rows] = rng.choice(_CATEGORY_NAMES, size=len(rows),
                                      p=probs[cls])
        data[f"cat_{f}"] = column
    data["label"] = labels
    return pd.DataFrame(data)


def synth_kinds(n_numeric: int, n_categorical: int) -> dict:
    kinds = {f"num_{f}": "numerical" for f in range(n_numeric)}
    kinds.update({f"cat_{f}": "categorical" for f in range(n_categorical)})
    kinds["label"] = "label"
    return kinds


def specs_to_json(specs, path, provenance=None):
    payload = {
        "format": "annealrbm-specs/1",
        "columns": [
            {"name": s.name, "kind": s.kind,
             "categories": list(s.categories) if s.categories else None,
             "mean": s.mean, "std": s.std}
            for s in specs
        ],
        "provenance": provenance or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def specs_from_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "annealrbm-specs/1":
        raise PipelineError(f"{path}: unsupported specs format")
    specs = []
    for entry in payload["columns"]:
        cats = entry.get("categories")
        specs.append(ColumnSpec(entry["name"], entry["kind"],
                                tuple(cats) if cats else None,
                                entry.get("mean"), entry.get("std")))
    return tuple(specs)


def save_encoded(dataset: EncodedDataset, csv_path, specs_path=None):
    """Encoded CSV: feature columns then ``label``; floats via repr."""
    with open(csv_path, "w") as fh:
        fh.write(",".join(list(dataset.feature_names) + ["label"]) + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(x)) for x in row)
                     + f",{int(label)}\n")
    if specs_path is not None:
        specs_to_json(dataset.specs, specs_path, dataset.provenance)


def load_encoded(csv_path, specs_path) -> EncodedDataset:
    specs = specs_from_json(specs_path)
    with open(csv_path) as fh:
        lines = fh.read().splitlines()
    names = lines[0].split(",")
    if names[-1] != "label":
        raise PipelineError(f"{csv_path}: last column must be 'label'")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    features = np.array([[float(x) for x in row[:-1]] for row in rows])
    labels = np.array([int(row[-1]) for row in rows], dtype=np.int8)
    if features.size == 0:
        features = features.reshape(len(rows), len(names) - 1)
    return EncodedDataset(features, labels, specs, tuple(names[:-1]))
