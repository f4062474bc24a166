"""Equal-frequency binning for continuous features and category bins for
categorical ones: the integer substrate the boosting stage trains on.

Conventions (tested, do not change silently):
- continuous intervals are right-open; a value equal to a cut point falls
  in the upper bin (index = number of cut points <= value);
- every continuous feature carries a reserved trailing missing bin, kept
  even when the pipeline imputes first (it is then simply empty);
- categorical bins are the lexicographically sorted training categories,
  always including the "Missing" token; unseen test categories map to it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, DataError, SchemaError
from .schema import CATEGORICAL, CONTINUOUS, MISSING_TOKEN, Cohort


@dataclass
class BinDefinition:
    feature: str
    kind: str                               # "continuous" | "categorical"
    cuts: np.ndarray | None = None          # ascending, continuous only
    categories: list[str] | None = None     # includes "Missing", categorical only
    vmin: float | None = None               # observed training range, for exports
    vmax: float | None = None

    def __post_init__(self):
        if self.kind == CONTINUOUS:
            if self.cuts is None:
                raise ConfigError(f"{self.feature}: continuous bins need cut points")
            self.cuts = np.asarray(self.cuts, dtype=np.float64)
            if np.any(np.diff(self.cuts) <= 0):
                raise ConfigError(f"{self.feature}: cut points must be strictly increasing")
        elif self.kind == CATEGORICAL:
            if not self.categories or MISSING_TOKEN not in self.categories:
                raise ConfigError(f"{self.feature}: categorical bins must include {MISSING_TOKEN!r}")
        else:
            raise ConfigError(f"{self.feature}: unknown bin kind {self.kind!r}")

    @property
    def n_ordered(self) -> int:
        """Number of ordered value bins (continuous only; excludes the missing bin)."""
        return len(self.cuts) + 1

    @property
    def n_bins(self) -> int:
        if self.kind == CONTINUOUS:
            return self.n_ordered + 1  # + reserved missing bin
        return len(self.categories)

    @property
    def missing_index(self) -> int:
        if self.kind == CONTINUOUS:
            return self.n_ordered
        return self.categories.index(MISSING_TOKEN)

    def edges(self) -> np.ndarray:
        """Finite bin edges for exports: [vmin, cuts..., vmax]."""
        return np.concatenate([[self.vmin], self.cuts, [self.vmax]])

    def to_dict(self) -> dict:
        if self.kind == CONTINUOUS:
            return {"feature": self.feature, "kind": self.kind,
                    "cuts": [float(c) for c in self.cuts],
                    "vmin": self.vmin, "vmax": self.vmax}
        return {"feature": self.feature, "kind": self.kind, "categories": list(self.categories)}

    @classmethod
    def from_dict(cls, doc: dict) -> "BinDefinition":
        if doc["kind"] == CONTINUOUS:
            return cls(doc["feature"], CONTINUOUS, cuts=np.array(doc["cuts"], dtype=np.float64),
                       vmin=doc["vmin"], vmax=doc["vmax"])
        return cls(doc["feature"], CATEGORICAL, categories=list(doc["categories"]))


def fit_bins(values: np.ndarray, max_bins: int = 256, feature: str = "") -> BinDefinition:
    """Fit quantile cut points on a continuous training column.

    Cut points sit at distinct empirical quantiles (no interpolation, so
    they are observed values); duplicates collapse; a constant column
    yields a single bin with no cuts. NaNs are ignored here (they map to
    the reserved missing bin).
    """
    if max_bins < 2:
        raise ConfigError(f"max_bins must be >= 2, got {max_bins}")
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise DataError(f"cannot fit bins for {feature!r}: no observed values")
    qs = np.arange(1, max_bins) / max_bins
    cuts = np.unique(np.quantile(vals, qs, method="lower"))
    vmin, vmax = float(vals.min()), float(vals.max())
    cuts = cuts[cuts > vmin]  # a cut at the minimum would leave bin 0 empty
    return BinDefinition(feature, CONTINUOUS, cuts=cuts, vmin=vmin, vmax=vmax)


def fit_categorical_bins(tokens: np.ndarray, feature: str = "") -> BinDefinition:
    cats = sorted(set(str(t) for t in tokens) | {MISSING_TOKEN})
    return BinDefinition(feature, CATEGORICAL, categories=cats)


def bin_index(value, bins: BinDefinition) -> int:
    """Map a single value (real, category token, or NaN/None) to its bin."""
    idx, _ = bin_column(np.array([value], dtype=object), bins)
    return int(idx[0])


def bin_column(values: np.ndarray, bins: BinDefinition) -> tuple[np.ndarray, int]:
    """Vectorized bin_index over a column.

    Returns (int32 indices, count of unseen categories mapped to Missing).
    """
    if bins.kind == CONTINUOUS:
        vals = np.asarray(values, dtype=np.float64)
        idx = np.searchsorted(bins.cuts, vals, side="right").astype(np.int32)
        idx[np.isnan(vals)] = bins.missing_index
        return idx, 0
    lookup = {c: i for i, c in enumerate(bins.categories)}
    miss = bins.missing_index
    idx = np.empty(len(values), dtype=np.int32)
    unseen = 0
    for i, v in enumerate(values):
        j = lookup.get(str(v))
        if j is None:
            unseen += 1
            j = miss
        idx[i] = j
    return idx, unseen


@dataclass
class BinnedMatrix:
    """Per-feature integer bin indices plus their definitions."""

    feature_names: list[str]
    definitions: dict[str, BinDefinition]
    indices: dict[str, np.ndarray]          # int32, one vector per feature
    n_rows: int
    unseen_counts: dict[str, int] = field(default_factory=dict)

    def index_array(self, order: list[str] | None = None) -> np.ndarray:
        """Stacked (n_features, n_rows) int32 array in the given order."""
        names = order or self.feature_names
        return np.stack([self.indices[n] for n in names])

    def n_bins(self, name: str) -> int:
        return self.definitions[name].n_bins

    def counts(self, name: str) -> np.ndarray:
        return np.bincount(self.indices[name], minlength=self.n_bins(name)).astype(np.int64)


def fit_feature_bins(cohort: Cohort, feature_names: list[str], max_bins: int = 256) -> dict[str, BinDefinition]:
    """Fit bin definitions on a TRAIN cohort, one per feature."""
    defs = {}
    for name in feature_names:
        kind = cohort.schema.kind_of(name)
        col = cohort.columns[name]
        if kind == CONTINUOUS:
            defs[name] = fit_bins(col, max_bins=max_bins, feature=name)
        elif kind == CATEGORICAL:
            defs[name] = fit_categorical_bins(col, feature=name)
        else:
            raise SchemaError(f"{name!r} is not a feature column")
    return defs


def bin_matrix(cohort: Cohort, definitions: dict[str, BinDefinition],
               feature_names: list[str] | None = None) -> BinnedMatrix:
    """Map every feature row-wise through fitted bins (read-only on the bins)."""
    names = feature_names or list(definitions)
    indices = {}
    unseen = {}
    for name in names:
        if name not in definitions:
            raise SchemaError(f"no bin definition for feature {name!r}")
        if name not in cohort.columns:
            raise SchemaError(f"feature {name!r} missing from cohort")
        idx, cnt = bin_column(cohort.columns[name], definitions[name])
        indices[name] = idx
        if cnt:
            unseen[name] = cnt
    if unseen:
        warnings.warn(f"unseen categories mapped to Missing: {unseen}", stacklevel=2)
    return BinnedMatrix(list(names), {n: definitions[n] for n in names}, indices,
                        cohort.n_rows, unseen)


class QuantileBinner(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: fit bins on a DataFrame, transform to a BinnedMatrix.

    Float columns are binned by quantiles, everything else categorically.
    """

    def __init__(self, max_bins: int = 256):
        self.max_bins = max_bins

    def fit(self, X: pd.DataFrame, y=None):
        self.definitions_ = {}
        for name in X.columns:
            col = X[name]
            if col.dtype.kind == "f":
                self.definitions_[name] = fit_bins(col.to_numpy(), self.max_bins, feature=name)
            else:
                self.definitions_[name] = fit_categorical_bins(col.to_numpy(), feature=name)
        self.feature_names_ = list(X.columns)
        return self

    def transform(self, X: pd.DataFrame) -> BinnedMatrix:
        indices = {}
        unseen = {}
        for name in self.feature_names_:
            idx, cnt = bin_column(X[name].to_numpy(), self.definitions_[name])
            indices[name] = idx
            if cnt:
                unseen[name] = cnt
        if unseen:
            warnings.warn(f"unseen categories mapped to Missing: {unseen}", stacklevel=2)
        return BinnedMatrix(list(self.feature_names_), dict(self.definitions_), indices,
                            len(X), unseen)
