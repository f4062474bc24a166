"""Preprocessing protocol: exclusion rules, mean imputation, dummy encoding,
hospital-stratified splitting and label-stratified k-fold.

Imputation and encoding are sklearn-style transformers (fit on train,
transform anything), with cohort-level convenience wrappers. All test-time
statistics (means, category maps) come from the training data.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, DataError
from .schema import CONTINUOUS, Cohort

BELOW = "below"
ABOVE = "above"


@dataclass(frozen=True)
class ExclusionRule:
    feature: str
    predicate: str  # "below" | "above"
    threshold: float

    def __post_init__(self):
        if self.predicate not in (BELOW, ABOVE):
            raise ConfigError(f"unknown predicate {self.predicate!r} (use 'below' or 'above')")

    def fires(self, values: np.ndarray) -> np.ndarray:
        """Boolean mask of rows the rule drops. Missing values never fire."""
        with np.errstate(invalid="ignore"):
            if self.predicate == BELOW:
                return values < self.threshold
            return values > self.threshold

    @property
    def label(self) -> str:
        sym = "<" if self.predicate == BELOW else ">"
        return f"{self.feature}{sym}{self.threshold:g}"


@dataclass
class ExclusionRuleSet:
    rules: list[ExclusionRule]

    @classmethod
    def obstetric_defaults(cls, duration_feature="labor_hours", weight_feature="baby_weight",
                           bmi_feature="mother_bmi") -> "ExclusionRuleSet":
        """Implausible-record defaults: negative labor duration, birth weight
        over 8000 g, BMI over 120."""
        return cls([
            ExclusionRule(duration_feature, BELOW, 0.0),
            ExclusionRule(weight_feature, ABOVE, 8000.0),
            ExclusionRule(bmi_feature, ABOVE, 120.0),
        ])


@dataclass
class ExclusionReport:
    counts: dict[str, int]
    n_in: int
    n_out: int

    @property
    def n_dropped(self) -> int:
        return self.n_in - self.n_out

    def to_dict(self) -> dict:
        return {"rows_in": self.n_in, "rows_out": self.n_out,
                "rows_dropped": self.n_dropped, "per_rule": self.counts}


def apply_exclusions(cohort: Cohort, rules: ExclusionRuleSet) -> tuple[Cohort, ExclusionReport]:
    """Drop rows that fire any rule; report per-rule counts.

    A row firing several rules is counted once per rule it fires but
    dropped once. Rules never fire on missing values.
    """
    for rule in rules.rules:
        if cohort.schema.kind_of(rule.feature) != CONTINUOUS:
            raise ConfigError(f"exclusion rule on non-continuous column {rule.feature!r}")
    drop = np.zeros(cohort.n_rows, dtype=bool)
    counts: dict[str, int] = {}
    for rule in rules.rules:
        fired = rule.fires(cohort.columns[rule.feature])
        counts[rule.label] = int(fired.sum())
        drop |= fired
    kept = cohort.take(np.flatnonzero(~drop))
    return kept, ExclusionReport(counts, cohort.n_rows, kept.n_rows)


class MeanImputer(BaseEstimator, TransformerMixin):
    """Replace missing continuous values with the training column mean.

    Categorical columns pass through untouched (their missing values are the
    reserved "Missing" token, which stays a category).
    """

    def fit(self, X: pd.DataFrame, y=None):
        self.means_ = {}
        for name in X.columns:
            col = X[name]
            if col.dtype.kind != "f":
                continue
            vals = col.to_numpy()
            finite = vals[~np.isnan(vals)]
            if finite.size == 0:
                raise DataError(f"column {name!r} has no observed values to average")
            self.means_[name] = float(finite.mean())
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        out = {}
        for name in X.columns:
            col = X[name]
            if col.dtype.kind == "f" and name in self.means_:
                vals = col.to_numpy().copy()
                vals[np.isnan(vals)] = self.means_[name]
                out[name] = vals
            else:
                out[name] = col.to_numpy()
        return pd.DataFrame(out, columns=X.columns)


@dataclass
class ImputationStats:
    means: dict[str, float]


def impute_mean(cohort: Cohort, stats: ImputationStats | None = None) -> tuple[Cohort, ImputationStats]:
    """Cohort-level mean imputation.

    With ``stats`` given (from a training cohort) those means are applied;
    otherwise means are computed here and returned for reuse on test data.
    """
    if stats is None:
        imputer = MeanImputer().fit(cohort.feature_frame())
        stats = ImputationStats(dict(imputer.means_))
    cols = dict(cohort.columns)
    for spec in cohort.schema.columns:
        if spec.kind != CONTINUOUS:
            continue
        vals = cols[spec.name]
        mask = np.isnan(vals)
        if spec.name not in stats.means:
            raise DataError(f"no imputation mean recorded for column {spec.name!r}")
        if mask.any():
            vals = vals.copy()
            vals[mask] = stats.means[spec.name]
            cols[spec.name] = vals
    return Cohort(cohort.schema, cols, cohort.row_ids, cohort.true_logit), stats


@dataclass
class DesignMatrix:
    """Dummy-encoded numeric matrix with deterministic column order."""

    values: np.ndarray            # (n, d) float64
    column_names: list[str]
    warnings: list[str] = field(default_factory=list)

    @property
    def shape(self):
        return self.values.shape


class DummyEncoder(BaseEstimator, TransformerMixin):
    """One-hot encode categoricals, pass continuous columns through.

    Column order is deterministic: input column order, categories sorted
    lexicographically (the "Missing" token sorts like any other string).
    Categories unseen at fit time encode to all-zeros and are recorded in
    ``warnings_``.
    """

    def fit(self, X: pd.DataFrame, y=None):
        self.categories_ = {}
        self.columns_ = list(X.columns)
        names: list[str] = []
        for name in self.columns_:
            col = X[name]
            if col.dtype.kind == "f":
                names.append(name)
            else:
                cats = sorted(set(str(v) for v in col))
                self.categories_[name] = cats
                names.extend(f"{name}={c}" for c in cats)
        self.column_names_ = names
        return self

    def transform(self, X: pd.DataFrame) -> DesignMatrix:
        n = len(X)
        blocks = []
        notes: list[str] = []
        for name in self.columns_:
            col = X[name]
            if name not in self.categories_:
                blocks.append(col.to_numpy(dtype=np.float64).reshape(n, 1))
                continue
            cats = self.categories_[name]
            index = {c: i for i, c in enumerate(cats)}
            block = np.zeros((n, len(cats)))
            unseen: dict[str, int] = {}
            for i, v in enumerate(col):
                j = index.get(str(v))
                if j is None:
                    unseen[str(v)] = unseen.get(str(v), 0) + 1
                else:
                    block[i, j] = 1.0
            for tok, cnt in sorted(unseen.items()):
                notes.append(f"{name}: unseen category {tok!r} x{cnt} encoded as all-zeros")
            blocks.append(block)
        if notes:
            warnings.warn("; ".join(notes), stacklevel=2)
        self.warnings_ = notes
        return DesignMatrix(np.hstack(blocks) if blocks else np.zeros((n, 0)), list(self.column_names_), notes)


def dummy_encode(cohort: Cohort, outcome: str | None = None,
                 encoder: DummyEncoder | None = None) -> tuple[DesignMatrix, DummyEncoder]:
    """Cohort-level dummy encoding. Reuses a fitted encoder when given."""
    frame = cohort.feature_frame(outcome)
    if encoder is None:
        encoder = DummyEncoder().fit(frame)
    return encoder.transform(frame), encoder


def _subset_search_exhaustive(sizes: np.ndarray, names: list[str], target: float):
    """Best hospital subset by |train fraction - target|, ties toward the
    larger train set, then the lexicographically smallest name set."""
    total = sizes.sum()
    h = len(sizes)
    masks = np.arange(1, 2 ** h - 1, dtype=np.int64)  # both sides nonempty
    bits = (masks[:, None] >> np.arange(h)) & 1
    fracs = (bits @ sizes) / total
    diffs = np.abs(fracs - target)
    best = diffs.min()
    tied = np.flatnonzero(diffs <= best + 1e-15)
    # larger train fraction first, then lexicographically smallest name set
    candidates = []
    for m in tied:
        chosen = tuple(sorted(names[j] for j in range(h) if bits[m, j]))
        candidates.append((-fracs[m], chosen))
    _, chosen = min(candidates)
    return set(chosen)


def _subset_search_greedy(sizes: np.ndarray, names: list[str], target: float,
                          seed: int, restarts: int = 200):
    total = sizes.sum()
    rng = np.random.default_rng(seed)
    order_idx = np.arange(len(sizes))
    best = None
    for _ in range(restarts):
        rng.shuffle(order_idx)
        chosen: list[int] = []
        acc = 0.0
        for j in order_idx:
            if abs((acc + sizes[j]) / total - target) <= abs(acc / total - target):
                chosen.append(j)
                acc += sizes[j]
        if not chosen or len(chosen) == len(sizes):
            continue
        frac = acc / total
        key = (abs(frac - target), -frac, tuple(sorted(names[j] for j in chosen)))
        if best is None or key < best:
            best = key
    if best is None:
        raise DataError("greedy hospital search found no valid split")
    return set(best[2])


def hospital_split(cohort: Cohort, target_fraction: float = 0.75,
                   seed: int = 0) -> tuple[Cohort, Cohort, set[str]]:
    """Split by hospital so the chosen hospitals' patients are ~target_fraction
    of all patients; no hospital straddles the split.

    Exhaustive subset search up to 20 hospitals, seeded randomized greedy
    beyond. Ties break toward the larger train set, then the
    lexicographically smallest hospital set.
    """
    if not 0 < target_fraction < 1:
        raise ConfigError(f"target_fraction must be in (0,1), got {target_fraction}")
    groups = cohort.groups()
    names, counts = np.unique(groups, return_counts=True)
    if len(names) < 2:
        raise DataError("external validation needs at least 2 hospitals")
    name_list = [str(n) for n in names]
    sizes = counts.astype(np.float64)
    if len(names) <= 20:
        chosen = _subset_search_exhaustive(sizes, name_list, target_fraction)
    else:
        chosen = _subset_search_greedy(sizes, name_list, target_fraction, seed)
    in_train = np.isin(groups, sorted(chosen))
    return cohort.take(np.flatnonzero(in_train)), cohort.take(np.flatnonzero(~in_train)), chosen


def kfold(cohort: Cohort, outcome: str, k: int = 5, seed: int = 0) -> list[tuple[Cohort, Cohort]]:
    """Label-stratified k-fold partition: each fold's positive count is
    within one of proportional; folds are disjoint and exhaustive.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    n = cohort.n_rows
    if n < k:
        raise DataError(f"cannot make {k} folds from {n} rows")
    y = cohort.labels(outcome)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0:
        raise DataError("no positive rows to stratify over")
    rng = np.random.default_rng(seed)
    rng.shuffle(pos)
    rng.shuffle(neg)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[pos] = np.arange(len(pos)) % k
    # continue dealing where the positives stopped so fold sizes stay balanced
    fold_of[neg] = (len(pos) + np.arange(len(neg))) % k
    out = []
    for f in range(k):
        val_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        out.append((cohort.take(train_idx), cohort.take(val_idx)))
    return out


def iter_hospital_subsets(names: list[str]):
    """All nonempty proper subsets, for oracle tests."""
    for r in range(1, len(names)):
        yield from itertools.combinations(names, r)
