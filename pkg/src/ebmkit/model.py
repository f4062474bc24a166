"""The trained additive model: prediction, local explanation, global
importance, and versioned JSON serialization.

Additivity is exact by construction: the predicted logit is computed by
summing the same per-term contributions, in the same order, that a local
explanation reports. Tests pin this at tolerance zero.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .binning import BinDefinition, bin_column
from .errors import DataError, ModelFormatError, SchemaError
from .schema import Cohort
from .truth import sigmoid

FORMAT_NAME = "ebmkit-model"
FORMAT_VERSION = 1


@dataclass
class ShapeFunction:
    """One feature's contribution table with outer-bag error bars."""

    bins: BinDefinition
    table: np.ndarray    # log-odds contribution per bin
    stds: np.ndarray     # outer-bag sample std per bin, >= 0
    counts: np.ndarray   # training rows per bin

    @property
    def name(self) -> str:
        return self.bins.feature


@dataclass
class PairShape:
    """A pairwise interaction surface on a coarsened 2-D bin grid.

    ``cmap_*`` translate a parent feature's full bin index to the coarse
    axis index.
    """

    feature_i: str
    feature_j: str
    cmap_i: np.ndarray
    cmap_j: np.ndarray
    grid: np.ndarray     # (dim_i, dim_j) log-odds contributions
    counts: np.ndarray   # (dim_i, dim_j) training rows per cell

    @property
    def name(self) -> str:
        return f"{self.feature_i} x {self.feature_j}"


@dataclass
class LocalExplanation:
    """Additive per-term breakdown of one prediction.

    ``terms`` stay in model term order so that intercept + sum(terms)
    reproduces the predicted logit exactly; use sorted_terms() for display.
    """

    terms: list[tuple[str, float]]
    intercept: float
    logit: float
    probability: float

    def sorted_terms(self) -> list[tuple[str, float]]:
        return sorted(self.terms, key=lambda t: (-abs(t[1]), t[0]))


@dataclass
class EbmModel:
    intercept: float
    shapes: list[ShapeFunction]
    pairs: list[PairShape]
    outcome: str
    train_prevalence: float
    config: dict = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)
    link: str = "logistic"

    @property
    def feature_names(self) -> list[str]:
        return [s.name for s in self.shapes]

    @property
    def term_names(self) -> list[str]:
        return [s.name for s in self.shapes] + [p.name for p in self.pairs]

    def shape(self, feature: str) -> ShapeFunction:
        for s in self.shapes:
            if s.name == feature:
                return s
        raise SchemaError(f"unknown feature {feature!r}; model has {self.feature_names}")

    # -- prediction ---------------------------------------------------------

    def _columns_of(self, X) -> dict[str, np.ndarray]:
        if isinstance(X, Cohort):
            return {name: X.columns[name] for name in self.feature_names}
        if isinstance(X, pd.DataFrame):
            cols = {}
            for name in self.feature_names:
                if name not in X.columns:
                    raise SchemaError(f"input is missing model feature {name!r}")
                cols[name] = X[name].to_numpy()
            return cols
        if isinstance(X, dict):
            return {name: np.asarray(X[name]) for name in self.feature_names}
        raise SchemaError("expected a DataFrame, Cohort, or column dict")

    def bin_indices(self, X) -> dict[str, np.ndarray]:
        cols = self._columns_of(X)
        out = {}
        unseen = {}
        for s in self.shapes:
            idx, cnt = bin_column(cols[s.name], s.bins)
            out[s.name] = idx
            if cnt:
                unseen[s.name] = cnt
        if unseen:
            warnings.warn(f"unseen categories mapped to Missing: {unseen}", stacklevel=2)
        return out

    def term_contributions(self, X) -> np.ndarray:
        """(n_rows, n_terms) contribution matrix, term order = univariate
        shapes then pairs."""
        idx = self.bin_indices(X)
        n = len(next(iter(idx.values())))
        cols = []
        for s in self.shapes:
            cols.append(s.table[idx[s.name]])
        for p in self.pairs:
            ci = p.cmap_i[idx[p.feature_i]]
            cj = p.cmap_j[idx[p.feature_j]]
            cols.append(p.grid[ci, cj])
        return np.column_stack(cols) if cols else np.zeros((n, 0))

    def predict_logit_rows(self, X) -> np.ndarray:
        """intercept + term contributions, summed left to right in term
        order (the same arithmetic path local explanations report)."""
        terms = self.term_contributions(X)
        out = np.full(terms.shape[0], self.intercept)
        for t in range(terms.shape[1]):
            out += terms[:, t]
        return out

    def predict_proba_rows(self, X) -> np.ndarray:
        return sigmoid(self.predict_logit_rows(X))

    def explain_rows(self, X) -> list[LocalExplanation]:
        terms = self.term_contributions(X)
        names = self.term_names
        out = []
        for i in range(terms.shape[0]):
            z = self.intercept
            for t in range(terms.shape[1]):
                z += terms[i, t]
            out.append(LocalExplanation(
                terms=list(zip(names, (float(v) for v in terms[i]))),
                intercept=self.intercept, logit=float(z),
                probability=float(sigmoid(np.array([z]))[0])))
        return out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "ebm",
            "link": self.link,
            "outcome": self.outcome,
            "intercept": self.intercept,
            "train_prevalence": self.train_prevalence,
            "config": self.config,
            "units": self.units,
            "features": [
                {"bins": s.bins.to_dict(),
                 "table": [float(v) for v in s.table],
                 "stds": [float(v) for v in s.stds],
                 "counts": [int(v) for v in s.counts]}
                for s in self.shapes
            ],
            "pairs": [
                {"feature_i": p.feature_i, "feature_j": p.feature_j,
                 "cmap_i": [int(v) for v in p.cmap_i],
                 "cmap_j": [int(v) for v in p.cmap_j],
                 "grid": [[float(v) for v in row] for row in p.grid],
                 "counts": [[int(v) for v in row] for row in p.counts]}
                for p in self.pairs
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EbmModel":
        shapes = []
        for f in doc["features"]:
            bins = BinDefinition.from_dict(f["bins"])
            shapes.append(ShapeFunction(
                bins=bins,
                table=np.array(f["table"], dtype=np.float64),
                stds=np.array(f["stds"], dtype=np.float64),
                counts=np.array(f["counts"], dtype=np.int64)))
        pairs = []
        for p in doc["pairs"]:
            pairs.append(PairShape(
                feature_i=p["feature_i"], feature_j=p["feature_j"],
                cmap_i=np.array(p["cmap_i"], dtype=np.int32),
                cmap_j=np.array(p["cmap_j"], dtype=np.int32),
                grid=np.array(p["grid"], dtype=np.float64),
                counts=np.array(p["counts"], dtype=np.int64)))
        return cls(intercept=doc["intercept"], shapes=shapes, pairs=pairs,
                   outcome=doc["outcome"], train_prevalence=doc["train_prevalence"],
                   config=doc.get("config", {}), units=doc.get("units", {}),
                   link=doc.get("link", "logistic"))


def predict_logit(model: EbmModel, row) -> float:
    """Single-row logit: intercept + every term contribution."""
    return float(model.predict_logit_rows(_one_row(row, model))[0])


def predict_proba(model: EbmModel, X) -> np.ndarray:
    return model.predict_proba_rows(X)


def local_explanation(model: EbmModel, row) -> LocalExplanation:
    return model.explain_rows(_one_row(row, model))[0]


def _one_row(row, model: EbmModel):
    if isinstance(row, pd.Series):
        return pd.DataFrame([row])
    if isinstance(row, dict):
        return {k: np.array([v], dtype=object if isinstance(v, str) else None)
                for k, v in row.items()}
    return row


def feature_importance(model: EbmModel, reference) -> list[tuple[str, float, str]]:
    """Mean absolute log-odds contribution per term over a reference
    population, ranked descending (ties by name). Pairs are flagged."""
    terms = model.term_contributions(reference)
    if terms.shape[0] == 0:
        raise DataError("cannot rank importances on an empty cohort")
    means = np.abs(terms).mean(axis=0)
    kinds = ["feature"] * len(model.shapes) + ["pair"] * len(model.pairs)
    rows = [(name, float(m), kind) for name, m, kind in zip(model.term_names, means, kinds)]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


# -- model file I/O (shared envelope for EBM and the LR baseline) -----------

def model_to_bytes(obj) -> bytes:
    """Versioned JSON encoding; floats keep full round-trip precision."""
    doc = obj.to_dict()
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def model_from_bytes(data: bytes):
    from .baseline import LrModel  # local import to avoid a cycle
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model payload: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not an ebmkit model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model version {doc.get('version')!r} (expected {FORMAT_VERSION})")
    kind = doc.get("kind")
    if kind == "ebm":
        return EbmModel.from_dict(doc)
    if kind == "lr":
        return LrModel.from_dict(doc)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(obj, path) -> None:
    data = model_to_bytes(obj)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    import os
    os.replace(tmp, path)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
