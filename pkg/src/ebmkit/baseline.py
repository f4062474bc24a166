"""Logistic regression baseline, fitted by full-batch Newton iterations on
the dummy-encoded design matrix.

Parameter vector convention: features first, bias last; l2 applies to the
feature weights only. Continuous columns are standardized with training
statistics for optimization and the fitted weights are folded back to raw
scale, so prediction never needs the statistics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError
from .model import FORMAT_NAME, FORMAT_VERSION
from .preprocess import DesignMatrix, DummyEncoder, MeanImputer
from .truth import sigmoid


@dataclass
class LrModel:
    weights: np.ndarray          # raw-scale, aligned to design columns
    bias: float                  # raw-scale
    column_names: list[str]
    l2: float
    means: np.ndarray            # train standardization stats (continuous cols)
    stds: np.ndarray
    imputation_means: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": "lr",
            "link": "logistic",
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "column_names": list(self.column_names),
            "l2": self.l2,
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "imputation_means": {k: float(v) for k, v in self.imputation_means.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LrModel":
        return cls(weights=np.array(doc["weights"], dtype=np.float64),
                   bias=float(doc["bias"]), column_names=list(doc["column_names"]),
                   l2=float(doc["l2"]), means=np.array(doc["means"], dtype=np.float64),
                   stds=np.array(doc["stds"], dtype=np.float64),
                   imputation_means=doc.get("imputation_means", {}))


def _as_matrix(design) -> tuple[np.ndarray, list[str]]:
    if isinstance(design, DesignMatrix):
        return design.values, design.column_names
    X = np.asarray(design, dtype=np.float64)
    return X, [f"x{i}" for i in range(X.shape[1])]


def lr_loss(weights: np.ndarray, design, labels, l2: float) -> float:
    """Mean log-loss plus (l2/2)*||w||^2 over the feature weights (bias free)."""
    X, _ = _as_matrix(design)
    y = np.asarray(labels, dtype=np.float64)
    w, b = weights[:-1], weights[-1]
    p = sigmoid(X @ w + b)
    p = np.clip(p, 1e-15, 1 - 1e-15)
    nll = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    return float(nll + 0.5 * l2 * np.dot(w, w))


def lr_gradient(weights: np.ndarray, design, labels, l2: float) -> np.ndarray:
    """Gradient of lr_loss: [X^T (p - y) / n + l2 w, mean(p - y)]; the bias
    entry (last) is unregularized."""
    X, _ = _as_matrix(design)
    y = np.asarray(labels, dtype=np.float64)
    n, d = X.shape
    if len(weights) != d + 1:
        raise ConfigError(f"weights length {len(weights)} != design width {d} + bias")
    w, b = weights[:-1], weights[-1]
    p = sigmoid(X @ w + b)
    g = X.T @ (p - y) / n + l2 * w
    return np.concatenate([g, [np.mean(p - y)]])


def _continuous_mask(X: np.ndarray) -> np.ndarray:
    """Columns that are not pure 0/1 indicators get standardized."""
    mask = np.zeros(X.shape[1], dtype=bool)
    for j in range(X.shape[1]):
        col = X[:, j]
        mask[j] = not np.all((col == 0.0) | (col == 1.0))
    return mask


def fit_lr(design, labels, l2: float = 1e-4, tol: float = 1e-8,
           max_iter: int = 200, w0=None) -> LrModel:
    """Minimize the l2-regularized logistic loss by damped Newton steps to
    gradient-infinity-norm <= tol.

    Deterministic: starts at zero (or at ``w0`` in standardized coordinates;
    with l2 > 0 the optimum is unique, so the start only matters for tests).
    The l2 penalty acts on the standardized weights; the returned model is
    folded back to raw scale.
    """
    if l2 < 0:
        raise ConfigError("l2 must be >= 0")
    X_raw, names = _as_matrix(design)
    y = np.asarray(labels, dtype=np.float64)
    n, d = X_raw.shape
    if n != len(y):
        raise DataError("design and labels disagree on row count")
    cont = _continuous_mask(X_raw)
    means = np.where(cont, X_raw.mean(axis=0), 0.0)
    sd = X_raw.std(axis=0)
    stds = np.where(cont & (sd > 0), sd, 1.0)
    X = (X_raw - means) / stds

    theta = np.zeros(d + 1) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    reg = np.concatenate([np.full(d, l2), [0.0]])
    for _ in range(max_iter):
        g = lr_gradient(theta, X, y, l2)
        if np.max(np.abs(g)) <= tol:
            break
        p = sigmoid(X @ theta[:-1] + theta[-1])
        h = p * (1 - p)
        Xb = np.hstack([X, np.ones((n, 1))])
        H = (Xb * h[:, None]).T @ Xb / n + np.diag(reg)
        step = np.linalg.solve(H, g)
        loss0 = lr_loss(theta, X, y, l2)
        scale = 1.0
        for _ in range(30):
            cand = theta - scale * step
            if lr_loss(cand, X, y, l2) <= loss0:
                theta = cand
                break
            scale *= 0.5
        else:
            break  # no descent direction left at float precision

    w_std, b_std = theta[:-1], theta[-1]
    w_raw = w_std / stds
    b_raw = float(b_std - np.dot(w_std, means / stds))
    return LrModel(weights=w_raw, bias=b_raw, column_names=names, l2=l2,
                   means=means, stds=stds)


def predict_lr(model: LrModel, design) -> np.ndarray:
    """sigmoid(X w + b) on the raw design (training encoding map required)."""
    X, _ = _as_matrix(design)
    if X.shape[1] != len(model.weights):
        raise DataError(f"design width {X.shape[1]} != model width {len(model.weights)}")
    return sigmoid(X @ model.weights + model.bias)


class LogisticBaseline(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper: mean-impute, dummy-encode, standardize, Newton fit."""

    def __init__(self, l2: float = 1e-4, tol: float = 1e-8, max_iter: int = 200):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X: pd.DataFrame, y):
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise DataError(f"need binary labels, got classes {self.classes_}")
        yb = (y == self.classes_[1]).astype(np.float64)
        X = _ensure_frame(X)
        self.imputer_ = MeanImputer().fit(X)
        Xi = self.imputer_.transform(X)
        self.encoder_ = DummyEncoder().fit(Xi)
        design = self.encoder_.transform(Xi)
        self.model_ = fit_lr(design, yb, l2=self.l2, tol=self.tol, max_iter=self.max_iter)
        self.model_.imputation_means = dict(self.imputer_.means_)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        design = self.encoder_.transform(self.imputer_.transform(_ensure_frame(X)))
        return design.values @ self.model_.weights + self.model_.bias

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


def _ensure_frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X
    arr = np.asarray(X)
    return pd.DataFrame({f"x{i}": arr[:, i].astype(np.float64) for i in range(arr.shape[1])})
