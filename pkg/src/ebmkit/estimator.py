"""sklearn-style estimator facade for the explainable boosting machine.

Accepts mixed-dtype DataFrames (float columns are treated as continuous,
everything else as categorical) or plain numeric arrays. The fitted
``model_`` is the portable EbmModel; the estimator adds the ecosystem
surface: get_params/set_params, predict/predict_proba/decision_function,
and explanation helpers.
"""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .boosting import TrainConfig, fit_ebm_arrays
from .errors import DataError
from .model import feature_importance
from .schema import CATEGORICAL, CONTINUOUS


def ensure_feature_frame(X) -> pd.DataFrame:
    """Input validation helper: accept a DataFrame or 2-D array, reject
    empties, and return a DataFrame with stable column names."""
    if isinstance(X, pd.DataFrame):
        if X.shape[1] == 0:
            raise DataError("no feature columns")
        return X
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise DataError(f"expected 2-D input, got shape {arr.shape}")
    return pd.DataFrame({f"x{i}": arr[:, i].astype(np.float64) for i in range(arr.shape[1])})


def infer_feature_kinds(X: pd.DataFrame) -> dict[str, str]:
    """Float dtypes are continuous; int/object/bool columns categorical."""
    kinds = {}
    for name in X.columns:
        kinds[name] = CONTINUOUS if X[name].dtype.kind == "f" else CATEGORICAL
    return kinds


def ensure_binary_target(y) -> tuple[np.ndarray, np.ndarray]:
    """Validate a two-class target; returns (classes, 0/1 vector with the
    larger class label mapped to 1)."""
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) != 2:
        raise DataError(f"need exactly two classes, got {classes}")
    return classes, (y == classes[1]).astype(np.float64)


class EbmClassifier(BaseEstimator, ClassifierMixin):
    """Explainable boosting machine: an additive model of boosted shallow
    per-feature trees with optional pairwise interaction terms.

    Parameters mirror TrainConfig; bagging defaults are outer_bags=25,
    inner_bags=25, min_samples_leaf=25, interactions=20.
    """

    def __init__(self, outer_bags: int = 25, inner_bags: int = 25,
                 min_samples_leaf: int = 25, interactions: int = 20,
                 learning_rate: float = 0.01, max_leaves_per_update: int = 3,
                 max_epochs: int = 5000, early_stop_patience: int = 50,
                 validation_fraction: float = 0.15, max_bins: int = 256,
                 pair_bins: int = 32, random_state: int = 0,
                 n_jobs: int | None = None, verbose: int = 0,
                 feature_kinds: dict[str, str] | None = None):
        self.outer_bags = outer_bags
        self.inner_bags = inner_bags
        self.min_samples_leaf = min_samples_leaf
        self.interactions = interactions
        self.learning_rate = learning_rate
        self.max_leaves_per_update = max_leaves_per_update
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.max_bins = max_bins
        self.pair_bins = pair_bins
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.verbose = verbose
        self.feature_kinds = feature_kinds

    def _config(self) -> TrainConfig:
        return TrainConfig(
            outer_bags=self.outer_bags, inner_bags=self.inner_bags,
            min_samples_leaf=self.min_samples_leaf, interactions=self.interactions,
            learning_rate=self.learning_rate,
            max_leaves_per_update=self.max_leaves_per_update,
            max_epochs=self.max_epochs, early_stop_patience=self.early_stop_patience,
            validation_fraction=self.validation_fraction, seed=self.random_state,
            max_bins=self.max_bins, pair_bins=self.pair_bins,
            n_jobs=self.n_jobs, verbose=self.verbose)

    def fit(self, X, y):
        frame = ensure_feature_frame(X)
        self.classes_, yb = ensure_binary_target(y)
        if len(frame) != len(yb):
            raise DataError("X and y disagree on row count")
        kinds = self.feature_kinds or infer_feature_kinds(frame)
        self.feature_names_in_ = list(frame.columns)
        self.n_features_in_ = len(self.feature_names_in_)
        columns = {name: frame[name].to_numpy() for name in frame.columns}
        self.model_ = fit_ebm_arrays(columns, kinds, self.feature_names_in_, yb,
                                     self._config())
        self.term_importances_ = feature_importance(self.model_, frame)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict_logit_rows(ensure_feature_frame(X))

    def predict_proba(self, X) -> np.ndarray:
        p = self.model_.predict_proba_rows(ensure_feature_frame(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.classes_[(self.decision_function(X) > 0.0).astype(int)]

    def explain_local(self, X) -> list:
        """Per-row additive term breakdowns (LocalExplanation objects)."""
        check_is_fitted(self, "model_")
        return self.model_.explain_rows(ensure_feature_frame(X))

    def term_importances(self, X=None) -> list:
        """Mean |log-odds contribution| per term over X (training importances
        when X is omitted)."""
        check_is_fitted(self, "model_")
        if X is None:
            return list(self.term_importances_)
        return feature_importance(self.model_, ensure_feature_frame(X))
