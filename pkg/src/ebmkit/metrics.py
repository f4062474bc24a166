"""Evaluation: AUROC (rank-based, with a brute-force pairwise oracle),
log-loss, equal-frequency calibration curves, and the cross-validation /
hospital-external-validation harness.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .baseline import fit_lr, predict_lr
from .boosting import TrainConfig, fit_ebm
from .errors import DataError, MetricError
from .preprocess import DummyEncoder, hospital_split, kfold
from .schema import Cohort


def _check_two_classes(labels: np.ndarray):
    y = np.asarray(labels)
    npos = int((y == 1).sum())
    nneg = int((y == 0).sum())
    if npos == 0 or nneg == 0:
        raise MetricError("AUROC needs both classes present")
    return y, npos, nneg


def _tied_ranks(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); ties share the mean of their rank block."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(sx):
        j = i
        while j + 1 < len(sx) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score+ > score-) + 0.5 P(tie), via average
    ranks in O(n log n)."""
    y, npos, nneg = _check_two_classes(labels)
    s = np.asarray(scores, dtype=np.float64)
    ranks = _tied_ranks(s)
    u = ranks[y == 1].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def auroc_bruteforce(scores, labels) -> float:
    """Test oracle: explicit comparison of every positive-negative pair,
    ties counted one half. Quadratic; keep n <= 10^4."""
    y, npos, nneg = _check_two_classes(labels)
    s = np.asarray(scores, dtype=np.float64)
    if len(s) > 10_000:
        raise MetricError("brute-force AUROC is quadratic; n must be <= 10000")
    pos = s[y == 1]
    neg = s[y == 0]
    wins = 0.0
    for p in pos:
        wins += np.count_nonzero(p > neg) + 0.5 * np.count_nonzero(p == neg)
    return float(wins / (npos * nneg))


def log_loss(probs, labels) -> float:
    """-mean[y ln p + (1-y) ln(1-p)] with probabilities clipped to
    [1e-15, 1 - 1e-15]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), 1e-15, 1 - 1e-15)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


@dataclass(frozen=True)
class CalibrationPoint:
    mean_predicted: float
    observed_rate: float
    count: int


def calibration_curve(probs, labels, bins: int = 10,
                      strategy: str = "frequency") -> list[CalibrationPoint]:
    """Reliability curve: per bin, (mean predicted, observed positive rate,
    count).

    Bins are equal-frequency by default (with rare outcomes, equal-width
    bins over [0,1] would be almost all empty); pass strategy="width" for
    equal-width. Identical quantile boundaries merge, so constant inputs
    produce a single bin. Counts partition n.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise MetricError("calibration needs probabilities in [0, 1]")
    if len(p) < bins:
        raise MetricError(f"need at least {bins} rows for {bins} bins")
    if strategy == "frequency":
        qs = np.quantile(p, np.arange(1, bins) / bins)
        boundaries = np.unique(qs)
        idx = np.searchsorted(boundaries, p, side="right")
        nb = len(boundaries) + 1
    elif strategy == "width":
        edges = np.linspace(0.0, 1.0, bins + 1)[1:-1]
        boundaries = edges
        idx = np.searchsorted(boundaries, p, side="right")
        nb = bins
    else:
        raise MetricError(f"unknown calibration strategy {strategy!r}")
    points = []
    for b in range(nb):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        points.append(CalibrationPoint(float(p[mask].mean()), float(y[mask].mean()), cnt))
    return points


# ---------------------------------------------------------------------------
# trainers (model recipes) for the evaluation harness

class EbmTrainer:
    """Recipe: mean-impute with train means, then fit an EBM on the
    outcome's allowlisted features."""

    def __init__(self, config: TrainConfig | None = None, name: str = "ebm"):
        self.config = config or TrainConfig()
        self.name = name

    def fit(self, train: Cohort, outcome: str):
        from .preprocess import impute_mean
        imputed, stats = impute_mean(train)
        model = fit_ebm(imputed, outcome, self.config)
        model.config["imputation_means"] = dict(stats.means)

        def scorer(cohort: Cohort) -> np.ndarray:
            test_imputed, _ = impute_mean(cohort, stats)
            return model.predict_proba_rows(test_imputed)

        scorer.model = model
        return scorer


class LrTrainer:
    """Recipe: mean-impute, dummy-encode with train categories, Newton LR."""

    def __init__(self, l2: float = 1e-4, tol: float = 1e-8, name: str = "lr"):
        self.l2 = l2
        self.tol = tol
        self.name = name

    def fit(self, train: Cohort, outcome: str):
        from .preprocess import impute_mean
        imputed, stats = impute_mean(train)
        frame = imputed.feature_frame(outcome)
        encoder = DummyEncoder().fit(frame)
        design = encoder.transform(frame)
        model = fit_lr(design, train.labels(outcome).astype(np.float64),
                       l2=self.l2, tol=self.tol)
        model.imputation_means = dict(stats.means)

        def scorer(cohort: Cohort) -> np.ndarray:
            test_imputed, _ = impute_mean(cohort, stats)
            return predict_lr(model, encoder.transform(test_imputed.feature_frame(outcome)))

        scorer.model = model
        return scorer


class ExternalScoreTrainer:
    """Recipe backed by an externally produced score file: no fitting, the
    scorer joins scores to cohort rows by row id."""

    def __init__(self, scores_by_id: dict[int, float], name: str = "external"):
        self.scores_by_id = scores_by_id
        self.name = name

    def fit(self, train: Cohort, outcome: str):
        def scorer(cohort: Cohort) -> np.ndarray:
            return align_external_scores(self.scores_by_id, cohort)
        return scorer


def ingest_external_scores(path) -> dict[int, float]:
    """Read a (row_id, score) CSV into a mapping keyed by row id."""
    out: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["row_id", "score"]:
            raise DataError(f"{path}: expected header 'row_id,score', got {header[:2]}")
        for line_no, row in enumerate(reader, start=2):
            try:
                out[int(row[0])] = float(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}: line {line_no}: bad row {row!r}") from None
    return out


def align_external_scores(scores_by_id: dict[int, float], cohort: Cohort) -> np.ndarray:
    missing = [int(i) for i in cohort.row_ids if int(i) not in scores_by_id]
    if missing:
        shown = ", ".join(str(i) for i in missing[:20])
        suffix = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
        raise DataError(f"external scores missing row ids: {shown}{suffix}")
    return np.array([scores_by_id[int(i)] for i in cohort.row_ids], dtype=np.float64)


# ---------------------------------------------------------------------------
# harness

@dataclass
class EvalReport:
    model: str
    outcome: str
    auroc: float
    auroc_std: float | None = None
    fold_aurocs: list[float] | None = None
    log_loss: float | None = None
    calibration: list[CalibrationPoint] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    split: str = ""
    seed: int = 0
    train_hospitals: list[str] | None = None

    def to_dict(self) -> dict:
        return {
            "model": self.model, "outcome": self.outcome,
            "auroc": self.auroc, "auroc_std": self.auroc_std,
            "fold_aurocs": self.fold_aurocs, "log_loss": self.log_loss,
            "calibration": [{"mean_predicted": c.mean_predicted,
                             "observed_rate": c.observed_rate,
                             "count": c.count} for c in self.calibration],
            "n_train": self.n_train, "n_test": self.n_test,
            "split": self.split, "seed": self.seed,
            "train_hospitals": self.train_hospitals,
        }

    def cell(self) -> str:
        """Table cell like "0.756 ± 0.020" (no std part when not applicable)."""
        if self.auroc_std is None:
            return f"{self.auroc:.3f}"
        return f"{self.auroc:.3f} ± {self.auroc_std:.3f}"


def cv_evaluate(trainer, cohort: Cohort, outcome: str, k: int = 5,
                seed: int = 0) -> EvalReport:
    """Label-stratified k-fold: fit on k-1 folds, score the held-out fold;
    report the sample mean and sample standard deviation of the k AUROCs."""
    folds = kfold(cohort, outcome, k=k, seed=seed)
    aurocs = []
    for train, val in folds:
        if len(np.unique(val.labels(outcome))) < 2:
            raise MetricError("a fold has a single class; stratify or use a smaller k")
        scorer = trainer.fit(train, outcome)
        aurocs.append(auroc(scorer(val), val.labels(outcome)))
    arr = np.array(aurocs)
    return EvalReport(model=trainer.name, outcome=outcome,
                      auroc=float(arr.mean()), auroc_std=float(arr.std(ddof=1)),
                      fold_aurocs=[float(a) for a in arr],
                      n_train=cohort.n_rows, n_test=cohort.n_rows,
                      split=f"cv{k}", seed=seed)


def external_validate(trainer, cohort: Cohort, outcome: str, seed: int = 0,
                      target_fraction: float = 0.75,
                      calibration_bins: int = 10) -> EvalReport:
    """Hospital-stratified external validation: train on hospitals holding
    ~target_fraction of patients, evaluate AUROC and calibration on the
    held-out hospitals."""
    train, test, chosen = hospital_split(cohort, target_fraction, seed)
    scorer = trainer.fit(train, outcome)
    scores = scorer(test)
    y = test.labels(outcome)
    in_range = bool(np.all((scores >= 0) & (scores <= 1)))
    return EvalReport(
        model=trainer.name, outcome=outcome,
        auroc=auroc(scores, y),
        log_loss=log_loss(scores, y) if in_range else None,
        calibration=calibration_curve(scores, y, calibration_bins) if in_range else [],
        n_train=train.n_rows, n_test=test.n_rows,
        split="hospital", seed=seed, train_hospitals=sorted(chosen))
