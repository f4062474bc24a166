"""Cyclic gradient boosting of shallow per-feature trees on binned data,
with inner/outer bagging, pairwise-interaction detection, and a second
boosting stage over selected pairs.

Engine vs reference: ``fit_ebm`` drives the numba kernels (one call per
outer bag, bags on a thread pool); ``BoostState``/``boost_epoch`` are a
plain-numpy single-sample reference of the same arithmetic, kept for
readability and pinned equal to the engine in tests at
outer_bags=1/inner_bags=1.
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, replace

import numpy as np
from joblib import Parallel, cpu_count, delayed

from . import _kernels
from .binning import BinnedMatrix, fit_bins, fit_categorical_bins
from .errors import ConfigError, DataError
from .interactions import coarse_axis, detect_interactions, pair_cell_keys
from .model import EbmModel, PairShape, ShapeFunction
from .schema import CONTINUOUS, Cohort
from .truth import sigmoid


@dataclass(frozen=True)
class TrainConfig:
    outer_bags: int = 25
    inner_bags: int = 25
    min_samples_leaf: int = 25
    interactions: int = 20
    learning_rate: float = 0.01
    max_leaves_per_update: int = 3
    max_epochs: int = 5000
    early_stop_patience: int = 50
    early_stop_tolerance: float = 1e-5
    validation_fraction: float = 0.15
    seed: int = 0
    max_bins: int = 256
    pair_bins: int = 32
    n_jobs: int | None = None
    verbose: int = 0

    def __post_init__(self):
        for name in ("outer_bags", "inner_bags", "min_samples_leaf",
                     "max_leaves_per_update", "max_epochs", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.interactions < 0:
            raise ConfigError("interactions must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.early_stop_tolerance < 0.0:
            raise ConfigError("early_stop_tolerance must be >= 0")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ConfigError(f"validation_fraction must be in (0, 0.5), got {self.validation_fraction}")
        if self.max_bins < 2:
            raise ConfigError("max_bins must be >= 2")
        if self.pair_bins < 2:
            raise ConfigError("pair_bins must be >= 2")

    def fast(self) -> "TrainConfig":
        """Test-speed profile: 3 outer bags, no inner bagging. Error bars are
        noisier and shapes slightly rougher than the defaults."""
        return replace(self, outer_bags=3, inner_bags=1)


@dataclass
class EarlyStopTracker:
    """Stop after `patience` epochs without the validation loss improving
    by more than `tolerance` (spurious sub-tolerance wiggles on noise do
    not reset the clock)."""

    patience: int
    tolerance: float = 0.0
    best: float = math.inf
    best_epoch: int = -1

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best - self.tolerance:
            self.best = loss
            self.best_epoch = epoch
            return False
        return epoch - self.best_epoch >= self.patience


def _bag_arrays(n: int, config: TrainConfig, bag_index: int):
    """Per-bag randomness, drawn in a fixed order from seed + bag_index:
    validation mask, outer bootstrap weights, inner-bag weight matrix.

    outer_bags=1 / inner_bags=1 mean "no bootstrap" at that level.
    """
    rng = np.random.default_rng(config.seed + bag_index)
    nval = min(max(1, round(config.validation_fraction * n)), n - 1)
    val_mask = np.zeros(n, dtype=bool)
    val_mask[rng.choice(n, size=nval, replace=False)] = True
    train_rows = np.flatnonzero(~val_mask)
    nt = len(train_rows)
    if config.outer_bags == 1:
        outer_rows = train_rows
        w_outer = (~val_mask).astype(np.float64)
    else:
        outer_rows = train_rows[rng.integers(0, nt, size=nt)]
        w_outer = np.bincount(outer_rows, minlength=n).astype(np.float64)
    if config.inner_bags == 1:
        WT = np.minimum(w_outer, 255).astype(np.uint8).reshape(n, 1)
    else:
        WT = np.empty((n, config.inner_bags), dtype=np.uint8)
        for b in range(config.inner_bags):
            rows = outer_rows[rng.integers(0, nt, size=nt)]
            WT[:, b] = np.minimum(np.bincount(rows, minlength=n), 255).astype(np.uint8)
    return val_mask, w_outer, WT


def _weighted_prevalence(y: np.ndarray, w: np.ndarray) -> float:
    p = float(np.dot(w, y) / w.sum())
    return min(max(p, 1e-6), 1.0 - 1e-6)


def _binned_from_arrays(columns, kinds, feature_order, max_bins):
    from .binning import BinDefinition, bin_column
    defs: dict[str, BinDefinition] = {}
    indices = {}
    for name in feature_order:
        col = np.asarray(columns[name])
        if kinds[name] == CONTINUOUS:
            defs[name] = fit_bins(col.astype(np.float64), max_bins=max_bins, feature=name)
        else:
            defs[name] = fit_categorical_bins(col, feature=name)
        indices[name], _ = bin_column(col, defs[name])
    n = len(indices[feature_order[0]])
    return BinnedMatrix(list(feature_order), defs, indices, n)


def _center(table: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, float]:
    total = counts.sum()
    if total == 0:
        return table, 0.0
    shift = float(np.dot(counts, table.reshape(-1)) / total) if table.ndim == 1 \
        else float((counts * table).sum() / total)
    return table - shift, shift


def _finalize_bag(tables, grids, intercept, binned, feature_order, pair_info):
    """Train-frequency centering plus no-evidence zeroing for one bag.

    Zero-count bins are re-zeroed after centering: they carry no training
    evidence, so they contribute nothing at prediction time either (this is
    what keeps the reserved missing bin at exactly zero).
    """
    shapes = []
    for f, name in enumerate(feature_order):
        nb = binned.n_bins(name)
        counts = binned.counts(name)
        table = tables[f, :nb].copy()
        table, shift = _center(table, counts)
        intercept += shift
        table[counts == 0] = 0.0
        shapes.append((name, table, counts))
    pair_shapes = []
    for q, (ni, nj, ax_i, ax_j, counts2d) in enumerate(pair_info):
        grid = grids[q, :ax_i.size * ax_j.size].reshape(ax_i.size, ax_j.size).copy()
        grid, shift = _center(grid, counts2d)
        intercept += shift
        grid[counts2d == 0] = 0.0
        pair_shapes.append((ni, nj, ax_i, ax_j, grid, counts2d))
    return shapes, pair_shapes, intercept


def _log(config, level, msg):
    if config.verbose >= level:
        print(msg, file=sys.stderr)


def fit_ebm_arrays(columns: dict[str, np.ndarray], kinds: dict[str, str],
                   feature_order: list[str], y: np.ndarray, config: TrainConfig,
                   units: dict[str, str] | None = None, outcome: str = "outcome",
                   return_bags: bool = False):
    """Core fit on raw column arrays. See fit_ebm for the cohort wrapper."""
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError(f"labels are all {classes[0]:g}; need both classes to train")
    if not set(classes).issubset({0.0, 1.0}):
        raise DataError(f"labels must be binary 0/1, got {classes}")
    if not feature_order:
        raise DataError("no features to train on")
    n = len(y)
    if n < 8:
        raise DataError(f"need at least 8 rows to hold out validation data, got {n}")

    binned = _binned_from_arrays(columns, kinds, feature_order, config.max_bins)
    bins_mat = np.ascontiguousarray(binned.index_array(feature_order))
    n_bins = np.array([binned.n_bins(f) for f in feature_order], dtype=np.int64)
    ordered_n = np.array(
        [binned.definitions[f].n_ordered if binned.definitions[f].kind == CONTINUOUS else -1
         for f in feature_order], dtype=np.int64)

    n_jobs = config.n_jobs or min(cpu_count(), config.outer_bags)
    lr = float(config.learning_rate)
    msl = float(config.min_samples_leaf)

    def stage1(b):
        val_mask, w_outer, WT = _bag_arrays(n, config, b)
        intercept = math.log(_weighted_prevalence(y, w_outer)) - math.log1p(-_weighted_prevalence(y, w_outer))
        out = _kernels.boost_univariate_bag(
            bins_mat, n_bins, ordered_n, y, WT, w_outer, val_mask, intercept,
            lr, msl, config.max_leaves_per_update, config.max_epochs,
            config.early_stop_patience, config.early_stop_tolerance)
        return intercept, val_mask, w_outer, out

    pool = Parallel(n_jobs=n_jobs, backend="threading")
    stage1_out = pool(delayed(stage1)(b) for b in range(config.outer_bags))
    for b, (_, _, _, (tabs, best_val, best_epoch, epochs_run, tr_hist, va_hist)) in enumerate(stage1_out):
        _log(config, 1, f"[ebm] bag={b} stage=1 epochs={epochs_run} best_epoch={best_epoch + 1} val_loss={best_val:.6f}")
        for e in range(epochs_run) if config.verbose >= 2 else ():
            _log(config, 2, f"[ebm] bag={b} epoch={e + 1} train={tr_hist[e]:.6f} val={va_hist[e]:.6f}")

    # interaction detection between the stages, on the aggregated model's
    # residuals over the full training set
    pairs = []
    pair_info = []
    if config.interactions > 0 and len(feature_order) >= 2:
        mean_int = float(np.mean([s[0] for s in stage1_out]))
        mean_tables = np.mean([s[3][0] for s in stage1_out], axis=0)
        logit_full = np.full(n, mean_int)
        for f in range(len(feature_order)):
            logit_full += mean_tables[f][bins_mat[f]]
        residuals = y - sigmoid(logit_full)
        pairs = detect_interactions(binned, residuals, config.interactions, config.pair_bins)
        _log(config, 1, "[ebm] detected pairs: " +
             ", ".join(f"{p.feature_i}x{p.feature_j}={p.score:.4g}" for p in pairs[:5]) +
             (" ..." if len(pairs) > 5 else ""))

    grids_by_bag = [None] * config.outer_bags
    if pairs:
        axes = {f: coarse_axis(binned.definitions[f], config.pair_bins) for f in feature_order}
        keys = np.empty((len(pairs), n), dtype=np.int32)
        dims_i = np.empty(len(pairs), dtype=np.int64)
        dims_j = np.empty(len(pairs), dtype=np.int64)
        ord_i = np.empty(len(pairs), dtype=np.int64)
        ord_j = np.empty(len(pairs), dtype=np.int64)
        for q, p in enumerate(pairs):
            ax_i, ax_j = axes[p.feature_i], axes[p.feature_j]
            keys[q] = pair_cell_keys(binned.indices[p.feature_i], binned.indices[p.feature_j], ax_i, ax_j)
            dims_i[q], dims_j[q] = ax_i.size, ax_j.size
            ord_i[q], ord_j[q] = ax_i.ordered, ax_j.ordered
            full_counts2d = np.bincount(keys[q], minlength=ax_i.size * ax_j.size) \
                .reshape(ax_i.size, ax_j.size).astype(np.int64)
            pair_info.append((p.feature_i, p.feature_j, ax_i, ax_j, full_counts2d))

        def stage2(b):
            intercept, val_mask, w_outer, (tabs, *_rest) = stage1_out[b]
            logit0 = np.full(n, intercept)
            for f in range(len(feature_order)):
                logit0 += tabs[f][bins_mat[f]]
            return _kernels.boost_pairs_bag(
                keys, dims_i, dims_j, ord_i, ord_j, y, w_outer, val_mask, logit0,
                msl, lr, config.max_epochs, config.early_stop_patience,
                config.early_stop_tolerance)

        stage2_out = pool(delayed(stage2)(b) for b in range(config.outer_bags))
        for b, (grids, best_val, epochs_run, _tr, _va) in enumerate(stage2_out):
            _log(config, 1, f"[ebm] bag={b} stage=2 epochs={epochs_run} val_loss={best_val:.6f}")
            grids_by_bag[b] = grids

    train_prev = float(np.mean(y))
    bag_models = []
    for b in range(config.outer_bags):
        intercept, _, _, (tabs, *_rest) = stage1_out[b]
        grids = grids_by_bag[b]
        if grids is None:
            grids = np.zeros((max(len(pairs), 1), 1))
        shapes, pair_shapes, intercept = _finalize_bag(
            tabs, grids, intercept, binned, feature_order, pair_info)
        bag_models.append(EbmModel(
            intercept=intercept,
            shapes=[ShapeFunction(binned.definitions[nm], tb, np.zeros_like(tb), ct)
                    for nm, tb, ct in shapes],
            pairs=[PairShape(ni, nj, ax_i.cmap, ax_j.cmap, grid, counts2d)
                   for ni, nj, ax_i, ax_j, grid, counts2d in pair_shapes],
            outcome=outcome, train_prevalence=train_prev,
            config=asdict(config), units=units or {}))
    model = outer_bag_aggregate(bag_models)
    if return_bags:
        return model, bag_models
    return model


def fit_ebm(train: Cohort, outcome: str, config: TrainConfig | None = None,
            return_bags: bool = False):
    """Fit an explainable boosting machine on a cohort's allowlisted features.

    Returns the outer-bag aggregate: per-bin mean contributions with
    per-bin standard deviations across bags as error bars. Deterministic
    given (data, config, seed).
    """
    config = config or TrainConfig()
    features = train.schema.allowlist(outcome)
    kinds = {f: train.schema.kind_of(f) for f in features}
    units = {f: train.schema.unit_of(f) for f in features}
    y = train.labels(outcome).astype(np.float64)
    columns = {f: train.columns[f] for f in features}
    return fit_ebm_arrays(columns, kinds, features, y, config, units=units,
                          outcome=outcome, return_bags=return_bags)


def outer_bag_aggregate(models: list[EbmModel]) -> EbmModel:
    """Mean contribution tables across bags; error bars are the per-bin
    sample standard deviation (ddof=1, zero for a single bag)."""
    if not models:
        raise DataError("no bag models to aggregate")
    first = models[0]
    for m in models[1:]:
        if m.feature_names != first.feature_names:
            raise DataError("bag models disagree on features")
        for s, s0 in zip(m.shapes, first.shapes):
            if s.bins.to_dict() != s0.bins.to_dict():
                raise DataError(f"bag models disagree on bins for {s.name!r}")
        if [(p.feature_i, p.feature_j) for p in m.pairs] != \
           [(p.feature_i, p.feature_j) for p in first.pairs]:
            raise DataError("bag models disagree on pair terms")
    nb = len(models)
    shapes = []
    for f, s0 in enumerate(first.shapes):
        stack = np.stack([m.shapes[f].table for m in models])
        mean = stack.mean(axis=0)
        std = stack.std(axis=0, ddof=1) if nb > 1 else np.zeros_like(mean)
        shapes.append(ShapeFunction(s0.bins, mean, std, s0.counts))
    pairs = []
    for q, p0 in enumerate(first.pairs):
        stack = np.stack([m.pairs[q].grid for m in models])
        pairs.append(PairShape(p0.feature_i, p0.feature_j, p0.cmap_i, p0.cmap_j,
                               stack.mean(axis=0), p0.counts))
    return EbmModel(intercept=float(np.mean([m.intercept for m in models])),
                    shapes=shapes, pairs=pairs, outcome=first.outcome,
                    train_prevalence=first.train_prevalence, config=first.config,
                    units=first.units)


def center_shapes(model: EbmModel) -> EbmModel:
    """Subtract each table's train-frequency-weighted mean into the intercept.

    Predictions are unchanged (to float rounding); fitted models are already
    centered, so this is idempotent.
    """
    intercept = model.intercept
    shapes = []
    for s in model.shapes:
        table, shift = _center(s.table.copy(), s.counts)
        intercept += shift
        shapes.append(ShapeFunction(s.bins, table, s.stds, s.counts))
    pairs = []
    for p in model.pairs:
        grid, shift = _center(p.grid.copy(), p.counts)
        intercept += shift
        pairs.append(PairShape(p.feature_i, p.feature_j, p.cmap_i, p.cmap_j, grid, p.counts))
    return EbmModel(intercept=intercept, shapes=shapes, pairs=pairs,
                    outcome=model.outcome, train_prevalence=model.train_prevalence,
                    config=model.config, units=model.units, link=model.link)


def fit_pair_shapes(binned: BinnedMatrix, y: np.ndarray, pairs, base_logit: np.ndarray,
                    config: TrainConfig, sample_weight=None, val_mask=None,
                    pair_bins: int | None = None):
    """Second boosting stage over selected pairs for a single sample.

    Univariate terms stay frozen in ``base_logit``; each micro-step is a
    depth-2 axis-aligned split on the pair's coarsened 2-D grid with Newton
    leaf values x learning rate. Returns ({(feature_i, feature_j): grid},
    best validation loss); grids are raw (uncentered, no-evidence cells not
    yet zeroed), in coarse-cell layout.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    mask = np.zeros(n, dtype=bool) if val_mask is None else np.asarray(val_mask, dtype=bool)
    w = np.where(mask, 0.0, w)
    if not pairs:
        return {}, None
    bins_cap = pair_bins or config.pair_bins
    axes = {f: coarse_axis(binned.definitions[f], bins_cap) for f in binned.feature_names}
    npairs = len(pairs)
    keys = np.empty((npairs, n), dtype=np.int32)
    dims_i = np.empty(npairs, dtype=np.int64)
    dims_j = np.empty(npairs, dtype=np.int64)
    ord_i = np.empty(npairs, dtype=np.int64)
    ord_j = np.empty(npairs, dtype=np.int64)
    for q, p in enumerate(pairs):
        ax_i, ax_j = axes[p.feature_i], axes[p.feature_j]
        keys[q] = pair_cell_keys(binned.indices[p.feature_i], binned.indices[p.feature_j],
                                 ax_i, ax_j)
        dims_i[q], dims_j[q] = ax_i.size, ax_j.size
        ord_i[q], ord_j[q] = ax_i.ordered, ax_j.ordered
    grids, best_val, _, _, _ = _kernels.boost_pairs_bag(
        keys, dims_i, dims_j, ord_i, ord_j, y, w, mask,
        np.asarray(base_logit, dtype=np.float64),
        float(config.min_samples_leaf), float(config.learning_rate),
        config.max_epochs, config.early_stop_patience, config.early_stop_tolerance)
    out = {}
    for q, p in enumerate(pairs):
        out[(p.feature_i, p.feature_j)] = grids[q, :dims_i[q] * dims_j[q]] \
            .reshape(dims_i[q], dims_j[q]).copy()
    return out, best_val


# ---------------------------------------------------------------------------
# readable reference path

def fit_leaf_update(residuals, hessians, bin_indices, n_bins: int,
                    min_samples_leaf: int = 25, max_leaves: int = 3,
                    ordered: bool = True, sample_weight=None,
                    n_ordered: int | None = None) -> np.ndarray:
    """One shallow-tree update over a single binned feature.

    Ordered mode picks up to max_leaves-1 split points greedily by
    squared-gradient gain (sum r)^2/(sum h), each side holding at least
    min_samples_leaf rows; bins past ``n_ordered`` (the reserved missing
    bin) are standalone leaves. Categorical mode treats bins as unordered
    singleton leaves merged only to satisfy min_samples_leaf. Returns one
    Newton value (sum r / sum h) per bin, unscaled by the learning rate.
    """
    r = np.asarray(residuals, dtype=np.float64)
    h = np.asarray(hessians, dtype=np.float64)
    idx = np.asarray(bin_indices, dtype=np.int64)
    w = np.ones(len(r)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    Sr = np.bincount(idx, weights=w * r, minlength=n_bins)
    Sh = np.bincount(idx, weights=w * h, minlength=n_bins)
    N = np.bincount(idx, weights=w, minlength=n_bins)
    out = np.zeros(n_bins)
    if ordered:
        k = n_bins if n_ordered is None else n_ordered
        _kernels._fit_update_ordered(Sr, Sh, N, k, n_bins, float(min_samples_leaf),
                                     max_leaves, out)
    else:
        _kernels._fit_update_categorical(Sr, Sh, N, n_bins, float(min_samples_leaf), out)
    return out


@dataclass
class BoostState:
    """Explicit cyclic-boosting state for the reference path and op-level
    tests. The invariant logit = intercept + sum of table lookups is
    maintained incrementally and checked in tests."""

    y: np.ndarray
    bins_mat: np.ndarray               # (n_features, n_rows) int32
    n_bins: np.ndarray
    ordered_n: np.ndarray              # ordered bin count, or -1 for categorical
    intercept: float
    tables: list[np.ndarray]
    logit: np.ndarray
    sample_weight: np.ndarray
    inner_weights: np.ndarray          # (n_rows, inner_bags) float64
    epoch: int = 0

    @classmethod
    def initialize(cls, y, bins_mat, n_bins, ordered_n, config: TrainConfig,
                   sample_weight=None, rng: np.random.Generator | None = None) -> "BoostState":
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        prev = _weighted_prevalence(y, w)
        intercept = math.log(prev) - math.log1p(-prev)
        if config.inner_bags == 1:
            inner = w.reshape(n, 1).copy()
        else:
            rng = rng or np.random.default_rng(config.seed)
            rows = np.flatnonzero(w > 0)
            reps = np.repeat(rows, w[rows].astype(np.int64))
            inner = np.zeros((n, config.inner_bags))
            for b in range(config.inner_bags):
                draw = reps[rng.integers(0, len(reps), size=len(reps))]
                inner[:, b] = np.bincount(draw, minlength=n)
        return cls(y=y, bins_mat=np.asarray(bins_mat, dtype=np.int32),
                   n_bins=np.asarray(n_bins, dtype=np.int64),
                   ordered_n=np.asarray(ordered_n, dtype=np.int64),
                   intercept=intercept,
                   tables=[np.zeros(b) for b in n_bins],
                   logit=np.full(n, intercept), sample_weight=w, inner_weights=inner)


def boost_epoch(state: BoostState, config: TrainConfig) -> BoostState:
    """One round-robin pass: a micro-update per feature in fixed order.

    Residual r = y - p and hessian h = p(1-p) are refreshed before each
    feature; the leaf update is the inner-bag average of Newton fits,
    scaled by the learning rate. Mutates and returns the state.
    """
    nfeat = state.bins_mat.shape[0]
    for f in range(nfeat):
        z = np.clip(state.logit, -30.0, 30.0)
        p = 1.0 / (1.0 + np.exp(-z))
        r = state.y - p
        h = p * (1.0 - p)
        nb = int(state.n_bins[f])
        avg = np.zeros(nb)
        nbags = state.inner_weights.shape[1]
        for b in range(nbags):
            avg += fit_leaf_update(
                r, h, state.bins_mat[f], nb,
                min_samples_leaf=config.min_samples_leaf,
                max_leaves=config.max_leaves_per_update,
                ordered=state.ordered_n[f] >= 0,
                sample_weight=state.inner_weights[:, b],
                n_ordered=int(state.ordered_n[f]) if state.ordered_n[f] >= 0 else None)
        avg *= config.learning_rate / nbags
        state.tables[f] += avg
        state.logit += avg[state.bins_mat[f]]
    state.epoch += 1
    return state
