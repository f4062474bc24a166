"""Pairwise interaction detection on residual histograms.

Every feature pair is scored by the best residual-RSS reduction a
4-quadrant predictor (one cut per axis) achieves on the pair's 2-D
histogram, coarsened to at most 32 cells per axis. The top-K pairs move on
to the second boosting stage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import BinDefinition, BinnedMatrix
from .schema import CONTINUOUS

MAX_CELLS = 32


@dataclass(frozen=True)
class PairCandidate:
    i: int                # feature indices into the binned matrix order, i < j
    j: int
    feature_i: str
    feature_j: str
    score: float          # residual RSS reduction, >= 0


@dataclass(frozen=True)
class CoarseAxis:
    """Coarse grid axis: full-bin-index -> coarse index, plus sizes.

    For continuous features the reserved missing bin gets its own trailing
    slot outside the ordered (cuttable) range; categorical axes are their
    category lists, index-grouped only when very wide.
    """

    cmap: np.ndarray      # int32, len = parent n_bins
    size: int             # total axis cells (incl. missing slot)
    ordered: int          # leading cells eligible for cut search


def coarse_axis(bins: BinDefinition, max_cells: int = MAX_CELLS) -> CoarseAxis:
    if bins.kind == CONTINUOUS:
        k = bins.n_ordered
        nc = min(k, max_cells)
        cmap = np.empty(bins.n_bins, dtype=np.int32)
        for b in range(k):
            cmap[b] = b * nc // k
        cmap[bins.missing_index] = nc
        return CoarseAxis(cmap, nc + 1, nc)
    ncat = bins.n_bins
    nc = min(ncat, max_cells)
    cmap = np.array([b * nc // ncat for b in range(ncat)], dtype=np.int32)
    return CoarseAxis(cmap, nc, nc)


def pair_cell_keys(bi: np.ndarray, bj: np.ndarray, ax_i: CoarseAxis, ax_j: CoarseAxis) -> np.ndarray:
    """Row-wise flat cell index on the coarse (i, j) grid."""
    return (ax_i.cmap[bi].astype(np.int64) * ax_j.size + ax_j.cmap[bj]).astype(np.int32)


def quadrant_score(sr: np.ndarray, counts: np.ndarray, ordered_i: int, ordered_j: int) -> float:
    """Best RSS reduction of a 4-quadrant mean predictor over all cut pairs.

    ``sr``/``counts`` are (size_i, size_j) residual-sum and row-count
    grids; only the ordered block is cut. Reduction relative to the zero
    predictor is sum over quadrants of (sum r)^2 / n, so it is >= 0.
    """
    oi, oj = ordered_i, ordered_j
    if oi < 2 or oj < 2:
        return 0.0
    S = np.zeros((oi + 1, oj + 1))
    N = np.zeros((oi + 1, oj + 1))
    S[1:, 1:] = np.cumsum(np.cumsum(sr[:oi, :oj], axis=0), axis=1)
    N[1:, 1:] = np.cumsum(np.cumsum(counts[:oi, :oj], axis=0), axis=1)
    tot_s, tot_n = S[oi, oj], N[oi, oj]
    # all cut pairs at once: A = top-left block, derive the other quadrants
    A_s = S[1:oi, 1:oj]
    A_n = N[1:oi, 1:oj]
    top_s = S[1:oi, oj][:, None]
    top_n = N[1:oi, oj][:, None]
    left_s = S[oi, 1:oj][None, :]
    left_n = N[oi, 1:oj][None, :]
    quads_s = (A_s, top_s - A_s, left_s - A_s, tot_s - top_s - left_s + A_s)
    quads_n = (A_n, top_n - A_n, left_n - A_n, tot_n - top_n - left_n + A_n)
    red = np.zeros_like(A_s)
    for qs, qn in zip(quads_s, quads_n):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(qn > 0, qs * qs / np.where(qn > 0, qn, 1.0), 0.0)
        red = red + term
    return float(red.max()) if red.size else 0.0


def detect_interactions(binned: BinnedMatrix, residuals: np.ndarray, k: int,
                        max_cells: int = MAX_CELLS) -> list[PairCandidate]:
    """Score every feature pair on the residual histogram and return the K
    highest, descending, ties broken by (i, j) order. Returns all pairs
    when fewer than K exist."""
    names = binned.feature_names
    axes = {n: coarse_axis(binned.definitions[n], max_cells) for n in names}
    cands = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            ni, nj = names[i], names[j]
            ax_i, ax_j = axes[ni], axes[nj]
            keys = pair_cell_keys(binned.indices[ni], binned.indices[nj], ax_i, ax_j)
            ncells = ax_i.size * ax_j.size
            sr = np.bincount(keys, weights=residuals, minlength=ncells).reshape(ax_i.size, ax_j.size)
            cnt = np.bincount(keys, minlength=ncells).reshape(ax_i.size, ax_j.size)
            score = quadrant_score(sr, cnt, ax_i.ordered, ax_j.ordered)
            cands.append(PairCandidate(i, j, ni, nj, score))
    cands.sort(key=lambda c: (-c.score, c.i, c.j))
    return cands[:k]
