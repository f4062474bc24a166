"""Numba kernels for the boosting inner loops.

Layout conventions, chosen for memory-bandwidth reasons (the training loop
streams these arrays thousands of times):
- ``WT`` holds inner-bag bootstrap counts transposed to (n_rows, n_bags)
  uint8 so one row visit reads all bag weights contiguously;
- histograms are (n_bins, n_bags) so a row's accumulation writes one
  contiguous slice;
- validation rows (and rows the outer bootstrap did not draw) carry weight
  zero everywhere and are skipped via ``w_outer``.

All kernels are nogil so outer bags can run on a thread pool.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NJIT = dict(cache=True, nogil=True)


@njit(**NJIT)
def _clip_sigmoid(z):
    if z < -30.0:
        z = -30.0
    elif z > 30.0:
        z = 30.0
    return 1.0 / (1.0 + np.exp(-z))


@njit(**NJIT)
def _hist_rh(logit, y, w_outer, bins, WT, Sr, Sh):
    """Fused pass: residual/hessian from current logits, accumulated into
    per-(bin, bag) weighted histograms. Sr/Sh must be pre-zeroed."""
    n, nbags = WT.shape
    for i in range(n):
        if w_outer[i] == 0.0:
            continue
        p = _clip_sigmoid(logit[i])
        r = y[i] - p
        h = p * (1.0 - p)
        k = bins[i]
        for b in range(nbags):
            w = WT[i, b]
            Sr[k, b] += w * r
            Sh[k, b] += w * h


@njit(**NJIT)
def _bag_bin_counts(bins, WT, nbins):
    """Per-(bin, bag) row counts of the inner-bag samples; fixed across epochs."""
    n, nbags = WT.shape
    N = np.zeros((nbins, nbags))
    for i in range(n):
        k = bins[i]
        for b in range(nbags):
            N[k, b] += WT[i, b]
    return N


@njit(**NJIT)
def _fit_update_ordered(Sr, Sh, N, n_ordered, nb, msl, max_leaves, out):
    """Greedy shallow tree over ordered bins 0..n_ordered-1; trailing bins
    up to nb (the reserved missing bin) are standalone leaves. Newton leaf
    values (sum r / sum h), min_samples_leaf enforced per split; a feature
    whose total weight is below min_samples_leaf collapses to a single leaf."""
    K = n_ordered
    Pr = np.empty(K + 1)
    Ph = np.empty(K + 1)
    Pn = np.empty(K + 1)
    Pr[0] = 0.0
    Ph[0] = 0.0
    Pn[0] = 0.0
    for k in range(K):
        Pr[k + 1] = Pr[k] + Sr[k]
        Ph[k + 1] = Ph[k] + Sh[k]
        Pn[k + 1] = Pn[k] + N[k]
    seg_lo = np.empty(max_leaves, dtype=np.int64)
    seg_hi = np.empty(max_leaves, dtype=np.int64)
    seg_lo[0] = 0
    seg_hi[0] = K
    nseg = 1
    while nseg < max_leaves:
        best_gain = 1e-12
        best_seg = -1
        best_cut = -1
        for s in range(nseg):
            lo = seg_lo[s]
            hi = seg_hi[s]
            sh_all = Ph[hi] - Ph[lo]
            sr_all = Pr[hi] - Pr[lo]
            base = sr_all * sr_all / sh_all if sh_all > 0.0 else 0.0
            for cut in range(lo + 1, hi):
                if Pn[cut] - Pn[lo] < msl or Pn[hi] - Pn[cut] < msl:
                    continue
                shl = Ph[cut] - Ph[lo]
                shr = Ph[hi] - Ph[cut]
                srl = Pr[cut] - Pr[lo]
                srr = Pr[hi] - Pr[cut]
                g = -base
                if shl > 0.0:
                    g += srl * srl / shl
                if shr > 0.0:
                    g += srr * srr / shr
                if g > best_gain:
                    best_gain = g
                    best_seg = s
                    best_cut = cut
        if best_seg < 0:
            break
        seg_lo[nseg] = best_cut
        seg_hi[nseg] = seg_hi[best_seg]
        seg_hi[best_seg] = best_cut
        nseg += 1
    for s in range(nseg):
        lo = seg_lo[s]
        hi = seg_hi[s]
        sh_all = Ph[hi] - Ph[lo]
        v = (Pr[hi] - Pr[lo]) / sh_all if sh_all > 0.0 else 0.0
        for k in range(lo, hi):
            out[k] = v
    # trailing bins (the reserved missing bin): own leaves, given evidence
    for k in range(K, nb):
        if N[k] >= msl and Sh[k] > 0.0:
            out[k] = Sr[k] / Sh[k]
        else:
            out[k] = 0.0


@njit(**NJIT)
def _fit_update_categorical(Sr, Sh, N, nb, msl, out):
    """Unordered singleton leaves; undersized nonempty categories pool into
    one leaf; a still-undersized pool merges into the smallest qualifying
    leaf; with no qualifying leaf the whole feature is a single leaf."""
    pool_r = 0.0
    pool_h = 0.0
    pool_n = 0.0
    tot_r = 0.0
    tot_h = 0.0
    small_idx = -1
    small_n = 1e300
    for k in range(nb):
        out[k] = 0.0
        tot_r += Sr[k]
        tot_h += Sh[k]
        if N[k] >= msl:
            if Sh[k] > 0.0:
                out[k] = Sr[k] / Sh[k]
            if N[k] < small_n:
                small_n = N[k]
                small_idx = k
        elif N[k] > 0.0:
            pool_r += Sr[k]
            pool_h += Sh[k]
            pool_n += N[k]
    if pool_n == 0.0:
        return
    if pool_n >= msl:
        v = pool_r / pool_h if pool_h > 0.0 else 0.0
        for k in range(nb):
            if 0.0 < N[k] < msl:
                out[k] = v
    elif small_idx >= 0:
        mh = pool_h + Sh[small_idx]
        v = (pool_r + Sr[small_idx]) / mh if mh > 0.0 else 0.0
        out[small_idx] = v
        for k in range(nb):
            if 0.0 < N[k] < msl:
                out[k] = v
    else:
        v = tot_r / tot_h if tot_h > 0.0 else 0.0
        for k in range(nb):
            out[k] = v


@njit(**NJIT)
def _epoch_losses(logit, y, w_outer, val_mask):
    """(weighted train log-loss, validation log-loss) in one pass."""
    tr_num = 0.0
    tr_den = 0.0
    va_num = 0.0
    va_den = 0.0
    for i in range(logit.shape[0]):
        p = _clip_sigmoid(logit[i])
        if p < 1e-15:
            p = 1e-15
        elif p > 1.0 - 1e-15:
            p = 1.0 - 1e-15
        ll = -(y[i] * np.log(p) + (1.0 - y[i]) * np.log(1.0 - p))
        if val_mask[i]:
            va_num += ll
            va_den += 1.0
        elif w_outer[i] > 0.0:
            tr_num += w_outer[i] * ll
            tr_den += w_outer[i]
    tr = tr_num / tr_den if tr_den > 0.0 else 0.0
    va = va_num / va_den if va_den > 0.0 else 0.0
    return tr, va


@njit(**NJIT)
def boost_univariate_bag(bins_mat, n_bins, ordered_n, y, WT, w_outer, val_mask,
                         intercept, lr, msl, max_leaves, max_epochs, patience, tol):
    """Full cyclic-boosting loop for one outer bag.

    ``ordered_n[f]`` is the ordered bin count for continuous features
    (missing bin at that index) or -1 for categorical features.
    Returns the best-validation snapshot of the per-feature tables plus
    loss histories.
    """
    nfeat, n = bins_mat.shape
    nbags = WT.shape[1]
    maxb = 0
    for f in range(nfeat):
        if n_bins[f] > maxb:
            maxb = n_bins[f]
    tables = np.zeros((nfeat, maxb))
    best_tables = np.zeros((nfeat, maxb))
    logit = np.full(n, intercept)
    Sr = np.zeros((maxb, nbags))
    Sh = np.zeros((maxb, nbags))
    upd = np.zeros(maxb)
    avg = np.zeros(maxb)
    N = np.zeros((nfeat, maxb, nbags))
    for f in range(nfeat):
        N[f, :n_bins[f], :] = _bag_bin_counts(bins_mat[f], WT, n_bins[f])
    train_hist = np.zeros(max_epochs)
    val_hist = np.zeros(max_epochs)
    best_val = np.inf
    best_epoch = -1
    epochs_run = 0
    for epoch in range(max_epochs):
        for f in range(nfeat):
            nb = n_bins[f]
            Sr[:nb, :] = 0.0
            Sh[:nb, :] = 0.0
            _hist_rh(logit, y, w_outer, bins_mat[f], WT, Sr, Sh)
            avg[:nb] = 0.0
            for b in range(nbags):
                if ordered_n[f] >= 0:
                    _fit_update_ordered(Sr[:, b], Sh[:, b], N[f, :, b],
                                        ordered_n[f], nb, msl, max_leaves, upd)
                else:
                    _fit_update_categorical(Sr[:, b], Sh[:, b], N[f, :, b],
                                            nb, msl, upd)
                for k in range(nb):
                    avg[k] += upd[k]
            scale = lr / nbags
            for k in range(nb):
                avg[k] *= scale
                tables[f, k] += avg[k]
            binsf = bins_mat[f]
            for i in range(n):
                logit[i] += avg[binsf[i]]
        tr, va = _epoch_losses(logit, y, w_outer, val_mask)
        train_hist[epoch] = tr
        val_hist[epoch] = va
        epochs_run = epoch + 1
        if va < best_val - tol:
            best_val = va
            best_epoch = epoch
            best_tables[:, :] = tables
        elif epoch - best_epoch >= patience:
            break
    return best_tables, best_val, best_epoch, epochs_run, train_hist[:epochs_run], val_hist[:epochs_run]


@njit(**NJIT)
def _hist_rh_cells(logit, y, w_outer, keys, Sr, Sh):
    n = keys.shape[0]
    for i in range(n):
        if w_outer[i] == 0.0:
            continue
        p = _clip_sigmoid(logit[i])
        c = keys[i]
        Sr[c] += w_outer[i] * (y[i] - p)
        Sh[c] += w_outer[i] * (p * (1.0 - p))


@njit(**NJIT)
def _block_best_cut(PSr, PSh, PSn, r0, r1, oj, msl):
    """Best column cut (or -1 for none) for the row block [r0, r1],
    scoring sum of feasible-leaf (sum r)^2 / (sum h). Returns (score, cut)."""
    sr_all = PSr[r1 + 1, oj] - PSr[r0, oj]
    sh_all = PSh[r1 + 1, oj] - PSh[r0, oj]
    n_all = PSn[r1 + 1, oj] - PSn[r0, oj]
    best = 0.0
    if n_all >= msl and sh_all > 0.0:
        best = sr_all * sr_all / sh_all
    best_cut = -1
    for c in range(oj - 1):
        nl = PSn[r1 + 1, c + 1] - PSn[r0, c + 1]
        nr = n_all - nl
        score = 0.0
        if nl >= msl:
            shl = PSh[r1 + 1, c + 1] - PSh[r0, c + 1]
            if shl > 0.0:
                srl = PSr[r1 + 1, c + 1] - PSr[r0, c + 1]
                score += srl * srl / shl
        if nr >= msl:
            shr = sh_all - (PSh[r1 + 1, c + 1] - PSh[r0, c + 1])
            if shr > 0.0:
                srr = sr_all - (PSr[r1 + 1, c + 1] - PSr[r0, c + 1])
                score += srr * srr / shr
        if score > best:
            best = score
            best_cut = c
    return best, best_cut


@njit(**NJIT)
def _leaf_fill(delta, PSr, PSh, PSn, r0, r1, c0, c1, oj_full, msl, lr):
    """Newton value x lr for the cell block [r0..r1] x [c0..c1] if it holds
    enough rows; written into the flat delta grid."""
    nl = PSn[r1 + 1, c1 + 1] - PSn[r0, c1 + 1] - PSn[r1 + 1, c0] + PSn[r0, c0]
    if nl < msl:
        return
    sh = PSh[r1 + 1, c1 + 1] - PSh[r0, c1 + 1] - PSh[r1 + 1, c0] + PSh[r0, c0]
    if sh <= 0.0:
        return
    sr = PSr[r1 + 1, c1 + 1] - PSr[r0, c1 + 1] - PSr[r1 + 1, c0] + PSr[r0, c0]
    v = lr * sr / sh
    for rr in range(r0, r1 + 1):
        for cc in range(c0, c1 + 1):
            delta[rr * oj_full + cc] = v


@njit(**NJIT)
def boost_pairs_bag(keys, dims_i, dims_j, ord_i, ord_j, y, w_outer, val_mask,
                    logit0, msl, lr, max_epochs, patience, tol):
    """Second boosting stage for one bag: round-robin over selected pairs,
    each micro-step a depth-2 axis-aligned split (root cut on one axis,
    independent child cuts on the other) with Newton leaf values x lr.
    Cut search covers the ordered cells only; missing-slot cells never
    receive updates. Same early stopping as stage one."""
    npairs, n = keys.shape
    maxcells = 0
    for q in range(npairs):
        c = dims_i[q] * dims_j[q]
        if c > maxcells:
            maxcells = c
    grids = np.zeros((npairs, maxcells))
    best_grids = np.zeros((npairs, maxcells))
    logit = logit0.copy()
    Sr = np.zeros(maxcells)
    Sh = np.zeros(maxcells)
    delta = np.zeros(maxcells)
    Ncell = np.zeros((npairs, maxcells))
    for q in range(npairs):
        for i in range(n):
            Ncell[q, keys[q, i]] += w_outer[i]
    maxdim = 0
    for q in range(npairs):
        if dims_i[q] > maxdim:
            maxdim = dims_i[q]
        if dims_j[q] > maxdim:
            maxdim = dims_j[q]
    PSr = np.zeros((maxdim + 1, maxdim + 1))
    PSh = np.zeros((maxdim + 1, maxdim + 1))
    PSn = np.zeros((maxdim + 1, maxdim + 1))
    TSr = np.zeros((maxdim + 1, maxdim + 1))
    TSh = np.zeros((maxdim + 1, maxdim + 1))
    TSn = np.zeros((maxdim + 1, maxdim + 1))
    _, base_val = _epoch_losses(logit, y, w_outer, val_mask)
    best_val = base_val  # stage-2 result can never be worse than its start
    best_epoch = -1
    epochs_run = 0
    train_hist = np.zeros(max_epochs)
    val_hist = np.zeros(max_epochs)
    for epoch in range(max_epochs):
        for q in range(npairs):
            di = dims_i[q]
            dj = dims_j[q]
            oi = ord_i[q]
            oj = ord_j[q]
            ncells = di * dj
            for c in range(ncells):
                Sr[c] = 0.0
                Sh[c] = 0.0
            _hist_rh_cells(logit, y, w_outer, keys[q], Sr, Sh)
            # prefix sums over the ordered region, plus the transpose
            for a in range(oi + 1):
                PSr[a, 0] = 0.0
                PSh[a, 0] = 0.0
                PSn[a, 0] = 0.0
            for b in range(oj + 1):
                PSr[0, b] = 0.0
                PSh[0, b] = 0.0
                PSn[0, b] = 0.0
            for a in range(oi):
                for b in range(oj):
                    c = a * dj + b
                    PSr[a + 1, b + 1] = Sr[c] + PSr[a, b + 1] + PSr[a + 1, b] - PSr[a, b]
                    PSh[a + 1, b + 1] = Sh[c] + PSh[a, b + 1] + PSh[a + 1, b] - PSh[a, b]
                    PSn[a + 1, b + 1] = Ncell[q, c] + PSn[a, b + 1] + PSn[a + 1, b] - PSn[a, b]
            for a in range(oi + 1):
                for b in range(oj + 1):
                    TSr[b, a] = PSr[a, b]
                    TSh[b, a] = PSh[a, b]
                    TSn[b, a] = PSn[a, b]
            # root on axis 0
            best_score = 0.0
            best_axis = -1
            best_root = -1
            best_cl = -1
            best_cr = -1
            s_all, c_all = _block_best_cut(PSr, PSh, PSn, 0, oi - 1, oj, msl)
            if s_all > best_score:
                best_score = s_all
                best_axis = 0
                best_root = -1
                best_cl = c_all
                best_cr = -1
            for r in range(oi - 1):
                s_top, c_top = _block_best_cut(PSr, PSh, PSn, 0, r, oj, msl)
                s_bot, c_bot = _block_best_cut(PSr, PSh, PSn, r + 1, oi - 1, oj, msl)
                if s_top + s_bot > best_score:
                    best_score = s_top + s_bot
                    best_axis = 0
                    best_root = r
                    best_cl = c_top
                    best_cr = c_bot
            for r in range(oj - 1):
                s_top, c_top = _block_best_cut(TSr, TSh, TSn, 0, r, oi, msl)
                s_bot, c_bot = _block_best_cut(TSr, TSh, TSn, r + 1, oj - 1, oi, msl)
                if s_top + s_bot > best_score:
                    best_score = s_top + s_bot
                    best_axis = 1
                    best_root = r
                    best_cl = c_top
                    best_cr = c_bot
            for c in range(ncells):
                delta[c] = 0.0
            if best_axis >= 0:
                if best_axis == 0:
                    r_end = best_root if best_root >= 0 else oi - 1
                    blocks = ((0, r_end, best_cl), (r_end + 1, oi - 1, best_cr))
                    for r0, r1, cut in blocks:
                        if r0 > r1:
                            continue
                        if cut < 0:
                            _leaf_fill(delta, PSr, PSh, PSn, r0, r1, 0, oj - 1, dj, msl, lr)
                        else:
                            _leaf_fill(delta, PSr, PSh, PSn, r0, r1, 0, cut, dj, msl, lr)
                            _leaf_fill(delta, PSr, PSh, PSn, r0, r1, cut + 1, oj - 1, dj, msl, lr)
                else:
                    # axis-1 root: fill through the transposed prefixes, then
                    # scatter back to row-major cells
                    r_end = best_root if best_root >= 0 else oj - 1
                    tdelta = np.zeros(oj * oi)
                    blocks = ((0, r_end, best_cl), (r_end + 1, oj - 1, best_cr))
                    for r0, r1, cut in blocks:
                        if r0 > r1:
                            continue
                        if cut < 0:
                            _leaf_fill(tdelta, TSr, TSh, TSn, r0, r1, 0, oi - 1, oi, msl, lr)
                        else:
                            _leaf_fill(tdelta, TSr, TSh, TSn, r0, r1, 0, cut, oi, msl, lr)
                            _leaf_fill(tdelta, TSr, TSh, TSn, r0, r1, cut + 1, oi - 1, oi, msl, lr)
                    for b in range(oj):
                        for a in range(oi):
                            delta[a * dj + b] = tdelta[b * oi + a]
                for c in range(ncells):
                    grids[q, c] += delta[c]
                kq = keys[q]
                for i in range(n):
                    logit[i] += delta[kq[i]]
        tr, va = _epoch_losses(logit, y, w_outer, val_mask)
        train_hist[epoch] = tr
        val_hist[epoch] = va
        epochs_run = epoch + 1
        if va < best_val - tol:
            best_val = va
            best_epoch = epoch
            best_grids[:, :] = grids
        elif epoch - best_epoch >= patience:
            break
    return best_grids, best_val, epochs_run, train_hist[:epochs_run], val_hist[:epochs_run]
