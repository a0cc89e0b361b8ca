"""Evaluation suite for relative depth maps.

All inputs are disparity-convention maps (larger = closer).  RMSE is
computed in disparity space; the delta and ordinal metrics operate in depth
space via guarded inversion.  Because monocular estimates are only defined
up to a positive affine transform, predictions are scale-shift aligned to
the ground truth (with a nonnegative-scale constraint, so an inverted
prediction is never silently "fixed") before any thresholded comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

DEPTH_EPS = 1e-6


@dataclass(frozen=True)
class SuperpixelLabeling:
    """SLIC result on a ground-truth depth map."""

    labels: np.ndarray           # (H, W) int, contiguous 0..k_actual-1
    centroids: list              # [(x, y, mean_gt_depth), ...] per label
    k_requested: int
    k_actual: int
    adjacency: list              # sorted (a, b) label pairs sharing a border


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    delta125: float   # fraction of pixels with delta > 1.25 (error)
    ord: float
    d3r: float        # nan when the scene has no depth discontinuities
    aligned: bool
    pair_counts: dict


def _valid_mask(gt, mask=None):
    valid = np.isfinite(np.asarray(gt, dtype=np.float64))
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    return valid


def scale_shift_coeffs(pred, gt, mask=None):
    """Least-squares (s, t) minimizing sum((s*pred + t - gt)^2) over mask."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, mask)
    p = pred[valid]
    g = gt[valid]
    if p.size < 2:
        raise ValueError("need at least 2 valid pixels")
    var = p.var()
    if var < 1e-12:
        return 0.0, float(g.mean())
    s = float(np.cov(p, g, bias=True)[0, 1] / var)
    t = float(g.mean() - s * p.mean())
    return s, t


def align_scale_shift(pred, gt, mask=None):
    """Affine-align pred to gt; degenerate pred variance collapses to s=0."""
    s, t = scale_shift_coeffs(pred, gt, mask)
    return s * np.asarray(pred, dtype=np.float64) + t


def _align_nonneg(pred, gt, mask=None):
    # Alignment used before ratio tests: a negative LS scale (anti-correlated
    # prediction) is clamped to zero so inverted ordering stays penalized.
    s, t = scale_shift_coeffs(pred, gt, mask)
    if s < 0:
        g = np.asarray(gt, dtype=np.float64)[_valid_mask(gt, mask)]
        return np.full(np.asarray(pred).shape, float(g.mean()))
    return s * np.asarray(pred, dtype=np.float64) + t


def rmse(pred, gt, mask=None):
    """Root mean squared error in disparity space."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, mask)
    if not valid.any():
        raise ValueError("empty mask")
    diff = pred[valid] - gt[valid]
    return float(np.sqrt(np.mean(diff * diff)))


def delta_accuracy(pred, gt, mask=None, thresh=1.25):
    """Fraction of pixels with depth ratio delta <= thresh (depth space)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, mask)
    if not valid.any():
        raise ValueError("empty mask")
    zp = 1.0 / np.maximum(pred[valid], DEPTH_EPS)
    zg = 1.0 / np.maximum(gt[valid], DEPTH_EPS)
    delta = np.maximum(zp / zg, zg / zp)
    return float(np.mean(delta <= thresh))


def _order_labels(values, sigma):
    """Per-pair closer/farther/equal labels for value pairs (n, 2)."""
    a, b = values[:, 0], values[:, 1]
    hi = np.maximum(a, b)
    lo = np.maximum(np.minimum(a, b), DEPTH_EPS)
    ratio = np.maximum(hi, DEPTH_EPS) / lo
    labels = np.sign(a - b).astype(np.int8)
    labels[ratio < 1.0 + sigma] = 0
    return labels


def ord_error(pred, gt, pairs=50_000, sigma=0.03, seed=0, mask=None):
    """Ordinal error: fraction of sampled pixel pairs whose
    closer/farther/equal relation disagrees between prediction and GT.

    pairs=None enumerates every pair (small maps only).  The prediction is
    scale-shift aligned (nonnegative scale) first, making the metric exactly
    invariant to positive affine transforms of pred.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, mask)
    if not valid.any():
        raise ValueError("no valid pixels")
    aligned = _align_nonneg(pred, gt, mask)
    p = aligned[valid]
    g = gt[valid]
    n = g.size
    if pairs is None:
        idx = np.array(list(combinations(range(n), 2)), dtype=np.intp)
    else:
        if pairs < 1:
            raise ValueError("pairs must be >= 1")
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n, size=(pairs, 2))
        resample = idx[:, 0] == idx[:, 1]
        while resample.any():
            idx[resample, 1] = rng.integers(0, n, size=int(resample.sum()))
            resample = idx[:, 0] == idx[:, 1]
    lg = _order_labels(g[idx], sigma)
    lp = _order_labels(p[idx], sigma)
    return float(np.mean(lg != lp))


# ---------------------------------------------------------------------------
# SLIC superpixels on the ground-truth depth map.
# ---------------------------------------------------------------------------


def _lowest_gradient_shift(gt, x, y, grad=None):
    if grad is None:
        gy, gx = np.gradient(gt)
        grad = np.hypot(gx, gy)
    h, w = gt.shape
    best = (x, y)
    best_g = np.inf
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and grad[ny, nx] < best_g:
                best_g = grad[ny, nx]
                best = (nx, ny)
    return best


def slic(gt, k, compactness=0.1, iters=10):
    """SLIC superpixels on a single-channel map.

    Distance = |intensity difference| + compactness * spatial distance / S
    with S = sqrt(N / k).  Orphan fragments are absorbed into a neighboring
    superpixel so regions are 4-connected and labels contiguous.
    """
    gt = np.asarray(gt, dtype=np.float64)
    h, w = gt.shape
    n = h * w
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError("more superpixels than pixels")
    step = np.sqrt(n / k)

    # Grid-initialized centers, nudged to the lowest-gradient 3x3 neighbor.
    centers = []
    ny = max(1, int(round(h / step)))
    nx = max(1, int(round(w / step)))
    while ny * nx < k:
        if (ny + 1) * nx <= nx * ny + nx:
            ny += 1
        else:
            nx += 1
    ys = ((np.arange(ny) + 0.5) * h / ny).astype(int).clip(0, h - 1)
    xs = ((np.arange(nx) + 0.5) * w / nx).astype(int).clip(0, w - 1)
    gy, gx = np.gradient(gt)
    grad = np.hypot(gx, gy)
    for y in ys:
        for x in xs:
            cx, cy = _lowest_gradient_shift(gt, int(x), int(y), grad)
            centers.append((float(cx), float(cy), gt[cy, cx]))
    centers = np.asarray(centers, dtype=np.float64)

    yy, xx = np.mgrid[0:h, 0:w]
    xr = np.arange(w, dtype=np.float64)
    yr = np.arange(h, dtype=np.float64)
    labels = np.zeros((h, w), dtype=np.intp)
    window = int(np.ceil(2 * step))
    for _ in range(max(1, iters)):
        best = np.full((h, w), np.inf)
        for ci, (cx, cy, cv) in enumerate(centers):
            x0 = max(0, int(cx) - window)
            x1 = min(w, int(cx) + window + 1)
            y0 = max(0, int(cy) - window)
            y1 = min(h, int(cy) + window + 1)
            dv = np.abs(gt[y0:y1, x0:x1] - cv)
            ds = np.sqrt((xr[x0:x1] - cx) ** 2
                         + ((yr[y0:y1] - cy) ** 2)[:, None])
            d = dv + compactness * ds / step
            closer = d < best[y0:y1, x0:x1]
            best[y0:y1, x0:x1][closer] = d[closer]
            labels[y0:y1, x0:x1][closer] = ci
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        sums = np.stack([
            np.bincount(flat, weights=xx.ravel(), minlength=len(centers)),
            np.bincount(flat, weights=yy.ravel(), minlength=len(centers)),
            np.bincount(flat, weights=gt.ravel(), minlength=len(centers)),
        ], axis=1)
        nz = counts > 0
        centers[nz] = sums[nz] / counts[nz, None]

    labels = _enforce_connectivity(labels)
    labels = _relabel_contiguous(labels)
    k_actual = int(labels.max()) + 1
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=k_actual)
    cx = np.bincount(flat, weights=xx.ravel(), minlength=k_actual) / counts
    cy = np.bincount(flat, weights=yy.ravel(), minlength=k_actual) / counts
    cv = np.bincount(flat, weights=gt.ravel(), minlength=k_actual) / counts
    centroids = [(float(a), float(b), float(c)) for a, b, c in zip(cx, cy, cv)]
    horiz = labels[:, :-1] != labels[:, 1:]
    vert = labels[:-1, :] != labels[1:, :]
    pairs = np.concatenate([
        np.stack([labels[:, :-1][horiz], labels[:, 1:][horiz]], axis=1),
        np.stack([labels[:-1, :][vert], labels[1:, :][vert]], axis=1),
    ])
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adjacency = [(int(a), int(b)) for a, b in pairs]
    return SuperpixelLabeling(labels=labels, centroids=centroids,
                              k_requested=k, k_actual=k_actual,
                              adjacency=sorted((int(a), int(b)) for a, b in adjacency))


def _enforce_connectivity(labels):
    """Reassign disconnected fragments to a 4-connected neighbor's label."""
    struct = ndimage.generate_binary_structure(2, 1)
    out = labels.copy()
    orphan = np.zeros(labels.shape, dtype=bool)
    # Restrict each label's component analysis to its bounding box.
    for lab, sl in enumerate(ndimage.find_objects(labels + 1)):
        if sl is None:
            continue
        sel = labels[sl] == lab
        comp, ncomp = ndimage.label(sel, structure=struct)
        if ncomp <= 1:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        orphan[sl] |= sel & (comp != keep)
    while orphan.any():
        progressed = False
        for shift_y, shift_x in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            src = np.roll(out, (shift_y, shift_x), axis=(0, 1))
            src_ok = ~np.roll(orphan, (shift_y, shift_x), axis=(0, 1))
            # roll wraps around; invalidate wrapped rows/cols
            if shift_y == 1:
                src_ok[0, :] = False
            if shift_y == -1:
                src_ok[-1, :] = False
            if shift_x == 1:
                src_ok[:, 0] = False
            if shift_x == -1:
                src_ok[:, -1] = False
            take = orphan & src_ok
            if take.any():
                out[take] = src[take]
                orphan[take] = False
                progressed = True
        if not progressed:
            # isolated orphan island (should not happen); absorb into label 0
            out[orphan] = 0
            break
    return out


def _relabel_contiguous(labels):
    uniq, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape).astype(np.intp)


def d3r(pred, gt, labeling, disc_thresh=0.1):
    """Depth discontinuity disagreement ratio.

    Considers adjacent superpixel pairs whose GT centroid depths differ by a
    ratio >= 1 + disc_thresh.  A pair counts as a disagreement when the
    (aligned) prediction orders the two centroid pixels differently than GT,
    or flattens the discontinuity below the threshold.  Returns nan when the
    scene has no discontinuity pairs.
    """
    if disc_thresh <= 0:
        raise ValueError("disc_thresh must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    aligned = _align_nonneg(pred, gt)
    sigma_pairs = []
    for a, b in labeling.adjacency:
        ga = labeling.centroids[a][2]
        gb = labeling.centroids[b][2]
        hi, lo = max(ga, gb), max(min(ga, gb), DEPTH_EPS)
        if hi / lo >= 1.0 + disc_thresh:
            sigma_pairs.append((a, b, ga, gb))
    if not sigma_pairs:
        return float("nan")
    disagreements = 0
    for a, b, ga, gb in sigma_pairs:
        xa, ya, _ = labeling.centroids[a]
        xb, yb, _ = labeling.centroids[b]
        pa = aligned[int(round(ya)), int(round(xa))]
        pb = aligned[int(round(yb)), int(round(xb))]
        hi, lo = max(pa, pb), max(min(pa, pb), DEPTH_EPS)
        flattened = max(hi, DEPTH_EPS) / lo < 1.0 + disc_thresh
        if flattened or np.sign(pa - pb) != np.sign(ga - gb):
            disagreements += 1
    return disagreements / len(sigma_pairs)


def default_superpixel_count(shape, cell=64):
    """One superpixel per 64-px cell (reconstruction of the paper's metric)."""
    h, w = shape
    return max(2, round(h * w / (cell * cell)))


def evaluate_pair(pred, gt, mask=None, align=True, ord_pairs=50_000,
                  ord_sigma=0.03, slic_k=None, disc_thresh=0.1, seed=0):
    """Full metric report for one prediction / ground-truth pair."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        pred = _resize_to(pred, gt.shape)
    p_rmse = align_scale_shift(pred, gt, mask) if align else pred
    k = slic_k or default_superpixel_count(gt.shape)
    labeling = slic(gt, k)
    return MetricReport(
        rmse=rmse(p_rmse, gt, mask),
        delta125=1.0 - delta_accuracy(p_rmse, gt, mask),
        ord=ord_error(pred, gt, pairs=ord_pairs, sigma=ord_sigma, seed=seed, mask=mask),
        d3r=d3r(pred, gt, labeling, disc_thresh),
        aligned=align,
        pair_counts={"ord_pairs": ord_pairs, "superpixels": labeling.k_actual,
                     "adjacent": len(labeling.adjacency)},
    )


def _resize_to(pred, shape):
    from depthboost import raster

    return raster.resize_bilinear(pred, shape[1], shape[0])
