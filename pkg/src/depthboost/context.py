"""Edge-density analysis that drives resolution and patch choices.

The proxy for "where can the network find depth cues" is a binary edge map
(mean-thresholded RGB gradients).  A Chebyshev distance-to-edge field makes
all coverage questions O(N): a pixel is covered at render scale s iff a
box dilation with a receptive-field kernel would reach it, i.e. iff
dist * s <= receptive / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthboost import raster

GRID = 32  # decoder constraint of MiDaS-like encoders: dims multiple of 32


@dataclass(frozen=True)
class ContextMap:
    """Edge proxy plus distance field at a fixed reference resolution."""

    edges: np.ndarray  # (H, W) bool
    dist: np.ndarray   # (H, W) float, Chebyshev distance to nearest edge
    ref_width: int
    ref_height: int

    @property
    def empty(self):
        return not bool(self.edges.any())


@dataclass(frozen=True)
class ResolutionPlan:
    """Chosen estimation resolutions for one image."""

    training_res: int
    r0: tuple          # (w, h): largest size with full cue coverage
    rx: tuple          # (w, h): largest size leaving <= x_percent uncovered
    x_percent: float
    upsample_cap: float = 3.0
    rmax: int = 3000
    degenerate: bool = False  # no edges found; fell back to training_res


def round_to_grid(v, grid=GRID):
    return max(grid, int(round(v / grid)) * grid)


def compute_context_map(rgb, ref_scale=1.0):
    """Build the edge proxy and its distance field at ref_scale x input size."""
    rgb = np.asarray(rgb, dtype=np.float64)
    h, w = rgb.shape[:2]
    rw, rh = max(1, int(round(w * ref_scale))), max(1, int(round(h * ref_scale)))
    scaled = raster.resize_bilinear(rgb, rw, rh)
    edges = raster.threshold_mean(raster.gradient_magnitude(scaled))
    dist = raster.distance_to_set(edges)
    return ContextMap(edges=edges, dist=dist, ref_width=rw, ref_height=rh)


def uncovered_fraction(ctx, scale, receptive):
    """Fraction of pixels farther than receptive/2 from any edge when the
    image is rendered at `scale` times the reference resolution.

    Equivalent to rescaling and dilating the edge map with a receptive-sized
    box kernel, computed from the distance field instead.  Nondecreasing in
    scale.  Empty edge map -> 1.0.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if ctx.empty:
        return 1.0
    return float(np.mean(ctx.dist * scale > receptive / 2.0))


def influence_ratio(ctx, receptive):
    """Fraction of pixels inside a quarter-receptive-field dilation of edges."""
    if receptive < 4:
        raise ValueError("receptive must be >= 4")
    radius = (receptive // 4) // 2
    if ctx.empty:
        return 0.0
    return float(np.mean(ctx.dist <= radius))


def context_percentage(ctx):
    """Fraction of set pixels in the edge map (C over the whole image)."""
    return float(ctx.edges.mean())


def _dims_for_maxdim(maxdim, original):
    """Aspect-preserving (w, h), both multiples of 32, larger side = maxdim."""
    ow, oh = original
    scale = maxdim / max(ow, oh)
    w = round_to_grid(ow * scale)
    h = round_to_grid(oh * scale)
    # Rounding of the minor side must not disturb the major side.
    if ow >= oh:
        w = maxdim
    else:
        h = maxdim
    return (w, h)


def candidate_maxdims(original, training_res, cap, rmax):
    """All admissible larger-side sizes on the 32-px grid, ascending."""
    ow, oh = original
    hi = int(min(cap * max(ow, oh), rmax)) // GRID * GRID
    lo = round_to_grid(training_res)
    if hi < lo:
        hi = lo
    return list(range(lo, hi + 1, GRID))


def find_resolution(ctx, x, original, training_res=384, cap=3.0, rmax=3000,
                    receptive=None):
    """Search the largest render sizes keeping enough pixels near edges.

    r0 allows no uncovered pixels, rx allows up to fraction x.  The search is
    a binary search over the 32-px maxdim grid, valid because
    uncovered_fraction is nondecreasing in scale.
    """
    if not 0 <= x < 1:
        raise ValueError("x must be in [0, 1)")
    receptive = training_res if receptive is None else receptive
    cands = candidate_maxdims(original, training_res, cap, rmax)

    if ctx.empty:
        side = cands[0]
        dims = _dims_for_maxdim(side, original)
        return ResolutionPlan(training_res, dims, dims, x, cap, rmax, degenerate=True)

    ref_maxdim = max(ctx.ref_width, ctx.ref_height)

    def ok(maxdim, budget):
        return uncovered_fraction(ctx, maxdim / ref_maxdim, receptive) <= budget

    def largest_ok(budget):
        # Largest candidate satisfying the (monotone) coverage predicate,
        # clamped to the smallest candidate when none passes.
        if not ok(cands[0], budget):
            return cands[0]
        lo, hi = 0, len(cands) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if ok(cands[mid], budget):
                lo = mid
            else:
                hi = mid - 1
        return cands[lo]

    r0_side = largest_ok(0.0)
    rx_side = max(largest_ok(x), r0_side)
    return ResolutionPlan(
        training_res,
        _dims_for_maxdim(r0_side, original),
        _dims_for_maxdim(rx_side, original),
        x, cap, rmax,
    )


def find_resolution_exhaustive(ctx, x, original, training_res=384, cap=3.0,
                               rmax=3000, receptive=None):
    """Linear-scan oracle over every 32-px candidate; must match
    find_resolution exactly."""
    if not 0 <= x < 1:
        raise ValueError("x must be in [0, 1)")
    receptive = training_res if receptive is None else receptive
    cands = candidate_maxdims(original, training_res, cap, rmax)
    if ctx.empty:
        dims = _dims_for_maxdim(cands[0], original)
        return ResolutionPlan(training_res, dims, dims, x, cap, rmax, degenerate=True)
    ref_maxdim = max(ctx.ref_width, ctx.ref_height)
    r0_side = rx_side = cands[0]
    for side in cands:
        frac = uncovered_fraction(ctx, side / ref_maxdim, receptive)
        if frac <= 0.0:
            r0_side = side
        if frac <= x:
            rx_side = side
    rx_side = max(rx_side, r0_side)
    return ResolutionPlan(
        training_res,
        _dims_for_maxdim(r0_side, original),
        _dims_for_maxdim(rx_side, original),
        x, cap, rmax,
    )


def target_resolution(r20, k, rmax=3000):
    """Enlarge the base size for sparse-context images.

    Multiplier m = max(1, rmax / (4 * k * maxdim(r20))) applied to both
    dimensions, clamped so the larger side never exceeds rmax, rounded to
    the 32-px grid.  k = 0 (no edges) skips the adjustment.  The result is
    never smaller than the input.
    """
    w, h = r20
    if not 0 <= k <= 1:
        raise ValueError("k must be in [0, 1]")
    if k == 0:
        return (w, h)
    maxdim = max(w, h)
    m = max(1.0, rmax / (4.0 * k * maxdim))
    if m <= 1.0 or maxdim >= rmax:
        return (w, h)
    # Grid-round the enlarged sides but never past the rmax clamp.
    md = min(round_to_grid(maxdim * m), rmax)
    scale = md / maxdim
    tw = min(round_to_grid(w * scale), md)
    th = min(round_to_grid(h * scale), md)
    if w >= h:
        tw = md
    else:
        th = md
    return (max(w, tw), max(h, th))


def analysis_report(ctx, plan, receptive, curve_points=12):
    """JSON-ready summary for the `analyze` CLI subcommand."""
    ref_maxdim = max(ctx.ref_width, ctx.ref_height)
    curve = []
    for side in np.linspace(plan.training_res, plan.rmax, curve_points):
        s = float(side) / ref_maxdim
        curve.append((round(float(side)), uncovered_fraction(ctx, s, receptive)))
    return {
        "schema": 1,
        "r0": list(plan.r0),
        "r20": list(plan.rx),
        "degenerate": plan.degenerate,
        "k": influence_ratio(ctx, receptive),
        "context_percentage": context_percentage(ctx),
        "uncovered_curve": curve,
    }
