"""Deterministic detail-transfer merger and feathered patch compositing.

The merger fits a local affine model (guided-filter family) mapping the
detailed estimate onto the structurally consistent one: low frequencies
follow the base, high frequencies follow the detail up to a local affine
gain, so the two estimates' unrelated value ranges do not matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class MergeParams:
    """Local-affine merge settings.

    radius is the window half-size in pixels at merge_res; callers merging
    at other resolutions scale it proportionally.
    """

    radius: int = 48  # receptive 384 / 8 at merge_res
    eps: float = 1e-4
    merge_res: int = 1024

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def radius_at(self, maxdim):
        return max(1, round(self.radius * maxdim / self.merge_res))


def _box_mean(img, radius):
    return ndimage.uniform_filter(img, size=2 * radius + 1, mode="nearest")


def local_affine_merge(base, detail, params=None, radius=None):
    """Transfer high-frequency content of `detail` into the structure and
    value range of `base`.

    Per window: a = cov(detail, base) / (var(detail) + eps),
    b = mean(base) - a * mean(detail); the coefficient fields are
    box-smoothed with the same radius and the output a * detail + b is
    clamped to [0, 1].  A locally constant detail window degrades
    gracefully to the local base mean via the ridge term.
    """
    base = np.asarray(base, dtype=np.float64)
    detail = np.asarray(detail, dtype=np.float64)
    if base.shape != detail.shape:
        raise ValueError(f"shape mismatch: base {base.shape} vs detail {detail.shape}")
    params = params or MergeParams()
    r = radius if radius is not None else params.radius_at(max(base.shape))

    mean_b = _box_mean(base, r)
    mean_d = _box_mean(detail, r)
    mean_db = _box_mean(detail * base, r)
    mean_dd = _box_mean(detail * detail, r)
    cov = mean_db - mean_d * mean_b
    var = mean_dd - mean_d * mean_d
    a = cov / (var + params.eps)
    b = mean_b - a * mean_d
    a = _box_mean(a, r)
    b = _box_mean(b, r)
    return np.clip(a * detail + b, 0.0, 1.0)


def feather_mask(w, h, band=0.15):
    """Separable border ramp: 1 in the interior, 0 on the outermost ring.

    weight = min over axes of clamp(dist_to_border / (band * min(w, h)), 0, 1).
    """
    if not 0.0 < band < 0.5:
        raise ValueError("band must be in (0, 0.5)")
    band_px = band * min(w, h)
    dx = np.minimum(np.arange(w), np.arange(w)[::-1])
    dy = np.minimum(np.arange(h), np.arange(h)[::-1])
    wx = np.clip(dx / band_px, 0.0, 1.0)
    wy = np.clip(dy / band_px, 0.0, 1.0)
    return np.minimum(wy[:, None], wx[None, :])


def composite_patch(canvas, patch, rect, mask):
    """Blend `patch` into `canvas` over `rect` with feather weights.

    canvas[rect] = mask * patch + (1 - mask) * canvas[rect]; everything
    outside the rect is untouched (returned canvas is a copy).
    """
    canvas = np.asarray(canvas, dtype=np.float64)
    patch = np.asarray(patch, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    x, y, w, h = rect
    ch, cw = canvas.shape
    if x < 0 or y < 0 or x + w > cw or y + h > ch:
        raise ValueError(f"rect {rect} outside canvas {cw}x{ch}")
    if patch.shape != (h, w) or mask.shape != (h, w):
        raise ValueError("patch and mask must match the rect dimensions")
    out = canvas.copy()
    window = out[y:y + h, x:x + w]
    out[y:y + h, x:x + w] = mask * patch + (1.0 - mask) * window
    return out
