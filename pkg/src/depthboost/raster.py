"""Dense-image primitives shared by the whole pipeline.

Images are numpy arrays: (H, W) float64 in [0, 1] for single-channel data,
(H, W, 3) float64 in [0, 1] for RGB, and (H, W) bool for binary masks.
Depth maps follow the disparity convention (larger = closer).
"""

from __future__ import annotations

import re

import numpy as np
from PIL import Image
from scipy import ndimage


class RasterError(Exception):
    """Base class for image / depth file errors."""


class PfmHeaderError(RasterError):
    """PFM file has a malformed or unsupported header."""


class PfmDimensionError(RasterError):
    """PFM header declares dimensions that are invalid or too large."""


class PfmTruncatedError(RasterError):
    """PFM payload is shorter than the header promises."""


# Dimensions past this point are treated as header corruption rather than data.
MAX_PFM_DIM = 1 << 20


def as_float_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ValueError(f"expected 2-D or 3-D image array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def resize_bilinear(img, w, h):
    """Resample to w x h with center-aligned bilinear interpolation.

    Constant fields are preserved exactly and output values never leave the
    input's [min, max] range.
    """
    img = np.asarray(img, dtype=np.float64)
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (w, h):
        return img.copy()

    def axis_coords(dst_n, src_n):
        # Center-aligned mapping, clamped so border samples replicate.
        x = (np.arange(dst_n) + 0.5) * (src_n / dst_n) - 0.5
        x = np.clip(x, 0.0, src_n - 1.0)
        lo = np.floor(x).astype(np.intp)
        hi = np.minimum(lo + 1, src_n - 1)
        frac = x - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, src_h)
    x0, x1, fx = axis_coords(w, src_w)

    if img.ndim == 2:
        rows = img[y0] * (1.0 - fy)[:, None] + img[y1] * fy[:, None]
        out = rows[:, x0] * (1.0 - fx)[None, :] + rows[:, x1] * fx[None, :]
    else:
        rows = img[y0] * (1.0 - fy)[:, None, None] + img[y1] * fy[:, None, None]
        out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return out


def resize_nearest(img, w, h):
    """Nearest-neighbor resample (used for masks and seeded texture grids)."""
    img = np.asarray(img)
    src_h, src_w = img.shape[:2]
    ys = np.minimum(((np.arange(h) + 0.5) * (src_h / h)).astype(np.intp), src_h - 1)
    xs = np.minimum(((np.arange(w) + 0.5) * (src_w / w)).astype(np.intp), src_w - 1)
    return img[np.ix_(ys, xs)] if img.ndim == 2 else img[np.ix_(ys, xs)]


def gradient_magnitude(rgb):
    """Per-pixel max over channels of sqrt(gx^2 + gy^2).

    Central differences in the interior, one-sided at the borders, so the
    output has the same size as the input.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("gradient_magnitude expects an (H, W, 3) image")
    mags = []
    for c in range(3):
        gy, gx = np.gradient(rgb[:, :, c])
        mags.append(np.hypot(gx, gy))
    return np.maximum.reduce(mags)


def threshold_mean(gray):
    """Binary mask: pixel is set iff it strictly exceeds the image mean."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("threshold_mean expects a single-channel image")
    return gray > gray.mean()


def dilate_box(mask, k):
    """Box dilation: pixel set iff any set pixel within Chebyshev radius k//2.

    Even kernel sizes are rounded up to the next odd size.
    """
    mask = np.asarray(mask, dtype=bool)
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    if k % 2 == 0:
        k += 1
    if k == 1:
        return mask.copy()
    return ndimage.maximum_filter(mask, size=k, mode="constant", cval=False)


def distance_to_set(mask):
    """Exact Chebyshev distance to the nearest set pixel.

    Zero on set pixels; +inf everywhere when the mask is empty.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    dist = ndimage.distance_transform_cdt(~mask, metric="chessboard")
    return dist.astype(np.float64)


def gaussian_blur(img, sigma):
    """Separable Gaussian blur, kernel truncated at 3*sigma, edges clamped."""
    img = np.asarray(img, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    out = ndimage.convolve1d(img, kernel, axis=0, mode="nearest")
    out = ndimage.convolve1d(out, kernel, axis=1, mode="nearest")
    return out


# ---------------------------------------------------------------------------
# File I/O.  RGB images travel as 8-bit PNG, depth maps as PFM (lossless)
# with 16-bit gray PNG available as a lossy export.
# ---------------------------------------------------------------------------


def load_image(path):
    """Load an image file as (H, W, 3) float64 in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def save_image(path, img):
    """Save (H, W, 3) float [0,1] as 8-bit RGB PNG (round-half-up)."""
    img = np.asarray(img, dtype=np.float64)
    data = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def save_depth_png16(path, depth):
    """Export [0,1] depth as 16-bit gray PNG; quantizes with round-half-up."""
    depth = np.asarray(depth, dtype=np.float64)
    data = np.floor(np.clip(depth, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(data).save(path)


def save_depth(path, depth):
    """Write a single-channel float map as little-endian PFM (bit-exact)."""
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ValueError("save_depth expects a single-channel map")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        # PFM stores rows bottom-to-top.
        f.write(np.ascontiguousarray(depth[::-1]).tobytes())


def load_depth(path):
    """Read a single-channel PFM; round-trips save_depth bit-exactly."""
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"^(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if m is None:
        raise PfmHeaderError(f"{path}: not a valid PFM header")
    tag = m.group(1)
    if tag != b"Pf":
        raise PfmHeaderError(f"{path}: only single-channel 'Pf' maps are supported")
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise PfmHeaderError(f"{path}: bad scale field") from None
    if scale == 0:
        raise PfmHeaderError(f"{path}: scale must be nonzero")
    if w < 1 or h < 1 or w > MAX_PFM_DIM or h > MAX_PFM_DIM:
        raise PfmDimensionError(f"{path}: bad dimensions {w}x{h}")
    payload = data[m.end():]
    need = w * h * 4
    if len(payload) < need:
        raise PfmTruncatedError(f"{path}: payload {len(payload)} bytes, need {need}")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload[:need], dtype=dtype).reshape(h, w)
    return values[::-1].astype(np.float32)
