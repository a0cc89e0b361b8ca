"""Depth-estimator backends behind one "image in, relative depth out" contract.

Two backends ship:

* SyntheticBackend: a deterministic analytic model used as a test oracle.
  It renders ground-truth inverse depth for a procedurally generated scene,
  blurs it more the coarser the request resolution (detail loss), and adds a
  low-frequency sinusoid wherever image edges are farther apart than the
  receptive field (the artifact regime of real networks).
* ExternalBackend: wraps any real network as a subprocess via a small file
  protocol (PNG in, PFM out).

Estimates are relative inverse depth, min-max normalized to [0, 1] per call,
so mergers must solve the real range-mismatch problem.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from depthboost import raster

FULL_ROI = (0.0, 0.0, 1.0, 1.0)


class BackendError(Exception):
    """Base class for estimator-backend failures."""


class SpawnError(BackendError):
    """The backend process could not be started."""


class BackendFailure(BackendError):
    """The backend process exited nonzero; carries its stderr."""

    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


class BackendTimeout(BackendError):
    """The backend process exceeded its time budget."""


class OutputMissing(BackendError):
    """The backend exited cleanly but produced no readable output."""


class DimensionMismatch(BackendError):
    """The backend returned a map whose size differs from the request."""


@dataclass(frozen=True)
class EstimatorSpec:
    """Static properties of a depth network."""

    receptive: int = 384  # square training/receptive size
    name: str = "synthetic"
    supports_concurrent: bool = True

    def __post_init__(self):
        if self.receptive < 32 or self.receptive % 32 != 0:
            raise ValueError("receptive must be >= 32 and a multiple of 32")


@dataclass(frozen=True)
class Region:
    """One scene element; bounds are normalized (x0, y0, x1, y1)."""

    shape: str  # "rect" | "ellipse"
    bounds: tuple
    depth: float  # inverse depth in (0, 1]
    albedo: tuple  # RGB in [0, 1]


@dataclass(frozen=True)
class SceneSpec:
    """Procedural test scene: regions over a depth-ramp background."""

    width: int = 768
    height: int = 576
    regions: tuple = ()
    background_depth: tuple = (0.1, 0.35)  # inverse depth at top / bottom rows
    background_albedo: tuple = (0.45, 0.45, 0.45)
    # Smooth low-contrast depth variation in the background: real structure
    # whose image gradients stay below the edge threshold (cue-free detail).
    cloud_amplitude: float = 0.3
    texture_density: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class OracleParams:
    """Knobs of the synthetic estimator's degradation model."""

    detail_sigma_scene: float = 6.0   # blur radius in scene pixels at 1:1
    artifact_amplitude: float = 0.3   # must stay < 0.5
    artifact_wavelength: float = 0.0  # scene pixels; 0 -> scene_maxdim / 4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.artifact_amplitude < 0.5:
            raise ValueError("artifact_amplitude must be in [0, 0.5)")


def random_scene(seed, width=768, height=576, n_regions=None,
                 texture_density=0.5, n_islands=None):
    """Deterministic random scene; same seed -> identical spec."""
    rng = np.random.default_rng(seed)
    if n_regions is None:
        n_regions = int(rng.integers(3, 7))
    # Regions gather around a few well-separated anchors so parts of the
    # frame stay flat: that is the regime where resolution choice and
    # patching matter.  Spreading clusters toward different quadrants keeps
    # local cue density bounded relative to the whole-image mean, so patch
    # expansion terminates instead of swallowing the frame.
    sites = np.array([[0.22, 0.25], [0.78, 0.75], [0.78, 0.25], [0.22, 0.75]])
    order = rng.permutation(len(sites))
    n_anchors = int(rng.integers(3, 5))
    anchors = sites[order[:n_anchors]] + rng.normal(0.0, 0.04, (n_anchors, 2))
    regions = []
    for _ in range(n_regions):
        anchor = anchors[int(rng.integers(0, len(anchors)))]
        cx, cy = np.clip(anchor + rng.normal(0.0, 0.06, size=2), 0.08, 0.92)
        rw = rng.uniform(0.04, 0.10)
        rh = rng.uniform(0.04, 0.10)
        bounds = (max(0.0, cx - rw), max(0.0, cy - rh),
                  min(1.0, cx + rw), min(1.0, cy + rh))
        shape = "rect" if rng.random() < 0.5 else "ellipse"
        # Depths come from a spaced ladder so any two distinct depth values
        # (and any value against the background) differ by a robust ratio;
        # near-tie contrasts would sit on metric thresholds by accident.
        depth = float(rng.choice([0.55, 0.72, 0.95]))
        albedo = tuple(rng.uniform(0.1, 0.9, size=3))
        regions.append(Region(shape, bounds, depth, albedo))
    # Small cue "islands" scattered over the otherwise flat background keep
    # the resolution search honest (isolated detail far from the cluster).
    if n_islands is None:
        n_islands = int(rng.integers(2, 5))
    for _ in range(n_islands):
        cx, cy = rng.uniform(0.05, 0.95, size=2)
        # Island extent stays above the evaluation superpixel scale so an
        # island forms its own superpixel instead of marginally shifting a
        # background superpixel's mean onto the discontinuity threshold.
        r = rng.uniform(0.06, 0.09)
        bounds = (max(0.0, cx - r), max(0.0, cy - r),
                  min(1.0, cx + r), min(1.0, cy + r))
        regions.append(Region("rect" if rng.random() < 0.5 else "ellipse",
                              bounds, float(rng.choice([0.55, 0.72, 0.95])),
                              tuple(rng.uniform(0.2, 0.8, size=3))))
    return SceneSpec(width=width, height=height, regions=tuple(regions),
                     texture_density=texture_density, seed=seed)


def _texture_grids(spec):
    # Texture site activation u and signed amplitude, both on the native
    # grid and independent of density, so halving density yields a strict
    # subset of sites.
    rng = np.random.default_rng(spec.seed + 1)
    u = rng.random((spec.height, spec.width))
    amp = rng.random((spec.height, spec.width)) - 0.5
    return u, amp


def _cloud_field(spec, sx, sy):
    # A few seeded low-frequency plane waves, normalized to [-1, 1]-ish.
    rng = np.random.default_rng(spec.seed + 2)
    field = np.zeros(sx.shape)
    for _ in range(4):
        fx, fy = rng.uniform(1.5, 4.0, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        field += rng.uniform(0.5, 1.0) * np.sin(
            2.0 * math.pi * (fx * sx + fy * sy) + phase)
    return field / 3.0


def _region_mask(region, sx, sy):
    x0, y0, x1, y1 = region.bounds
    if region.shape == "rect":
        return (sx >= x0) & (sx < x1) & (sy >= y0) & (sy < y1)
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    rx, ry = max((x1 - x0) / 2.0, 1e-9), max((y1 - y0) / 2.0, 1e-9)
    return ((sx - cx) / rx) ** 2 + ((sy - cy) / ry) ** 2 <= 1.0


def render_scene(spec, w, h, roi=FULL_ROI):
    """Render RGB, GT inverse depth, and the cue-edge mask for a view.

    roi is a normalized (x0, y0, x1, y1) window of the scene; values outside
    [0, 1] replicate the scene border (used for pad-to-square estimation).
    """
    rx0, ry0, rx1, ry1 = roi
    sx = rx0 + (np.arange(w) + 0.5) / w * (rx1 - rx0)
    sy = ry0 + (np.arange(h) + 0.5) / h * (ry1 - ry0)
    sx = np.clip(sx, 0.0, 1.0 - 1e-12)[None, :] * np.ones((h, 1))
    sy = np.clip(sy, 0.0, 1.0 - 1e-12)[:, None] * np.ones((1, w))

    top, bottom = spec.background_depth
    gt = top + (bottom - top) * sy
    rgb = np.ones((h, w, 3)) * np.asarray(spec.background_albedo)
    labels = np.zeros((h, w), dtype=np.intp)

    if spec.cloud_amplitude > 0.0:
        cloud = _cloud_field(spec, sx, sy)
        gt = gt + spec.cloud_amplitude * cloud
        rgb = np.clip(rgb + 0.5 * spec.cloud_amplitude * cloud[:, :, None], 0.0, 1.0)

    for i, region in enumerate(spec.regions, start=1):
        mask = _region_mask(region, sx, sy)
        gt[mask] = region.depth
        rgb[mask] = np.asarray(region.albedo)
        labels[mask] = i

    # Region boundaries: label transitions along either axis (marked on both
    # sides so the cue edge survives any later resampling).
    edges = np.zeros((h, w), dtype=bool)
    dif_x = labels[:, 1:] != labels[:, :-1]
    dif_y = labels[1:, :] != labels[:-1, :]
    edges[:, 1:] |= dif_x
    edges[:, :-1] |= dif_x
    edges[1:, :] |= dif_y
    edges[:-1, :] |= dif_y

    # High-frequency albedo texture inside regions, sampled from the native
    # seeded grids so every request resolution sees the same sites.
    u, amp = _texture_grids(spec)
    iy = np.minimum((sy * spec.height).astype(np.intp), spec.height - 1)
    ix = np.minimum((sx * spec.width).astype(np.intp), spec.width - 1)
    sites = (u[iy, ix] < spec.texture_density) & (labels > 0)
    rgb[sites] = np.clip(rgb[sites] + 0.6 * amp[iy, ix][sites, None], 0.0, 1.0)
    edges |= sites

    # Darken region outlines so the RGB gradient proxy always fires there.
    rgb[edges] *= 0.5
    return rgb, gt, edges


def generate_scene(spec):
    """Render the scene at its native resolution -> (rgb, gt)."""
    rgb, gt, _ = render_scene(spec, spec.width, spec.height)
    return rgb, gt


def normalize_unit(depth):
    """Min-max normalize to [0, 1]; a constant map becomes all 0.5."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = float(depth.min()), float(depth.max())
    if hi - lo < 1e-12:
        return np.full(depth.shape, 0.5)
    return (depth - lo) / (hi - lo)


def oracle_estimate(scene, params, w, h, receptive=384, roi=FULL_ROI):
    """Deterministic stand-in for a depth network.

    Renders GT for the requested view, blurs it by
    detail_sigma_scene * (scene extent of the view / request size) pixels,
    then adds a low-frequency sinusoid ramped in wherever the distance to
    the nearest cue edge (in request pixels) exceeds receptive / 2.
    """
    if w < 32 or h < 32:
        raise ValueError("request dimensions must be >= 32")
    _, gt, edges = render_scene(scene, w, h, roi)

    scene_maxdim = max(scene.width, scene.height)
    rx0, ry0, rx1, ry1 = roi
    view_extent = max((rx1 - rx0) * scene.width, (ry1 - ry0) * scene.height)
    sigma = params.detail_sigma_scene * view_extent / max(w, h)
    est = raster.gaussian_blur(gt, sigma)

    # A scene with no cues at all degenerates to a constant output after
    # normalization; the artifact models inconsistency relative to cue
    # structure, so it needs at least one edge to anchor to.
    if params.artifact_amplitude > 0.0 and edges.any():
        d = raster.distance_to_set(edges)
        half = receptive / 2.0
        gate = np.clip((d - half) / half, 0.0, 1.0)
        if gate.any():
            wavelength = params.artifact_wavelength or scene_maxdim / 4.0
            sx = rx0 + (np.arange(w) + 0.5) / w * (rx1 - rx0)
            sy = ry0 + (np.arange(h) + 0.5) / h * (ry1 - ry0)
            pos = sx[None, :] * scene.width + sy[:, None] * scene.height
            est = est + gate * params.artifact_amplitude * np.sin(
                2.0 * math.pi * pos / wavelength)

    return normalize_unit(est)


class SyntheticBackend:
    """Oracle backend: pure, thread-safe, needs no network."""

    def __init__(self, scene, params=None, spec=None):
        self.scene = scene
        self.params = params or OracleParams()
        self.spec = spec or EstimatorSpec()

    def estimate(self, image, roi=None):
        h, w = np.asarray(image).shape[:2]
        return oracle_estimate(self.scene, self.params, w, h,
                               receptive=self.spec.receptive,
                               roi=roi or FULL_ROI)


class ExternalBackend:
    """Runs an arbitrary command per estimate: PNG in, PFM out.

    The template must contain {in} and {out} placeholders.  Calls are
    serialized unless the spec declares concurrency support; each call uses
    its own temp workspace either way.
    """

    def __init__(self, cmd_template, spec=None, timeout=300.0):
        if "{in}" not in cmd_template or "{out}" not in cmd_template:
            raise ValueError("command template needs {in} and {out}")
        self.cmd_template = cmd_template
        self.spec = spec or EstimatorSpec(name="external", supports_concurrent=False)
        self.timeout = timeout
        self._lock = threading.Lock()

    def estimate_raw(self, image, roi=None):
        """Run the process and return its map without normalization."""
        del roi  # the crop itself is sent; location is irrelevant
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        lock = self._lock if not self.spec.supports_concurrent else threading.Lock()
        with lock, tempfile.TemporaryDirectory(prefix="depthboost-") as tmp:
            in_path = str(Path(tmp) / "in.png")
            out_path = str(Path(tmp) / "out.pfm")
            raster.save_image(in_path, image)
            cmd = self.cmd_template.format(**{"in": in_path, "out": out_path})
            _run_process(cmd, self.timeout)
            if not Path(out_path).exists():
                raise OutputMissing(f"backend produced no output: {cmd}")
            result = raster.load_depth(out_path)
        h, w = image.shape[:2]
        if result.shape != (h, w):
            raise DimensionMismatch(
                f"requested {w}x{h}, backend returned {result.shape[1]}x{result.shape[0]}")
        return np.asarray(result, dtype=np.float64)

    def estimate(self, image, roi=None):
        return normalize_unit(self.estimate_raw(image, roi))


def _run_process(cmd, timeout):
    argv = shlex.split(cmd)
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout)
    except FileNotFoundError as e:
        raise SpawnError(f"cannot start backend: {e}") from e
    except subprocess.TimeoutExpired as e:
        raise BackendTimeout(f"backend exceeded {timeout}s: {cmd}") from e
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf8", "replace")
        raise BackendFailure(
            f"backend exited {proc.returncode}: {cmd}\n{stderr}", stderr=stderr)


MERGE_RES = 1024  # learned mergers are trained and invoked at 1024 x 1024


def external_merge(cmd_template, low, high, timeout=300.0):
    """Invoke an external (e.g. learned) merger: two PFMs in, one out.

    Both inputs are resampled to 1024 x 1024 first, matching the trained
    merger's interface; the result comes back at that size.
    """
    for key in ("{low}", "{high}", "{out}"):
        if key not in cmd_template:
            raise ValueError(f"merge template needs {key}")
    low = raster.resize_bilinear(np.asarray(low, dtype=np.float64), MERGE_RES, MERGE_RES)
    high = raster.resize_bilinear(np.asarray(high, dtype=np.float64), MERGE_RES, MERGE_RES)
    with tempfile.TemporaryDirectory(prefix="depthboost-merge-") as tmp:
        lo_path = str(Path(tmp) / "low.pfm")
        hi_path = str(Path(tmp) / "high.pfm")
        out_path = str(Path(tmp) / "out.pfm")
        raster.save_depth(lo_path, low)
        raster.save_depth(hi_path, high)
        cmd = cmd_template.format(low=lo_path, high=hi_path, out=out_path)
        _run_process(cmd, timeout)
        if not Path(out_path).exists():
            raise OutputMissing(f"merger produced no output: {cmd}")
        result = raster.load_depth(out_path)
    if result.shape != (MERGE_RES, MERGE_RES):
        raise DimensionMismatch(
            f"merger returned {result.shape[1]}x{result.shape[0]}, expected 1024x1024")
    return normalize_unit(result)
