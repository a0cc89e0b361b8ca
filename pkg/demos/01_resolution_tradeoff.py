"""Demo 1: why no single input resolution wins.

Renders one synthetic scene and estimates depth at several input sizes.
Small inputs are structurally consistent but blurry; large inputs recover
detail near edges but grow low-frequency artifacts wherever the receptive
field sees no contrast cues.  The resolution analysis picks R_0 and R_20
from the edge-density map alone, before any estimation happens.
"""

from pathlib import Path

import numpy as np

from depthboost import context, estimator, metrics, raster
from depthboost.cli import colorize

OUT = Path(__file__).parent / "out" / "01"
OUT.mkdir(parents=True, exist_ok=True)

SEED, W, H, RMAX, REC = 7, 512, 384, 1600, 384

scene = estimator.random_scene(SEED, W, H)
rgb, gt = estimator.generate_scene(scene)
backend = estimator.SyntheticBackend(
    scene, estimator.OracleParams(detail_sigma_scene=2.5, artifact_amplitude=0.45,
                                  artifact_wavelength=max(W, H) / 12.0))
raster.save_image(OUT / "scene_rgb.png", rgb)
raster.save_image(OUT / "scene_gt.png", colorize(gt))

print(f"Scene {SEED}: {W}x{H}, {len(scene.regions)} depth regions.")
print("\nEstimating at a ladder of input sizes (RMSE vs ground truth):")
for maxdim in (384, 768, 1152, 1536):
    w = maxdim
    h = round(maxdim * H / W / 32) * 32
    est = backend.estimate(raster.resize_bilinear(rgb, w, h))
    err = metrics.rmse(raster.resize_bilinear(est, W, H), gt)
    print(f"  {w:5d}x{h:<5d} rmse={err:.4f}")
    raster.save_image(OUT / f"est_{maxdim}.png", colorize(est))
print("Middle sizes win: blur falls with resolution until cue-starved")
print("areas start hallucinating low-frequency structure.")

ctx = context.compute_context_map(rgb, min(3.0, RMAX / max(W, H)))
plan = context.find_resolution(ctx, 0.20, (W, H), training_res=REC,
                               cap=3.0, rmax=RMAX, receptive=REC)
print(f"\nResolution analysis (no estimation needed):")
print(f"  whole-image edge density = {context.context_percentage(ctx):.3f}")
print(f"  R_0  (every pixel near a cue)      = {plan.r0[0]}x{plan.r0[1]}")
print(f"  R_20 (<= 20% of pixels cue-starved) = {plan.rx[0]}x{plan.rx[1]}")
edges = np.repeat(ctx.edges.astype(float)[:, :, None], 3, axis=2)
raster.save_image(OUT / "edge_proxy.png", edges)
print(f"\nImages written to {OUT}")
