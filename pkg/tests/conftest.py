"""Shared fixtures: the synthetic scene family used across the suite.

The acceptance experiments run on 512x384 scenes with rmax=1600 and an
oracle tuned so both halves of the resolution trade-off are visible: mild
detail blur (higher request resolution genuinely helps near edges) and a
strong low-frequency artifact (pushing resolution too far genuinely hurts).
"""

import numpy as np
import pytest

from depthboost import context, estimator, pipeline, raster

SCENE_W = 512
SCENE_H = 384
RMAX = 1600
RECEPTIVE = 384


def oracle_params(seed=0):
    return estimator.OracleParams(
        detail_sigma_scene=1.5,
        artifact_amplitude=0.45,
        artifact_wavelength=max(SCENE_W, SCENE_H) / 12.0,
        seed=seed,
    )


def make_scene(seed, texture_density=0.5):
    return estimator.random_scene(seed, SCENE_W, SCENE_H,
                                  texture_density=texture_density)


def make_backend(scene):
    return estimator.SyntheticBackend(scene, oracle_params())


def plan_for(rgb, x_percent=0.20, rmax=RMAX, receptive=RECEPTIVE):
    h, w = rgb.shape[:2]
    ref_scale = min(3.0, rmax / max(w, h))
    ctx = context.compute_context_map(rgb, ref_scale)
    plan = context.find_resolution(ctx, x_percent, (w, h),
                                   training_res=receptive, cap=3.0,
                                   rmax=rmax, receptive=receptive)
    return ctx, plan


def boost_options(**kwargs):
    kwargs.setdefault("rmax", RMAX)
    return pipeline.BoostOptions(**kwargs)


def rmse_native(est, gt):
    """Compare an estimate against GT on the GT grid (disparity RMSE)."""
    from depthboost import metrics

    est = raster.resize_bilinear(est, gt.shape[1], gt.shape[0])
    return metrics.rmse(est, gt)


@pytest.fixture
def scene7():
    return make_scene(7)


@pytest.fixture
def backend7(scene7):
    return make_backend(scene7)
