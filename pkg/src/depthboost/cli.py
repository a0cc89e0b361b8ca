"""Batch command-line front end.

Subcommands: boost, double, analyze, eval, synth.
Exit codes: 0 success, 2 usage error, 3 backend failure, 4 I/O error.
Hard failures additionally emit a machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from depthboost import config as config_mod
from depthboost import context, estimator, merging, metrics, pipeline, raster

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class IOFailure(Exception):
    pass


# Fifth-degree polynomial fit of the turbo colormap; fixed so previews are
# byte-stable golden files.
_TURBO = {
    "r": (0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943),
    "g": (0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604),
    "b": (0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973),
}


def colorize(depth):
    """Map a [0,1] depth map to an RGB preview (turbo-style)."""
    t = np.clip(np.asarray(depth, dtype=np.float64), 0.0, 1.0)
    out = np.empty(t.shape + (3,))
    for i, ch in enumerate("rgb"):
        c = _TURBO[ch]
        out[..., i] = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))
    return np.clip(out, 0.0, 1.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="depthboost")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to key=value config file")
        p.add_argument("--backend", help="synthetic | external:<cmd template>")
        p.add_argument("--receptive", type=int)
        p.add_argument("--x-percent", type=float, dest="x_percent")
        p.add_argument("--upsample-cap", type=float, dest="upsample_cap")
        p.add_argument("--rmax", type=int)
        p.add_argument("--merge-radius", type=int, dest="merge_radius")
        p.add_argument("--merge-eps", type=float, dest="merge_eps")
        p.add_argument("--merge-res", type=int, dest="merge_res")
        p.add_argument("--feather-band", type=float, dest="feather_band")
        p.add_argument("--stride-ratio", type=float, dest="patch_stride_ratio")
        p.add_argument("--expand-step", type=int, dest="patch_expand_step")
        p.add_argument("--metrics-pairs", type=int, dest="metrics_pairs")
        p.add_argument("--metrics-sigma", type=float, dest="metrics_sigma")
        p.add_argument("--slic-k", type=int, dest="metrics_slic_k")
        p.add_argument("--disc-thresh", type=float, dest="metrics_disc_thresh")
        p.add_argument("--workers", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--strict", action="store_const", const="true", default=None)
        p.add_argument("--scene-seed", type=int, default=None,
                       help="generate a synthetic scene as the input image")
        p.add_argument("--debug-dir", default=None)

    for name in ("boost", "double"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("inputs", nargs="*", help="input image files")
        p.add_argument("out", help="output directory")

    p = sub.add_parser("analyze")
    common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("out")
    p.add_argument("--edges-png", action="store_true",
                   help="also write the edge-proxy map as PNG")

    p = sub.add_parser("eval")
    common(p)
    p.add_argument("manifest", help="text file: one 'pred.pfm gt.pfm' per line")
    p.add_argument("out")
    p.add_argument("--no-align", action="store_true")

    p = sub.add_parser("synth")
    common(p)
    p.add_argument("out")
    return parser


_FLAG_KEYS = {
    "backend": "backend", "receptive": "receptive", "x_percent": "x_percent",
    "upsample_cap": "upsample_cap", "rmax": "rmax",
    "merge_radius": "merge.radius", "merge_eps": "merge.eps",
    "merge_res": "merge.merge_res", "feather_band": "feather_band",
    "patch_stride_ratio": "patch.stride_ratio",
    "patch_expand_step": "patch.expand_step",
    "metrics_pairs": "metrics.pairs", "metrics_sigma": "metrics.sigma",
    "metrics_slic_k": "metrics.slic_k",
    "metrics_disc_thresh": "metrics.disc_thresh",
    "workers": "workers", "seed": "seed", "strict": "strict",
}


def config_from_args(args):
    overrides = {}
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = str(val)
    return config_mod.load_config(path=args.config, overrides=overrides)


def boost_options(cfg):
    return pipeline.BoostOptions(
        x_percent=cfg.x_percent,
        upsample_cap=cfg.upsample_cap,
        rmax=cfg.rmax,
        merge=merging.MergeParams(radius=cfg.merge_radius, eps=cfg.merge_eps,
                                  merge_res=cfg.merge_res),
        feather_band=cfg.feather_band,
        expand_step=cfg.patch_expand_step,
        stride_ratio=cfg.patch_stride_ratio,
        workers=cfg.workers,
        strict=cfg.strict,
    )


def make_backend(cfg, scene_seed=None):
    spec = estimator.EstimatorSpec(receptive=cfg.receptive, name=cfg.backend)
    if cfg.backend == "synthetic":
        if scene_seed is None:
            raise UsageError("synthetic backend requires --scene-seed")
        scene = estimator.random_scene(scene_seed)
        return estimator.SyntheticBackend(scene, estimator.OracleParams(seed=cfg.seed),
                                          spec=spec), scene
    if cfg.backend.startswith("external:"):
        cmd = cfg.backend.split(":", 1)[1]
        spec = estimator.EstimatorSpec(receptive=cfg.receptive, name="external",
                                       supports_concurrent=False)
        return estimator.ExternalBackend(cmd, spec=spec), None
    raise UsageError(f"unknown backend: {cfg.backend}")


def _gather_inputs(args, cfg):
    """Yield (stem, rgb image, backend) for each requested input."""
    jobs = []
    if args.scene_seed is not None:
        backend, scene = make_backend(cfg, args.scene_seed)
        rgb, _ = estimator.generate_scene(scene)
        jobs.append((f"scene{args.scene_seed}", rgb, backend))
        return jobs
    if not getattr(args, "inputs", None):
        raise UsageError("no inputs: pass image files or --scene-seed")
    backend, _ = make_backend(cfg)
    for path in args.inputs:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"input not found: {path}")
        jobs.append((p.stem, raster.load_image(p), backend))
    return jobs


def _write_outputs(outdir, stem, result, cfg, timings_extra=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    depth = result.depth
    raster.save_depth(outdir / f"{stem}_depth.pfm", depth)
    raster.save_depth_png16(outdir / f"{stem}_depth16.png", depth)
    raster.save_image(outdir / f"{stem}_preview.png", colorize(depth))
    report = {
        "schema": 1,
        "plan": {
            "training_res": result.plan.training_res,
            "r0": list(result.plan.r0),
            "rx": list(result.plan.rx),
            "x_percent": result.plan.x_percent,
            "degenerate": result.plan.degenerate,
        },
        "depth_size": [depth.shape[1], depth.shape[0]],
        "patches": [
            {"rect": list(p.rect), "context_percentage": p.context_percentage,
             "expanded": p.expanded, "area": p.area}
            for p in result.patches
        ],
        "provenance": result.provenance,
    }
    with open(outdir / f"{stem}_report.json", "w") as f:
        json.dump(report, f, indent=2)
    return report


def cmd_boost(args, patch_stage=True):
    cfg = config_from_args(args)
    opts = boost_options(cfg)
    opts.patch_stage = patch_stage
    for stem, rgb, backend in _gather_inputs(args, cfg):
        result = pipeline.boost(rgb, backend, opts)
        _write_outputs(args.out, stem, result, cfg)
        if args.debug_dir:
            dbg = Path(args.debug_dir)
            dbg.mkdir(parents=True, exist_ok=True)
            raster.save_depth(dbg / f"{stem}_merged.pfm", result.depth)
    return EXIT_OK


def cmd_analyze(args):
    cfg = config_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for stem, rgb, _backend in _gather_inputs(args, cfg):
        h, w = rgb.shape[:2]
        ref_scale = min(cfg.upsample_cap, cfg.rmax / max(w, h))
        ctx = context.compute_context_map(rgb, ref_scale)
        plan = context.find_resolution(ctx, cfg.x_percent, (w, h),
                                       training_res=cfg.receptive,
                                       cap=cfg.upsample_cap, rmax=cfg.rmax,
                                       receptive=cfg.receptive)
        report = context.analysis_report(ctx, plan, cfg.receptive)
        with open(outdir / f"{stem}_analysis.json", "w") as f:
            json.dump(report, f, indent=2)
        if args.edges_png:
            edges = np.repeat(ctx.edges.astype(np.float64)[:, :, None], 3, axis=2)
            raster.save_image(outdir / f"{stem}_edges.png", edges)
    return EXIT_OK


def cmd_eval(args):
    cfg = config_from_args(args)
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise UsageError(f"manifest not found: {args.manifest}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise UsageError(f"manifest line needs 'pred gt': {line!r}")
        pred = raster.load_depth(parts[0])
        gt = raster.load_depth(parts[1])
        report = metrics.evaluate_pair(
            pred, gt, align=not args.no_align,
            ord_pairs=cfg.metrics_pairs, ord_sigma=cfg.metrics_sigma,
            slic_k=cfg.metrics_slic_k or None,
            disc_thresh=cfg.metrics_disc_thresh, seed=cfg.seed)
        rows.append({"pred": parts[0], "gt": parts[1], "rmse": report.rmse,
                     "delta125": report.delta125, "ord": report.ord,
                     "d3r": report.d3r})
    if not rows:
        raise UsageError("manifest is empty")

    def agg(key):
        vals = [r[key] for r in rows if not math.isnan(r[key])]
        return sum(vals) / len(vals) if vals else float("nan")

    summary = {k: agg(k) for k in ("rmse", "delta125", "ord", "d3r")}
    with open(outdir / "eval.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["pred", "gt", "rmse", "delta125",
                                               "ord", "d3r"])
        writer.writeheader()
        writer.writerows(rows)
    with open(outdir / "eval.json", "w") as f:
        json.dump({"schema": 1, "per_image": rows, "aggregate": summary}, f, indent=2)
    return EXIT_OK


def cmd_synth(args):
    cfg = config_from_args(args)
    if args.scene_seed is None:
        raise UsageError("synth requires --scene-seed")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scene = estimator.random_scene(args.scene_seed)
    rgb, gt = estimator.generate_scene(scene)
    stem = f"scene{args.scene_seed}"
    raster.save_image(outdir / f"{stem}_rgb.png", rgb)
    raster.save_depth(outdir / f"{stem}_gt.pfm", gt)
    del cfg
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "boost":
            return cmd_boost(args, patch_stage=True)
        if args.command == "double":
            return cmd_boost(args, patch_stage=False)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "synth":
            return cmd_synth(args)
        raise UsageError(f"unknown command {args.command}")
    except UsageError as e:
        _emit_error(str(e), EXIT_USAGE)
        return EXIT_USAGE
    except estimator.BackendError as e:
        _emit_error(str(e), EXIT_BACKEND)
        return EXIT_BACKEND
    except (OSError, raster.RasterError) as e:
        _emit_error(str(e), EXIT_IO)
        return EXIT_IO


def _emit_error(message, code):
    json.dump({"error": message, "code": code}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
