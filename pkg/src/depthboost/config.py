"""Layered run configuration: defaults < config file < environment < flags.

The config file is flat ``key = value`` text with dotted section names
(e.g. ``merge.radius = 32``).  Environment variables use the ``DEPTHBOOST_``
prefix with dots replaced by underscores (``DEPTHBOOST_MERGE_RADIUS``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

ENV_PREFIX = "DEPTHBOOST_"


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute, type)
FIELDS = {
    "backend": ("backend", str),
    "receptive": ("receptive", int),
    "x_percent": ("x_percent", float),
    "upsample_cap": ("upsample_cap", float),
    "rmax": ("rmax", int),
    "merge.radius": ("merge_radius", int),
    "merge.eps": ("merge_eps", float),
    "merge.merge_res": ("merge_res", int),
    "feather_band": ("feather_band", float),
    "patch.stride_ratio": ("patch_stride_ratio", float),
    "patch.expand_step": ("patch_expand_step", int),
    "metrics.pairs": ("metrics_pairs", int),
    "metrics.sigma": ("metrics_sigma", float),
    "metrics.slic_k": ("metrics_slic_k", int),
    "metrics.disc_thresh": ("metrics_disc_thresh", float),
    "workers": ("workers", int),
    "seed": ("seed", int),
    "strict": ("strict", _parse_bool),
}


@dataclass
class Config:
    backend: str = "synthetic"
    receptive: int = 384
    x_percent: float = 0.20
    upsample_cap: float = 3.0
    rmax: int = 3000
    merge_radius: int = 48
    merge_eps: float = 1e-4
    merge_res: int = 1024
    feather_band: float = 0.15
    patch_stride_ratio: float = 2.0 / 3.0
    patch_expand_step: int = 32
    metrics_pairs: int = 50_000
    metrics_sigma: float = 0.03
    metrics_slic_k: int = 0       # 0 = one superpixel per 64-px cell
    metrics_disc_thresh: float = 0.1
    workers: int = 1
    seed: int = 0
    strict: bool = False

    def apply(self, key, raw):
        if key not in FIELDS:
            raise KeyError(f"unknown config key: {key}")
        attr, conv = FIELDS[key]
        setattr(self, attr, conv(raw))


def parse_config_file(path, cfg=None):
    cfg = cfg or Config()
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            cfg.apply(key.strip(), raw.strip())
    return cfg


def apply_env(cfg, environ=None):
    environ = os.environ if environ is None else environ
    for key in FIELDS:
        env_key = ENV_PREFIX + key.replace(".", "_").upper()
        if env_key in environ:
            cfg.apply(key, environ[env_key])
    return cfg


def load_config(path=None, environ=None, overrides=None):
    """Assemble a Config with the documented precedence."""
    cfg = Config()
    if path:
        cfg = parse_config_file(path, cfg)
    cfg = apply_env(cfg, environ)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            cfg.apply(key, raw)
    return cfg
