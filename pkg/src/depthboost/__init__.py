"""Content-adaptive high-resolution boosting for monocular depth estimators.

A depth map produced at the network's training resolution is structurally
consistent but blurry; one produced at a much higher resolution is sharp but
develops low-frequency artifacts wherever image edges are sparse.  This
package estimates at several resolutions chosen from the image's edge
density, merges the estimates with a local-affine detail transfer, refines
edge-dense areas with adaptively sized patches, and evaluates results with
RMSE / delta / ordinal / boundary-disagreement metrics.
"""

from depthboost import context, estimator, merging, metrics, pipeline, raster

__all__ = ["raster", "context", "estimator", "merging", "metrics", "pipeline"]
__version__ = "0.1.0"
