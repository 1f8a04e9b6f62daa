"""
Occlusion relevance maps and atlas aggregation
==============================================

Occlusion asks "where does the classifier look?": slide a patch of
constant fill over the volume, re-predict, and record the drop in the
PD probability. Voxels whose occlusion lowers the probability carry
positive relevance. The map can then be averaged over subjects and
aggregated into named atlas regions.
"""

import tempfile
from pathlib import Path

import numpy as np

from neuroens.occlusion import (OcclusionConfig, export_heatmap, occlusion_heatmap,
                                occlusion_positions, region_relevance, render_regions)
from neuroens.synthetic import lesion_mask, make_phantom

# Step 1 - the sliding grid
# -------------------------
# Strides walk the start positions; a final clamped position keeps the
# last patch inside the volume so every voxel is covered.
print(f"positions for dim 16, patch 10, stride 5: {occlusion_positions(16, 10, 5)}")

# Step 2 - an analytic classifier with a known answer
# ---------------------------------------------------
# This "model" scores PD from the mean intensity inside the lesion
# ellipsoid, so all relevance must fall inside it.
dims = (16, 16, 16)
mask = lesion_mask(dims)


def predict(volumes):
    p1 = 1.0 / (1.0 + np.exp(-8.0 * (float(volumes[0][mask].mean()) - 0.5)))
    return np.array([1.0 - p1, p1])


vol = make_phantom(dims, is_pd=True, class_effect=0.5, seed=2).data
print(f"PD probability before occlusion: {predict((vol,))[1]:.3f}")

# Step 3 - the relevance map
# --------------------------
cfg = OcclusionConfig(patch_size=(4, 4, 4), stride=(2, 2, 2))
heat = occlusion_heatmap(predict, (vol,), cfg)
argmax = tuple(int(i) for i in np.unravel_index(np.argmax(heat), heat.shape))
print(f"strongest relevance at {argmax}, inside the lesion: {bool(mask[argmax])}")
print(f"mean relevance inside lesion {heat[mask].mean():.4f}, "
      f"outside {heat[~mask].mean():.4f}")

# Step 4 - aggregate into atlas regions
# -------------------------------------
# A toy two-region atlas: the lesion ellipsoid vs. the rest.
atlas = np.where(mask, 1, 2)
regions = region_relevance(heat, atlas, {1: "lesion ellipsoid", 2: "background"})
print()
print(render_regions(regions, top=5))

# Step 5 - export slices for inspection
# -------------------------------------
out = Path(tempfile.mkdtemp(prefix="neuroens_demo_"))
written = export_heatmap(heat, out)
csvs = sum(1 for p in written if p.suffix == ".csv")
pngs = sum(1 for p in written if p.suffix == ".png")
print(f"wrote {csvs} CSV slices and {pngs} PNG slices to {out}")
