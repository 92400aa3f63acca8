"""
Cutout augmentation and normalization
=====================================

Cutout blanks a random rectangle of a scan to imitate occlusion and missing
data. Normalization standardizes each coordinate channel over valid pixels.
"""

import numpy as np

from binpose import SceneConfig, sample_scene
from binpose.scan import CutoutConfig, compute_channel_stats, cutout, draw_cutout, normalize

sample = sample_scene(SceneConfig(), seed=3)
cloud = sample.cloud
cfg = CutoutConfig(c_p=0.5, c_min=0.2, c_max=0.8)

# %%
# The decision and the rectangle are a pure function of the seed.
for seed in range(6):
    region = draw_cutout(cloud.height, cloud.width, cfg, seed)
    if region is None:
        print(f"seed {seed}: no cutout")
    else:
        out = cutout(cloud, cfg, seed)
        print(
            f"seed {seed}: {region.height}x{region.width} at ({region.row}, {region.col}), "
            f"{region.area / (cloud.width * cloud.height):.2f} of the grid, "
            f"valid pixels {cloud.valid.sum()} -> {out.valid.sum()}"
        )

# %%
# Over many seeds about half of the scans are cut, and the cut area spans
# [c_min, c_max].
regions = [draw_cutout(cloud.height, cloud.width, cfg, s) for s in range(5000)]
applied = [r.area / (cloud.width * cloud.height) for r in regions if r is not None]
print(f"applied in {len(applied) / 50:.1f}% of seeds; area fraction {min(applied):.3f} .. {max(applied):.3f}")

# %%
# Channel statistics over valid pixels, and the normalized cloud.
stats = compute_channel_stats([cloud])
print("mean", np.round(stats.mean, 4), "std", np.round(stats.std, 4))
normed = normalize(cloud, stats)
print("normalized mean", np.round(np.nanmean(normed.points.reshape(-1, 3), axis=0), 9))
