"""Heatmap overlays: blend a colormapped saliency map onto its input image.

The per-pixel blend weight is ``alpha`` scaled by the min-max-normalized
saliency, so zero-saliency pixels show the untouched image and an all-zero
map reproduces the input exactly.
"""

from __future__ import annotations

import numpy as np
from matplotlib import colormaps

from .core import Image, SaliencyMap, upsample


def overlay(image: Image, map_: SaliencyMap, alpha: float = 0.5,
            cmap: str = "viridis") -> Image:
    """Return the image tinted by the heatmap; output dims equal input dims."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if map_.data.shape != (image.height, image.width):
        map_ = upsample(map_, image.height, image.width)
    data = map_.data
    lo, hi = data.min(), data.max()
    if hi == lo:
        norm = (data > 0).astype(np.float64)
    else:
        norm = (data - lo) / (hi - lo)
    rgb = image.data if image.channels == 3 else np.repeat(image.data, 3, axis=2)
    color = colormaps[cmap](norm)[:, :, :3]
    weight = (alpha * norm)[:, :, np.newaxis]
    return Image(np.clip((1.0 - weight) * rgb + weight * color, 0.0, 1.0))
