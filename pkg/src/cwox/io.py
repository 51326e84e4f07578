"""File formats: NPY v1.0 heatmaps, 8-bit PNG images, atomic writes.

Heatmaps are stored as NPY version 1.0, dtype float32, shape (H, W),
row-major. Images are 8-bit RGB or grayscale PNG, mapped to [0, 1] by /255.
All writers go through a temp-file-plus-rename so concurrent readers never
observe a partial file.
"""

from __future__ import annotations

import io as _stdio
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import Image, SaliencyMap


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fp:
            fp.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def heatmap_bytes(map_: SaliencyMap) -> bytes:
    buf = _stdio.BytesIO()
    np.lib.format.write_array(buf, map_.data.astype(np.float32), version=(1, 0))
    return buf.getvalue()


def save_heatmap(path: str | Path, map_: SaliencyMap) -> None:
    """Save a saliency map as NPY v1.0 float32 (H, W)."""
    atomic_write_bytes(path, heatmap_bytes(map_))


def load_heatmap(path: str | Path) -> SaliencyMap:
    arr = np.load(path, allow_pickle=False)
    if arr.ndim != 2:
        raise ValueError(f"heatmap file {path} has shape {arr.shape}, expected (H, W)")
    return SaliencyMap(arr.astype(np.float64))


def png_bytes(image: Image) -> bytes:
    """Encode an image as an 8-bit PNG (grayscale or RGB)."""
    arr = np.round(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    buf = _stdio.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def save_image(path: str | Path, image: Image) -> None:
    atomic_write_bytes(path, png_bytes(image))


def load_image(path: str | Path) -> Image:
    """Load a PNG (or any Pillow-readable file) as an Image in [0, 1].

    Grayscale files stay single-channel; anything else is converted to RGB.
    """
    with PILImage.open(path) as pil:
        if pil.mode != "L":
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image(arr)


def image_from_png_bytes(payload: bytes) -> Image:
    with PILImage.open(_stdio.BytesIO(payload)) as pil:
        if pil.mode != "L":
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image(arr)
