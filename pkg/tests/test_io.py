"""NPY heatmap format, PNG round trips, atomic writes."""

import numpy as np
import pytest

from cwox.core import Image, SaliencyMap
from cwox.io import (
    atomic_write_text,
    image_from_png_bytes,
    load_heatmap,
    load_image,
    png_bytes,
    save_heatmap,
    save_image,
)


def test_heatmap_is_npy_v1_float32(tmp_path):
    path = tmp_path / "map.npy"
    save_heatmap(path, SaliencyMap(np.arange(6, dtype=np.float64).reshape(2, 3)))
    raw = path.read_bytes()
    assert raw[:6] == b"\x93NUMPY"
    assert raw[6:8] == b"\x01\x00"  # format version 1.0
    arr = np.load(path)
    assert arr.dtype == np.float32
    assert arr.shape == (2, 3)


def test_heatmap_round_trip(tmp_path):
    data = np.array([[0.125, -2.0], [7.5, 0.0]])  # exactly representable in float32
    path = tmp_path / "map.npy"
    save_heatmap(path, SaliencyMap(data))
    assert np.array_equal(load_heatmap(path).data, data)


def test_heatmap_rejects_wrong_rank(tmp_path):
    path = tmp_path / "bad.npy"
    np.save(path, np.zeros((2, 2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        load_heatmap(path)


@pytest.mark.parametrize("channels", [1, 3])
def test_png_round_trip_is_exact(tmp_path, channels):
    rng = np.random.default_rng(5)
    arr = rng.integers(0, 256, size=(6, 7, channels)).astype(np.float64) / 255.0
    path = tmp_path / "img.png"
    save_image(path, Image(arr))
    back = load_image(path)
    assert back.channels == channels
    assert np.array_equal(back.data, arr)


def test_image_from_png_bytes_matches_file(tmp_path):
    img = Image(np.linspace(0, 1, 12).reshape(3, 4, 1))
    payload = png_bytes(img)
    assert np.array_equal(image_from_png_bytes(payload).data,
                          np.round(img.data * 255) / 255)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "hello")
    assert target.read_text() == "hello"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
