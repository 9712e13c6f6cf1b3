"""File formats: 8-bit grayscale images, blur-size maps and depth grids.

Images are stored as 8-bit PGM (P5) or PNG, so intensities are quantized
to multiples of 1/255 on write. Size maps and depth grids are plain text:
a ``height width`` line followed by one row of values per line.
"""

import os

import numpy as np
from PIL import Image


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path):
    """Read a grayscale PGM/PNG as floats in [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "I;16B"):
            im = im.convert("L")
        arr = np.asarray(im)
    scale = 255.0 if arr.dtype == np.uint8 else 65535.0
    return arr.astype(np.float64) / scale


def write_image(path, image):
    ext = os.path.splitext(str(path))[1].lower()
    fmt = {".pgm": "PPM", ".png": "PNG"}.get(ext)
    if fmt is None:
        raise ValueError(f"unsupported image extension {ext!r}; use .pgm or .png")
    Image.fromarray(to_uint8(image)).save(path, format=fmt)


def _write_grid(path, grid, fmt):
    grid = np.asarray(grid)
    with open(path, "w") as fh:
        fh.write(f"{grid.shape[0]} {grid.shape[1]}\n")
        for row in grid:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def _read_grid(path, dtype):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'height width'")
        h, w = int(header[0]), int(header[1])
        data = np.array(fh.read().split(), dtype=dtype)
    if data.size != h * w:
        raise ValueError(f"{path}: expected {h * w} values, found {data.size}")
    return data.reshape(h, w)


def write_size_map(path, sizes):
    _write_grid(path, np.asarray(sizes, dtype=np.int64), lambda v: str(int(v)))


def read_size_map(path):
    sizes = _read_grid(path, np.int64)
    if np.any(sizes < 1) or np.any(sizes % 2 == 0):
        raise ValueError(f"{path}: blur sizes must be positive odd integers")
    return sizes


def write_depth_map(path, depth):
    _write_grid(path, np.asarray(depth, dtype=np.float64), lambda v: format(float(v), ".17g"))


def read_depth_map(path):
    return _read_grid(path, np.float64)


def size_map_to_image(sizes, max_size):
    """Scale sizes ``1..k`` to [0, 1] for an 8-bit preview."""
    sizes = np.asarray(sizes, dtype=np.float64)
    return (sizes - 1.0) / max(max_size - 1, 1)
