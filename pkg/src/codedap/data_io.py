"""Scenes, splits, synthetic corpora and the training patch stream."""

import glob
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imageio import read_depth_map, read_image, write_depth_map, write_image
from .optics import blur_size_to_depth, depth_to_blur_size
from .simulator import PATCH_SIZE

LAYOUTS = ("planes", "slant", "steps")
TEXTURES = ("noise", "stripes", "checker", "flat")


@dataclass
class Scene:
    """All-focus image plus either metric depth or a blur-size map."""

    image: np.ndarray = field(repr=False)
    depth: np.ndarray = field(default=None, repr=False)
    sizes: np.ndarray = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if (self.depth is None) == (self.sizes is None):
            raise ValueError("a scene needs exactly one of depth or sizes")
        other = self.depth if self.depth is not None else self.sizes
        if np.shape(other) != self.image.shape:
            raise ValueError(f"image {self.image.shape} and depth/sizes {np.shape(other)} differ in shape")

    def size_map(self, cam):
        return np.asarray(self.sizes) if self.sizes is not None else discretize_depth(self.depth, cam)


def discretize_depth(depth, cam):
    """Per-pixel blur sizes; invalid depths raise with the first bad pixel location."""
    return np.asarray(depth_to_blur_size(np.asarray(depth, dtype=np.float64), cam))


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3:
            raise ValueError("fractions must be (train, val, test)")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ValueError("each fraction must lie in [0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


def split(scenes, spec=SplitSpec()):
    """Seeded shuffle, then contiguous train/val/test blocks at rounded boundaries."""
    n = len(scenes)
    order = np.random.default_rng(spec.seed).permutation(n)
    a = int(round(spec.fractions[0] * n))
    b = int(round((spec.fractions[0] + spec.fractions[1]) * n))
    b = max(a, min(b, n))
    parts = order[:a], order[a:b], order[b:]
    return tuple([scenes[i] for i in p] for p in parts)


def _texture(kind, shape, rng):
    H, W = shape
    if kind == "noise":
        tex = rng.random(shape)
    elif kind == "stripes":
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(3.0, 9.0)
        yy, xx = np.mgrid[0:H, 0:W]
        phase = rng.uniform(0, 2 * np.pi)
        tex = 0.5 + 0.4 * np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
    elif kind == "checker":
        cell = int(rng.integers(2, 7))
        oy, ox = rng.integers(0, cell, size=2)
        yy, xx = np.mgrid[0:H, 0:W]
        lo, hi = sorted(rng.uniform(0.1, 0.9, size=2))
        tex = np.where(((yy + oy) // cell + (xx + ox) // cell) % 2 == 0, lo, hi)
    elif kind == "flat":
        tex = np.full(shape, rng.uniform(0.2, 0.8))
    else:
        raise ValueError(f"unknown texture {kind!r}; expected one of {TEXTURES}")
    # quantize to 8-bit levels so scenes survive PGM round trips exactly
    return np.round(np.clip(tex, 0.0, 1.0) * 255.0) / 255.0


def make_synthetic_scene(layout="planes", depths=(1.0,), texture="noise", seed=0,
                         band=48, extent=64, name=""):
    """Piecewise-constant depth scene with a procedural texture per region
    (``flat`` is one gray level over the whole scene).

    ``planes`` places one vertical band of width ``band`` per depth,
    ``steps`` stacks horizontal bands, and ``slant`` ramps depth linearly
    across columns between the smallest and largest depth.
    """
    depths = [float(d) for d in depths]
    if not depths:
        raise ValueError("at least one depth is required")
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    rng = np.random.default_rng(seed)
    n = len(depths)
    if layout == "planes":
        shape = (extent, band * n)
    elif layout == "steps":
        shape = (band * n, extent)
    else:
        shape = (extent, band * n)
    depth = np.empty(shape)
    image = np.empty(shape)
    if texture == "flat":
        # one gray level for the whole scene, so region borders add no edges
        image[:] = _texture(texture, shape, rng)
    if layout == "slant":
        lo, hi = min(depths), max(depths)
        ramp = np.linspace(lo, hi, shape[1]) if n > 1 else np.full(shape[1], lo)
        depth[:] = ramp[None, :]
        if texture != "flat":
            image[:] = _texture(texture, shape, rng)
    else:
        for i, d in enumerate(depths):
            sl = np.s_[:, i * band : (i + 1) * band] if layout == "planes" else np.s_[i * band : (i + 1) * band, :]
            depth[sl] = d
            if texture != "flat":
                image[sl] = _texture(texture, depth[sl].shape, rng)
    return Scene(image=image, depth=depth, name=name)


def make_synthetic_corpus(n_scenes, cam, seed=0, planes=(3, 5), textures=("noise", "stripes", "checker"),
                          layouts=("planes", "steps"), band=48):
    """Scenes whose planes sit at class-center depths of randomly chosen scales."""
    rng = np.random.default_rng(seed)
    scales = cam.scales
    class_depth = {s: blur_size_to_depth(s, cam, "far") for s in scales}
    scenes = []
    for i in range(n_scenes):
        n = int(rng.integers(planes[0], planes[1] + 1))
        chosen = rng.choice(scales, size=min(n, len(scales)), replace=False)
        scenes.append(make_synthetic_scene(
            layout=str(layouts[int(rng.integers(len(layouts)))]),
            depths=[class_depth[int(s)] for s in chosen],
            texture=str(textures[int(rng.integers(len(textures)))]),
            seed=int(rng.integers(2**31)),
            band=band,
            name=f"{i:03d}",
        ))
    return scenes


def constant_windows(sizes, patch_size=PATCH_SIZE):
    """Anchors ``(row, col)`` whose window has a single blur size."""
    S = np.asarray(sizes)
    if min(S.shape) < patch_size:
        return np.empty((0, 2), dtype=np.int64)
    win = sliding_window_view(S, (patch_size, patch_size))
    const = win.min(axis=(2, 3)) == win.max(axis=(2, 3))
    return np.argwhere(const)


class PatchLabelStream:
    """Endless, seeded stream of ``(all-focus patch, blur size)`` pairs.

    A scene is drawn uniformly, then an anchor uniformly among its
    constant-size windows. Scenes without such a window are skipped.
    """

    def __init__(self, scenes, cam, seed=0, patch_size=PATCH_SIZE):
        self.patch_size = patch_size
        self._images, self._sizes, self._anchors = [], [], []
        for i, sc in enumerate(scenes):
            S = sc.size_map(cam)
            anchors = constant_windows(S, patch_size)
            if len(anchors) == 0:
                warnings.warn(f"scene {sc.name or i} has no constant-size {patch_size}x{patch_size} window; skipped")
                continue
            self._images.append(sc.image)
            self._sizes.append(S)
            self._anchors.append(anchors)
        if not self._images:
            raise ValueError("no scene provides a constant-size window")
        self.rng = np.random.default_rng(seed)

    def __iter__(self):
        return self

    def __next__(self):
        patches, labels = self.draw(1)
        return patches[0], int(labels[0])

    def draw(self, n):
        P = self.patch_size
        patches = np.empty((n, P, P))
        labels = np.empty(n, dtype=np.int64)
        for k in range(n):
            i = int(self.rng.integers(len(self._images)))
            r, c = self._anchors[i][int(self.rng.integers(len(self._anchors[i])))]
            patches[k] = self._images[i][r : r + P, c : c + P]
            labels[k] = self._sizes[i][r, c]
        return patches, labels

    def get_state(self):
        return self.rng.bit_generator.state

    def set_state(self, state):
        self.rng.bit_generator.state = state


def patch_label_stream(scenes, cam, seed=0, patch_size=PATCH_SIZE):
    return PatchLabelStream(scenes, cam, seed, patch_size)


def save_scene_dir(scenes, directory):
    os.makedirs(directory, exist_ok=True)
    ids = []
    for i, sc in enumerate(scenes):
        sid = sc.name or f"{i:03d}"
        write_image(os.path.join(directory, f"{sid}_image.pgm"), sc.image)
        if sc.depth is None:
            raise ValueError("scene directories store metric depth; this scene has only sizes")
        write_depth_map(os.path.join(directory, f"{sid}_depth.txt"), sc.depth)
        ids.append(sid)
    return ids


def load_scene_dir(directory, ids=None):
    if ids is None:
        ids = sorted(os.path.basename(p)[: -len("_image.pgm")]
                     for p in glob.glob(os.path.join(directory, "*_image.pgm")))
    scenes = []
    for sid in ids:
        image = read_image(os.path.join(directory, f"{sid}_image.pgm"))
        depth = read_depth_map(os.path.join(directory, f"{sid}_depth.txt"))
        scenes.append(Scene(image=image, depth=depth, name=sid))
    return scenes


def write_manifest(path, ids):
    with open(path, "w") as fh:
        fh.writelines(f"{i}\n" for i in ids)


def read_manifest(path):
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]
