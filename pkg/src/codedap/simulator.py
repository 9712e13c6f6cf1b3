"""Coded-aperture image formation and spectral patch features."""

import numpy as np

from ._validation import check_boundary, check_image
from .optics import scale_code

PATCH_SIZE = 32


def pad_kernel(kernel, shape):
    """Embed ``kernel`` in a zero grid of ``shape`` with its center at the origin.

    The result is the cyclic representation used for DFT products, so
    ``fft2(pad_kernel(k, x.shape)) * fft2(x)`` is the spectrum of the
    cyclic convolution of ``x`` with ``k``.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    s = kernel.shape[0]
    if s > shape[0] or s > shape[1]:
        raise ValueError(f"kernel of size {s} does not fit in grid {shape}")
    c = s // 2
    out = np.zeros(shape)
    rows = (np.arange(s) - c) % shape[0]
    cols = (np.arange(s) - c) % shape[1]
    out[np.ix_(rows, cols)] = kernel
    return out


def kernel_spectrum(kernel, shape):
    return np.fft.fft2(pad_kernel(kernel, shape))


def convolve_patch(patch, kernel, boundary="reflect"):
    """Same-size 2-D convolution of ``patch`` with a centered odd kernel.

    ``reflect`` extends the patch by half-sample mirroring (edge pixels are
    repeated); ``cyclic`` wraps around so the DFT product identity is exact.
    """
    x = check_image(patch, name="patch")
    k = np.asarray(kernel, dtype=np.float64)
    check_boundary(boundary)
    s = k.shape[0]
    if k.ndim != 2 or k.shape[1] != s or s % 2 == 0:
        raise ValueError(f"kernel must be square with odd side, got {k.shape}")
    if s > min(x.shape):
        raise ValueError(f"kernel of size {s} is larger than the {x.shape} patch")
    c = s // 2
    mode = "symmetric" if boundary == "reflect" else "wrap"
    xp = np.pad(x, c, mode=mode)
    H, W = x.shape
    out = np.zeros_like(x)
    # y[i, j] = sum_ab k[a, b] x[i - a + c, j - b + c]
    for a in range(s):
        for b in range(s):
            w = k[a, b]
            if w != 0.0:
                out += w * xp[2 * c - a : 2 * c - a + H, 2 * c - b : 2 * c - b + W]
    return out


def tile_anchors(length, patch_size=PATCH_SIZE):
    """Non-overlapping tile origins along one axis; the last tile is edge-anchored."""
    starts = list(range(0, length - patch_size + 1, patch_size))
    if starts[-1] + patch_size < length:
        starts.append(length - patch_size)
    return starts


def simulate_coded_image(image, sizes, code, cam=None, noise_sigma=0.0, seed=None,
                         boundary="reflect", patch_size=PATCH_SIZE):
    """Blur each tile of ``image`` with the code scaled to the size at the tile center.

    Noise, when requested, is drawn from an independent stream per tile
    (``seed`` plus tile index), then the result is clamped to [0, 1].
    """
    X = check_image(image, min_side=patch_size)
    S = np.asarray(sizes)
    if S.shape != X.shape:
        raise ValueError(f"size map shape {S.shape} does not match image shape {X.shape}")
    max_size = cam.max_kernel_size if cam is not None else None
    kernels = {}
    out = np.empty_like(X)
    half = patch_size // 2
    index = 0
    for r in tile_anchors(X.shape[0], patch_size):
        for c in tile_anchors(X.shape[1], patch_size):
            s = int(S[r + half, c + half])
            if s not in kernels:
                kernels[s] = scale_code(code, s, max_size)
            tile = convolve_patch(X[r : r + patch_size, c : c + patch_size], kernels[s], boundary)
            if noise_sigma > 0:
                rng = np.random.default_rng([0 if seed is None else seed, index])
                tile = tile + rng.normal(0.0, noise_sigma, tile.shape)
            out[r : r + patch_size, c : c + patch_size] = tile
            index += 1
    return np.clip(out, 0.0, 1.0)


def extract_patches(image, stride=8, patch_size=PATCH_SIZE):
    """All ``patch_size`` windows at multiples of ``stride``, row-major.

    Returns a list of ``(patch, row, col)`` tuples; empty if the image is
    smaller than one patch.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    X = np.asarray(image, dtype=np.float64)
    H, W = X.shape
    return [
        (X[r : r + patch_size, c : c + patch_size], r, c)
        for r in range(0, H - patch_size + 1, stride)
        for c in range(0, W - patch_size + 1, stride)
    ]


def spectral_feature(patch, magnitude="log", eps=0.0):
    """Zero-frequency-centered ``log(1 + |DFT|)`` of a patch (or a stack of patches).

    ``magnitude="raw"`` returns ``|DFT|`` instead. ``eps`` smooths the
    modulus as ``sqrt(|z|^2 + eps)`` so it is differentiable at zero.
    """
    x = np.asarray(patch)
    F = np.fft.fft2(x, axes=(-2, -1))
    m = np.sqrt(F.real**2 + F.imag**2 + eps) if eps else np.abs(F)
    if magnitude == "log":
        m = np.log1p(m)
    elif magnitude != "raw":
        raise ValueError(f"magnitude must be 'log' or 'raw', got {magnitude!r}")
    return np.fft.fftshift(m, axes=(-2, -1))
