"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np

from .exceptions import DegenerateCodeError, InvalidConfigurationError


def check_odd_size(s, max_size=None, name="kernel size"):
    if isinstance(s, (bool, np.bool_)) or not isinstance(s, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {s!r}")
    s = int(s)
    if s < 1 or s % 2 == 0:
        raise ValueError(f"{name} must be a positive odd integer, got {s}")
    if max_size is not None and s > max_size:
        raise ValueError(f"{name} {s} exceeds the maximum {max_size}")
    return s


def check_scales(scales, max_size=None):
    scales = [check_odd_size(s, max_size) for s in scales]
    if not scales:
        raise ValueError("at least one candidate scale is required")
    return scales


def check_code_array(values, allow_degenerate=False):
    """Validate an aperture transmission grid and return it as float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"aperture code must be a square grid, got shape {arr.shape}")
    if arr.shape[0] % 2 == 0:
        raise ValueError(f"aperture code side must be odd, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("aperture code contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("aperture code values must lie in [0, 1]")
    if not allow_degenerate and not np.any(arr > 0.0):
        raise DegenerateCodeError("aperture code is fully opaque")
    return arr


def check_image(image, min_side=None, name="image"):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D grayscale array, got shape {arr.shape}")
    if min_side is not None and min(arr.shape) < min_side:
        raise ValueError(f"{name} sides must be >= {min_side}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_patch_stack(X, patch_size=None):
    """Coerce ``X`` to an ``(n, P, P)`` float64 stack of square patches."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError(f"expected patches of shape (n, P, P), got {X.shape}")
    if patch_size is not None and X.shape[1] != patch_size:
        raise ValueError(f"expected {patch_size}x{patch_size} patches, got {X.shape[1:]}")
    return X


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise InvalidConfigurationError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_boundary(boundary):
    if boundary not in ("reflect", "cyclic"):
        raise ValueError(f"boundary must be 'reflect' or 'cyclic', got {boundary!r}")
    return boundary
