"""Thin-lens camera model and aperture-code rescaling.

Depth is turned into a discrete, odd blur-kernel size by computing the
defocus blur diameter on the sensor and dividing its radius by the pixel
pitch. The aperture pattern is rescaled to that size by area-weighted
resampling, which is linear in the code entries.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import check_code_array, check_odd_size, check_positive
from .exceptions import DegenerateKernelError, InvalidConfigurationError, InvalidDepthError


@dataclass(frozen=True)
class CameraConfig:
    """Thin-lens parameters.

    Units follow the usual lab conventions: focal length in millimeters,
    pixel pitch in micrometers, focus distance in meters.
    """

    focal_length: float = 25.0
    pixel_pitch: float = 8.0
    f_number: float = 1.4
    focus_distance: float = 1.0
    max_kernel_size: int = 13

    def __post_init__(self):
        check_positive(self.focal_length, "focal_length")
        check_positive(self.pixel_pitch, "pixel_pitch")
        check_positive(self.f_number, "f_number")
        check_positive(self.focus_distance, "focus_distance")
        if self.focus_distance * 1e3 <= self.focal_length:
            raise InvalidConfigurationError(
                "focus_distance must exceed the focal length "
                f"({self.focus_distance} m <= {self.focal_length} mm)"
            )
        try:
            check_odd_size(self.max_kernel_size, name="max_kernel_size")
        except ValueError as exc:
            raise InvalidConfigurationError(str(exc)) from None

    @property
    def scales(self):
        """All representable kernel sizes ``1, 3, ..., k``."""
        return list(range(1, self.max_kernel_size + 1, 2))

    @property
    def n_classes(self):
        return (self.max_kernel_size + 1) // 2

    @property
    def aperture_diameter_mm(self):
        return self.focal_length / self.f_number

    def to_dict(self):
        return {
            "focal_length": self.focal_length,
            "pixel_pitch": self.pixel_pitch,
            "f_number": self.f_number,
            "focus_distance": self.focus_distance,
            "max_kernel_size": self.max_kernel_size,
        }


@dataclass
class ApertureCode:
    """An N x N aperture transmission pattern with values in [0, 1]."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = check_code_array(self.values)

    @property
    def side(self):
        return self.values.shape[0]

    @property
    def is_binary(self):
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _code_values(code):
    if isinstance(code, ApertureCode):
        return code.values
    return check_code_array(code)


def blur_radius_um(depth, cam):
    """Defocus blur radius on the sensor in micrometers (vectorized over ``depth``)."""
    d = np.asarray(depth, dtype=np.float64) * 1e3  # mm
    f = cam.focal_length
    d_f = cam.focus_distance * 1e3
    v_f = f * d_f / (d_f - f)
    v = f * d / (d - f)
    c = cam.aperture_diameter_mm * np.abs(v_f - v) / v
    return c / 2.0 * 1e3


def depth_to_blur_size(depth, cam):
    """Map metric depth (meters) to an odd kernel size in ``[1, k]``.

    Accepts a scalar or an array; scalars return a Python int.
    """
    d = np.asarray(depth, dtype=np.float64)
    bad = ~np.isfinite(d) | (d * 1e3 <= cam.focal_length)
    if np.any(bad):
        loc = tuple(int(i) for i in np.argwhere(bad)[0]) if d.ndim else None
        raise InvalidDepthError(
            f"depth must exceed the focal length ({cam.focal_length} mm)"
            + (f"; first offending pixel at {loc}" if loc is not None else f", got {float(d)} m"),
            location=loc,
        )
    ratio = blur_radius_um(d, cam) / cam.pixel_pitch
    # ratio >= 0, so floor(x + 0.5) rounds ties away from zero
    s = 2 * np.floor(ratio + 0.5).astype(np.int64) + 1
    s = np.clip(s, 1, cam.max_kernel_size)
    return int(s) if s.ndim == 0 else s


def blur_size_to_depth(s, cam, side="far"):
    """Depth (meters) whose blur radius sits at the center of class ``s``.

    Inverse of :func:`depth_to_blur_size` used to lay out synthetic scenes.
    ``side`` selects the solution behind (``"far"``) or in front of
    (``"near"``) the focal plane.
    """
    s = check_odd_size(s, cam.max_kernel_size)
    c = (s - 1) * cam.pixel_pitch * 1e-3  # blur diameter, mm
    A = cam.aperture_diameter_mm
    f = cam.focal_length
    d_f = cam.focus_distance * 1e3
    v_f = f * d_f / (d_f - f)
    if side == "far":
        v = v_f / (1.0 + c / A)
        if v <= f:
            raise InvalidConfigurationError(f"size {s} is unreachable behind the focal plane")
    elif side == "near":
        if c >= A:
            raise InvalidConfigurationError(f"size {s} is unreachable in front of the focal plane")
        v = v_f / (1.0 - c / A)
    else:
        raise ValueError(f"side must be 'far' or 'near', got {side!r}")
    return float(f * v / (v - f) * 1e-3)


@lru_cache(maxsize=256)
def _resample_matrix_cached(n, s):
    step = n / s
    lo = np.arange(s)[:, None] * step
    hi = lo + step
    j = np.arange(n)[None, :]
    M = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    M.setflags(write=False)
    return M


def resample_matrix(n, s):
    """``(s, n)`` box-overlap matrix; each column sums to one."""
    return _resample_matrix_cached(int(n), int(s))


def resample_code(code, s):
    """Area-weighted resampling of the code grid to ``s x s`` (no normalization)."""
    C = np.asarray(code.values if isinstance(code, ApertureCode) else code, dtype=np.float64)
    R = resample_matrix(C.shape[0], s)
    return R @ C @ R.T


def scale_code(code, s, max_size=None):
    """Blur kernel of size ``s``: the resampled code normalized to unit sum."""
    C = _code_values(code)
    s = check_odd_size(s, max_size)
    U = resample_code(C, s)
    total = U.sum()
    if not total > 0.0:
        raise DegenerateKernelError(f"scaled kernel of size {s} has zero mass")
    return U / total


def open_aperture(n=11):
    return np.ones((n, n))


def random_symmetric_code(n=11, seed=0, fill=0.5):
    """Seeded random binary code, mirror-symmetric about the vertical axis."""
    rng = np.random.default_rng(seed)
    half = n // 2 + 1
    while True:
        left = (rng.random((n, half)) < fill).astype(np.float64)
        code = np.concatenate([left, left[:, : n - half][:, ::-1]], axis=1)
        if code.any():
            return code


def load_code(path):
    """Read the plain-text code format: ``N`` then N rows of N numbers."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or len(lines[0]) != 1:
        raise ValueError(f"{path}: first line must hold the code side N")
    n = int(lines[0][0])
    rows = lines[1:]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} values")
    return ApertureCode(np.array([[float(v) for v in r] for r in rows]))


def save_code(code, path):
    C = _code_values(code)
    with open(path, "w") as fh:
        fh.write(f"{C.shape[0]}\n")
        for row in C:
            fh.write(" ".join(format(float(v), ".17g") for v in row) + "\n")
