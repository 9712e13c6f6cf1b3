"""Classical depth-from-defocus baseline built on Wiener deconvolution.

Every candidate scale deconvolves the observed patch, re-blurs the
estimate, and is judged by how well the result explains the observation.
The re-blur residual alone always favors the smallest kernel (the delta
kernel reproduces any patch), so candidates are ranked by the Gaussian
evidence that the same regularized filter implies:

    n * log(sum |Y|^2 / (|H|^2 + nsr)) + sum log(|H|^2 + nsr)

summed over non-DC frequencies. The data term is the residual energy
weighted by the filter, the second term charges kernels for the
frequencies they suppress. The score is invariant to intensity scaling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_boundary, check_image, check_scales
from .depthmap import fuse_votes
from .exceptions import DivisionGuardError
from .optics import scale_code
from .simulator import PATCH_SIZE, extract_patches, kernel_spectrum

_SCORE_NSR_FLOOR = 1e-12


@dataclass
class WienerConfig:
    nsr: float = 1e-3
    scales: list = field(default_factory=lambda: list(range(1, 14, 2)))
    boundary: str = "reflect"
    texture_floor: float = 0.01

    def __post_init__(self):
        if not self.nsr >= 0:
            raise ValueError(f"nsr must be >= 0, got {self.nsr}")
        self.scales = sorted(check_scales(self.scales))
        check_boundary(self.boundary)

    def to_dict(self):
        return {
            "nsr": self.nsr,
            "scales": list(self.scales),
            "boundary": self.boundary,
            "texture_floor": self.texture_floor,
        }


@dataclass
class PatchEstimate:
    best_scale: int
    residuals: np.ndarray
    scores: np.ndarray
    low_confidence: bool


def _extend(x, boundary):
    if boundary == "cyclic":
        return x, (slice(None), slice(None))
    P, Q = x.shape
    pr, pc = (P // 2, P - P // 2), (Q // 2, Q - Q // 2)
    ext = np.pad(x, (pr, pc), mode="symmetric")
    return ext, (slice(pr[0], pr[0] + P), slice(pc[0], pc[0] + Q))


def wiener_deconvolve(patch, kernel, nsr, boundary="reflect"):
    """Apply ``conj(H) / (|H|^2 + nsr)``; the output is not clamped."""
    x = check_image(patch, name="patch")
    check_boundary(boundary)
    ext, crop = _extend(x, boundary)
    H = kernel_spectrum(kernel, ext.shape)
    A = H.real**2 + H.imag**2
    if nsr == 0 and np.any(A == 0.0):
        raise DivisionGuardError("kernel spectrum has an exact zero and nsr is 0")
    filt = np.conj(H) / (A + nsr)
    return np.fft.ifft2(filt * np.fft.fft2(ext)).real[crop]


class _ScaleBank:
    """Cached kernel spectra for one code on one grid shape."""

    def __init__(self, code, scales, shape):
        self.scales = list(scales)
        self.power = []
        for s in self.scales:
            H = kernel_spectrum(scale_code(code, s), shape)
            self.power.append(H.real**2 + H.imag**2)
        self.power = np.stack(self.power)
        mask = np.ones(shape, dtype=bool)
        mask[0, 0] = False
        self.mask = mask


def _estimate(observed, bank, cfg):
    ext, crop = _extend(observed, cfg.boundary)
    Y = np.fft.fft2(ext)
    Y2 = Y.real**2 + Y.imag**2
    A = bank.power
    nsr = cfg.nsr
    if nsr == 0 and np.any(A == 0.0):
        raise DivisionGuardError("kernel spectrum has an exact zero and nsr is 0")
    # residual of re-blurring the Wiener estimate: Y * nsr / (|H|^2 + nsr)
    resid = np.fft.ifft2(Y[None] * (nsr / (A + nsr))).real[(slice(None),) + crop]
    residuals = np.sqrt(np.sum(resid**2, axis=(1, 2)))
    reg = A[:, bank.mask] + max(nsr, _SCORE_NSR_FLOOR)
    n = reg.shape[1]
    q = np.sum(Y2[bank.mask][None] / reg, axis=1)
    with np.errstate(divide="ignore"):
        scores = n * np.log(q) + np.sum(np.log(reg), axis=1)
    best = int(np.argmin(scores))  # first minimum: ties go to the smaller scale
    low = bool(np.std(observed) < cfg.texture_floor)
    return PatchEstimate(bank.scales[best], residuals, scores, low)


def estimate_patch_scale(observed, code, cfg=None):
    """Pick the candidate scale that best explains ``observed``."""
    cfg = WienerConfig() if cfg is None else cfg
    y = check_image(observed, name="observed patch")
    shape = _extend(y, cfg.boundary)[0].shape
    return _estimate(y, _ScaleBank(code, cfg.scales, shape), cfg)


def estimate_depth_map_wiener(image, code, cfg=None, stride=8, threads=1,
                              patch_size=PATCH_SIZE, return_patches=False):
    """Blur-size map from stride-spaced patch estimates fused by majority vote.

    Low-confidence patches do not vote. With ``return_patches`` the
    per-patch ``(row, col, PatchEstimate)`` list is returned as well.
    """
    cfg = WienerConfig() if cfg is None else cfg
    X = check_image(image, min_side=patch_size)
    windows = extract_patches(X, stride, patch_size)
    shape = _extend(windows[0][0], cfg.boundary)[0].shape
    bank = _ScaleBank(code, cfg.scales, shape)

    def run(w):
        return _estimate(w[0], bank, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(run, windows))
    else:
        estimates = [run(w) for w in windows]
    sizes = fuse_votes(
        X.shape,
        [(r, c) for _, r, c in windows],
        [e.best_scale for e in estimates],
        cfg.scales,
        valid=[not e.low_confidence for e in estimates],
        patch_size=patch_size,
    )
    if return_patches:
        return sizes, [(r, c, e) for (_, r, c), e in zip(windows, estimates)]
    return sizes


def write_patch_csv(path, patches, scales):
    with open(path, "w") as fh:
        fh.write("row,col," + ",".join(f"s{s}" for s in scales) + ",best,confidence\n")
        for r, c, e in patches:
            vals = ",".join(format(float(v), ".17g") for v in e.residuals)
            conf = "low" if e.low_confidence else "high"
            fh.write(f"{r},{c},{vals},{e.best_scale},{conf}\n")
