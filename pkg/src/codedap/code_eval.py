"""Depth-discriminability of an aperture code under a Gaussian image prior.

An image blurred by the code at scale ``s`` is modeled as a zero-mean
Gaussian that is diagonal in the DFT basis, with per-frequency variance
``|C_s(v)|^2 * prior(v) + noise``. The KL divergence between two scales
measures how easily they can be told apart; the worst pair bounds the
depth confusion of the code.
"""

from dataclasses import dataclass, field

import numpy as np

from .optics import scale_code
from .simulator import PATCH_SIZE, kernel_spectrum


@dataclass
class PriorSpectrum:
    """Per-frequency signal variances on a P x P DFT grid plus a noise floor."""

    variances: np.ndarray = field(repr=False)
    noise_floor: float = 1e-4

    def __post_init__(self):
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.variances.ndim != 2:
            raise ValueError("prior variances must be a 2-D grid")
        if not np.all(self.variances > 0):
            raise ValueError("prior variances must be strictly positive")
        if not self.noise_floor > 0:
            raise ValueError("noise_floor must be positive")

    @property
    def shape(self):
        return self.variances.shape

    def scaled(self, factor):
        return PriorSpectrum(self.variances * factor, self.noise_floor * factor)


def gradient_prior(patch_size=PATCH_SIZE, amplitude=1.0, eps=1e-6, noise_std=0.01):
    """Stationary prior equivalent to i.i.d. Gaussian first-difference gradients.

    ``variance(v) = amplitude / (|gx(v)|^2 + |gy(v)|^2 + eps)``.
    """
    P = patch_size
    gx = np.zeros((P, P))
    gx[0, 0], gx[0, 1] = -1.0, 1.0
    gy = np.zeros((P, P))
    gy[0, 0], gy[1, 0] = -1.0, 1.0
    g2 = np.abs(np.fft.fft2(gx)) ** 2 + np.abs(np.fft.fft2(gy)) ** 2
    return PriorSpectrum(amplitude / (g2 + eps), noise_std**2)


def blurred_spectrum(code, s, prior):
    """Per-frequency variance of the blurred-image model at scale ``s``."""
    H = kernel_spectrum(scale_code(code, s), prior.shape)
    return (H.real**2 + H.imag**2) * prior.variances + prior.noise_floor


def _kl_from_variances(var1, var2):
    ratio = var1 / var2
    return 0.5 * float(np.sum(ratio - np.log(ratio) - 1.0))


def kl_between_scales(code, s1, s2, prior):
    """KL(scale s1 || scale s2) in nats."""
    if s1 == s2:
        return 0.0
    return _kl_from_variances(blurred_spectrum(code, s1, prior), blurred_spectrum(code, s2, prior))


@dataclass
class KLReport:
    scales: list
    kl: np.ndarray = field(repr=False)

    @property
    def off_diagonal(self):
        n = len(self.scales)
        return self.kl[~np.eye(n, dtype=bool)]

    @property
    def score_min(self):
        return float(self.off_diagonal.min())

    @property
    def score_mean(self):
        return float(self.off_diagonal.mean())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(str(s) for s in self.scales) + "\n")
            for row in self.kl:
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
            fh.write(f"score_min,{self.score_min:.17g}\n")
            fh.write(f"score_mean,{self.score_mean:.17g}\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        scales = [int(v) for v in lines[0].split(",")]
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1 : 1 + len(scales)]]
        return cls(scales, np.array(rows))


def kl_report(code, scales, prior=None):
    """Pairwise KL matrix over ``scales`` with min/mean off-diagonal aggregates."""
    scales = [int(s) for s in scales]
    if len(scales) < 2:
        raise ValueError("kl_report needs at least two scales")
    prior = gradient_prior() if prior is None else prior
    spectra = {s: blurred_spectrum(code, s, prior) for s in set(scales)}
    n = len(scales)
    kl = np.zeros((n, n))
    for i, a in enumerate(scales):
        for j, b in enumerate(scales):
            if a != b:
                kl[i, j] = _kl_from_variances(spectra[a], spectra[b])
    return KLReport(scales, kl)
