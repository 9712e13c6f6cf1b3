"""Differentiable chain from the real-valued code to the classification loss.

W -> sigmoid(alpha W) -> box resample to each scale -> unit-sum normalize
-> cyclic blur of the all-focus patch (a product in the DFT domain)
-> log(1 + sqrt(|.|^2 + eps)) spectrum -> network -> mean cross-entropy.

The code-side arithmetic always runs in float64; the network runs in the
dtype of its parameters.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateCodeError, DegenerateKernelError, TrainingStepError
from ..optics import resample_matrix
from ..simulator import pad_kernel
from . import network


@dataclass(frozen=True)
class AnnealSchedule:
    """Sigmoid steepness ``alpha_t = base + t / slope_inv``."""

    base: float = 2.5
    slope_inv: float = 3000.0

    def __post_init__(self):
        if not self.base > 0 or not self.slope_inv > 0:
            raise ValueError("anneal base and slope_inv must be positive")

    def alpha(self, t):
        return self.base + t / self.slope_inv


@dataclass(frozen=True)
class CodeConfig:
    """Code-side settings of the chain."""

    scales: tuple = (1, 3, 5, 7, 9, 11, 13)
    patch_size: int = 32
    eps: float = 1e-12
    magnitude: str = "log"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if self.magnitude not in ("log", "raw"):
            raise ValueError(f"magnitude must be 'log' or 'raw', got {self.magnitude!r}")

    def class_index(self, sizes):
        lookup = {s: i for i, s in enumerate(self.scales)}
        try:
            return np.array([lookup[int(s)] for s in np.ravel(sizes)], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"blur size {exc.args[0]} is not in the class set {self.scales}") from None


def soft_binarize(W, alpha):
    """Elementwise ``1 / (1 + exp(-alpha W))``, evaluated without overflow."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    z = alpha * np.asarray(W, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def hard_binarize(C, threshold=0.5):
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    B = (np.asarray(C, dtype=np.float64) >= threshold).astype(np.float64)
    if not B.any():
        raise DegenerateCodeError("thresholding produced an all-zero code")
    return B


def kernel_power_spectra(C, scales, patch_size):
    """``|DFT|^2`` of each padded unit-sum kernel, plus what the backward pass needs."""
    total = C.sum()
    if not total > 0:
        raise DegenerateKernelError("code has zero mass; kernels cannot be normalized")
    out = {}
    for s in scales:
        R = resample_matrix(C.shape[0], s)
        U = R @ C @ R.T
        S = U.sum()
        K = U / S
        H = np.fft.fft2(pad_kernel(K, (patch_size, patch_size)))
        out[s] = (H.real**2 + H.imag**2, H, U, S, R)
    return out


def code_spectra_features(patch_spectra, sizes, C, cfg):
    """Features of the patches blurred by ``C`` at their sizes, plus a backward cache.

    ``patch_spectra`` is ``fft2`` of the all-focus patches (batch, P, P).
    """
    present = sorted(set(int(s) for s in sizes))
    spectra = kernel_power_spectra(C, present, cfg.patch_size)
    X2 = patch_spectra.real**2 + patch_spectra.imag**2
    sizes = np.asarray(sizes)
    A = np.empty_like(X2)
    for s in present:
        A[sizes == s] = spectra[s][0]
    m = np.sqrt(A * X2 + cfg.eps)
    F = np.log1p(m) if cfg.magnitude == "log" else m
    return np.fft.fftshift(F, axes=(-2, -1)), (spectra, X2, m, sizes)


def _code_backward(dF, cache, C, cfg):
    spectra, X2, m, sizes = cache
    dF = np.fft.ifftshift(dF, axes=(-2, -1))
    dm = dF / (1.0 + m) if cfg.magnitude == "log" else dF
    dA = dm * X2 / (2.0 * m)
    P = cfg.patch_size
    dC = np.zeros_like(C)
    for s, (_, H, U, S, R) in spectra.items():
        G = dA[sizes == s].sum(axis=0)
        # d|H(v)|^2 / dk(x) = 2 Re(conj(H(v)) e^{-2 pi i v.x / P})
        dk_pad = 2.0 * np.fft.fft2(G * np.conj(H)).real
        c = s // 2
        idx = (np.arange(s) - c) % P
        dK = dk_pad[np.ix_(idx, idx)]
        dU = dK / S - np.sum(dK * U) / S**2
        dC += R.T @ dU @ R
    return dC


def loss_and_gradients(patches, sizes, W, alpha, params, net_cfg, code_cfg, patch_spectra=None,
                       code=None):
    """Mean cross-entropy and its gradients with respect to ``W`` and every network parameter.

    ``patches`` are all-focus (unblurred) patches; the blur with the current
    code is part of the differentiated chain. Passing a fixed ``code``
    bypasses ``W`` and returns ``None`` for its gradient.
    """
    C = soft_binarize(W, alpha) if code is None else np.asarray(code, dtype=np.float64)
    if patch_spectra is None:
        patch_spectra = np.fft.fft2(np.asarray(patches, dtype=np.float64), axes=(-2, -1))
    y = code_cfg.class_index(sizes)
    try:
        F, cache = code_spectra_features(patch_spectra, sizes, C, code_cfg)
    except DegenerateKernelError as exc:
        raise TrainingStepError(str(exc), state={"W": np.array(W), "alpha": alpha}) from exc
    logp, net_cache = network.forward(F, params, net_cfg, keep_cache=True)
    B = len(y)
    loss = -float(np.mean(logp[np.arange(B), y]))
    dlogp = np.zeros_like(logp)
    dlogp[np.arange(B), y] = -1.0 / B
    grads, dF = network.backward(dlogp, logp, net_cache, params, net_cfg, need_input_grad=code is None)
    if code is not None:
        return loss, None, grads
    dC = _code_backward(dF.astype(np.float64), cache, C, code_cfg)
    dW = dC * alpha * C * (1.0 - C)
    return loss, dW, grads


def coded_features(patches, sizes, C, code_cfg):
    """Features of cyclically blurred patches for a fixed (possibly binary) code."""
    spectra = np.fft.fft2(np.asarray(patches, dtype=np.float64), axes=(-2, -1))
    return code_spectra_features(spectra, sizes, np.asarray(C, dtype=np.float64), code_cfg)[0]
