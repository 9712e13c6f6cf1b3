"""Small conv + fully-connected blur-size classifier with explicit backprop.

Activations are channels-last ``(batch, height, width, channels)``. Each
conv block is a 3x3 "same" cross-correlation, a rectifier and 2x2 mean
pooling; the head is a stack of affine layers with rectifiers in between
and a log-softmax on top.
"""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkConfig:
    n_classes: int = 7
    patch_size: int = 32
    conv_channels: tuple = (16, 32, 32)
    fc_widths: tuple = (512, 256, 128, 64)

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.patch_size % (2 ** len(self.conv_channels)):
            raise ValueError(
                f"patch size {self.patch_size} is not divisible by the pooling factor "
                f"{2 ** len(self.conv_channels)}"
            )

    @property
    def flat_size(self):
        side = self.patch_size // 2 ** len(self.conv_channels)
        return side * side * self.conv_channels[-1]

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["fc_widths"] = list(self.fc_widths)
        return d


def param_shapes(cfg):
    shapes = {}
    c_in = 1
    for i, c in enumerate(cfg.conv_channels):
        shapes[f"conv{i}_w"] = (3, 3, c_in, c)
        shapes[f"conv{i}_b"] = (c,)
        c_in = c
    widths = (cfg.flat_size,) + cfg.fc_widths + (cfg.n_classes,)
    for i in range(len(widths) - 1):
        shapes[f"fc{i}_w"] = (widths[i], widths[i + 1])
        shapes[f"fc{i}_b"] = (widths[i + 1],)
    return shapes


def init_params(cfg, rng, dtype=np.float64):
    """He-normal weights and zero biases."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


def check_params(params, cfg):
    for name, shape in param_shapes(cfg).items():
        if name not in params:
            raise ValueError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


def _im2col(x):
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((B, H, W, 3, 3, C), dtype=x.dtype)
    for a in range(3):
        for b in range(3):
            cols[:, :, :, a, b, :] = xp[:, a : a + H, b : b + W, :]
    return cols.reshape(B * H * W, 9 * C)


def _col2im(dcols, shape):
    B, H, W, C = shape
    dc = dcols.reshape(B, H, W, 3, 3, C)
    dxp = np.zeros((B, H + 2, W + 2, C), dtype=dcols.dtype)
    for a in range(3):
        for b in range(3):
            dxp[:, a : a + H, b : b + W, :] += dc[:, :, :, a, b, :]
    return dxp[:, 1:-1, 1:-1, :]


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))


def forward(features, params, cfg, keep_cache=False):
    """Class log-probabilities for a ``(batch, P, P)`` stack of features."""
    x = np.asarray(features)
    if x.ndim != 3 or x.shape[1:] != (cfg.patch_size, cfg.patch_size):
        raise ValueError(f"expected features of shape (batch, {cfg.patch_size}, {cfg.patch_size}), got {x.shape}")
    check_params(params, cfg)
    dtype = params["conv0_w"].dtype
    h = x.astype(dtype, copy=False)[..., None]
    cache = []
    for i in range(len(cfg.conv_channels)):
        w, b = params[f"conv{i}_w"], params[f"conv{i}_b"]
        B, H, W, C = h.shape
        cols = _im2col(h)
        z = (cols @ w.reshape(9 * C, -1) + b).reshape(B, H, W, -1)
        a = np.maximum(z, 0)
        pooled = a.reshape(B, H // 2, 2, W // 2, 2, -1).mean(axis=(2, 4))
        if keep_cache:
            cache.append(("conv", h.shape, cols, z))
        h = pooled
    h = h.reshape(h.shape[0], -1)
    n_fc = len(cfg.fc_widths) + 1
    for i in range(n_fc):
        w, b = params[f"fc{i}_w"], params[f"fc{i}_b"]
        z = h @ w + b
        if keep_cache:
            cache.append(("fc", h, z))
        h = np.maximum(z, 0) if i < n_fc - 1 else z
    logp = log_softmax(h)
    return (logp, cache) if keep_cache else logp


def backward(dlogp, logp, cache, params, cfg, need_input_grad=True):
    """Gradients of a scalar loss given ``dloss/dlogp``.

    Returns ``(grads, dfeatures)``; ``dfeatures`` is ``None`` unless requested.
    """
    grads = {}
    p = np.exp(logp)
    dz = dlogp - p * dlogp.sum(axis=1, keepdims=True)
    n_conv = len(cfg.conv_channels)
    n_fc = len(cfg.fc_widths) + 1
    for i in reversed(range(n_fc)):
        _, h_in, z = cache[n_conv + i]
        if i < n_fc - 1:
            dz = dz * (z > 0)
        grads[f"fc{i}_w"] = h_in.T @ dz
        grads[f"fc{i}_b"] = dz.sum(axis=0)
        dz = dz @ params[f"fc{i}_w"].T
    side = cfg.patch_size // 2**n_conv
    dh = dz.reshape(-1, side, side, cfg.conv_channels[-1])
    for i in reversed(range(n_conv)):
        _, in_shape, cols, z = cache[i]
        B, H, W, _ = z.shape
        # mean-pool backward spreads each gradient over its 2x2 block
        da = np.repeat(np.repeat(dh, 2, axis=1), 2, axis=2) * 0.25
        dz = (da * (z > 0)).reshape(B * H * W, -1)
        w = params[f"conv{i}_w"]
        grads[f"conv{i}_w"] = (cols.T @ dz).reshape(w.shape)
        grads[f"conv{i}_b"] = dz.sum(axis=0)
        if i == 0 and not need_input_grad:
            dh = None
            break
        dh = _col2im(dz @ w.reshape(-1, w.shape[-1]).T, in_shape)
    dfeatures = dh[..., 0] if dh is not None else None
    return grads, dfeatures


def predict_log_proba(features, params, cfg, batch_size=256):
    out = [forward(features[i : i + batch_size], params, cfg) for i in range(0, len(features), batch_size)]
    return np.concatenate(out, axis=0) if out else np.empty((0, cfg.n_classes))
