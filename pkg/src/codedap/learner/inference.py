"""Blur-size maps from a trained classifier."""

import numpy as np

from .._validation import check_image
from ..depthmap import fuse_votes
from ..simulator import extract_patches, spectral_feature
from . import network


def patch_features(patches, code_cfg):
    return spectral_feature(np.asarray(patches, dtype=np.float64), magnitude=code_cfg.magnitude, eps=code_cfg.eps)


def predict_patch_scales(patches, params, net_cfg, code_cfg):
    """Most probable scale for each coded patch in ``patches`` (n, P, P)."""
    logp = network.predict_log_proba(patch_features(patches, code_cfg), params, net_cfg)
    return np.asarray(code_cfg.scales)[np.argmax(logp, axis=1)]


def estimate_depth_map_cnn(image, params, net_cfg, code_cfg, stride=8, return_patches=False):
    """Classify every stride-spaced window of a coded image and fuse by majority vote.

    The code itself is not needed at inference: it is baked into the image.
    """
    P = code_cfg.patch_size
    X = check_image(image, min_side=P)
    windows = extract_patches(X, stride, P)
    labels = predict_patch_scales(np.stack([w for w, _, _ in windows]), params, net_cfg, code_cfg)
    anchors = [(r, c) for _, r, c in windows]
    sizes = fuse_votes(X.shape, anchors, labels, code_cfg.scales, patch_size=P)
    if return_patches:
        return sizes, list(zip(anchors, labels.tolist()))
    return sizes
