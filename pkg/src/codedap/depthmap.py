"""Fusing per-patch blur-size decisions into a per-pixel map, and scoring maps."""

import numpy as np
from scipy import ndimage


def fuse_votes(shape, anchors, labels, scales, valid=None, patch_size=32):
    """Per-pixel majority vote over the patches covering each pixel.

    Ties go to the smaller scale. Patches with ``valid == False`` do not vote;
    pixels left without any vote copy their nearest voted neighbor, and if no
    patch voted at all the map is filled with the smallest scale.
    """
    scales = sorted(int(s) for s in scales)
    index = {s: i for i, s in enumerate(scales)}
    counts = np.zeros((len(scales),) + tuple(shape), dtype=np.int64)
    if valid is None:
        valid = [True] * len(labels)
    for (r, c), lab, ok in zip(anchors, labels, valid):
        if ok:
            counts[index[int(lab)], r : r + patch_size, c : c + patch_size] += 1
    voted = counts.sum(axis=0) > 0
    out = np.asarray(scales)[np.argmax(counts, axis=0)]
    if not voted.any():
        return np.full(shape, scales[0], dtype=np.int64)
    if not voted.all():
        _, (ri, ci) = ndimage.distance_transform_edt(~voted, return_indices=True)
        out = out[ri, ci]
    return out.astype(np.int64)


def confusion_matrix(truth, pred, scales):
    scales = sorted(int(s) for s in scales)
    index = {s: i for i, s in enumerate(scales)}
    cm = np.zeros((len(scales), len(scales)), dtype=np.int64)
    for t, p in zip(np.ravel(truth), np.ravel(pred)):
        cm[index[int(t)], index[int(p)]] += 1
    return cm


def pixel_accuracy(truth, pred):
    truth = np.asarray(truth)
    return float(np.mean(truth == np.asarray(pred)))


def write_confusion_csv(path, cm, scales):
    with open(path, "w") as fh:
        fh.write("true\\pred," + ",".join(str(s) for s in scales) + "\n")
        for s, row in zip(scales, cm):
            fh.write(f"{s}," + ",".join(str(int(v)) for v in row) + "\n")
