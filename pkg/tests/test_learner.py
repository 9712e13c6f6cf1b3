import math

import numpy as np
import pytest

from codedap.exceptions import DegenerateCodeError, TrainingStepError
from codedap.learner import network
from codedap.learner.chain import (
    AnnealSchedule,
    CodeConfig,
    coded_features,
    hard_binarize,
    loss_and_gradients,
    soft_binarize,
)
from codedap.optics import scale_code
from codedap.simulator import convolve_patch, spectral_feature

SMALL = network.NetworkConfig(n_classes=3, patch_size=16, conv_channels=(3, 4, 4), fc_widths=(12, 10, 8, 6))


def naive_forward(x, params, cfg):
    """Layer-by-layer loops over pixels, channels and units."""
    out = []
    for img in x:
        h = img[:, :, None].astype(np.float64)
        for i in range(len(cfg.conv_channels)):
            w, b = params[f"conv{i}_w"], params[f"conv{i}_b"]
            H, Wd, Cin = h.shape
            hp = np.zeros((H + 2, Wd + 2, Cin))
            hp[1:-1, 1:-1] = h
            z = np.zeros((H, Wd, w.shape[3]))
            for f in range(w.shape[3]):
                for r in range(H):
                    for c in range(Wd):
                        z[r, c, f] = np.sum(hp[r : r + 3, c : c + 3, :] * w[:, :, :, f]) + b[f]
            a = np.maximum(z, 0)
            pooled = np.zeros((H // 2, Wd // 2, w.shape[3]))
            for r in range(H // 2):
                for c in range(Wd // 2):
                    pooled[r, c] = (a[2 * r, 2 * c] + a[2 * r + 1, 2 * c] + a[2 * r, 2 * c + 1] + a[2 * r + 1, 2 * c + 1]) / 4
            h = pooled
        v = h.ravel()
        n_fc = len(cfg.fc_widths) + 1
        for i in range(n_fc):
            w, b = params[f"fc{i}_w"], params[f"fc{i}_b"]
            v = np.array([sum(v[k] * w[k, j] for k in range(len(v))) + b[j] for j in range(w.shape[1])])
            if i < n_fc - 1:
                v = np.maximum(v, 0)
        m = max(v)
        lse = m + math.log(sum(math.exp(t - m) for t in v))
        out.append(v - lse)
    return np.array(out)


def small_params(seed=0, cfg=SMALL):
    rng = np.random.default_rng(seed)
    params = network.init_params(cfg, rng)
    for k in params:
        if k.endswith("_b"):
            params[k] = rng.normal(0, 0.1, params[k].shape)
    return params


def test_forward_matches_naive_oracle():
    params = small_params(1)
    x = np.random.default_rng(2).random((3, 16, 16))
    np.testing.assert_allclose(network.forward(x, params, SMALL), naive_forward(x, params, SMALL), atol=1e-10)


def test_forward_rows_are_log_probabilities():
    cfg = network.NetworkConfig()
    params = network.init_params(cfg, np.random.default_rng(0))
    logp = network.forward(np.random.default_rng(1).random((5, 32, 32)) * 3, params, cfg)
    assert logp.shape == (5, 7)
    lse = np.log(np.sum(np.exp(logp), axis=1))
    np.testing.assert_allclose(lse, 0.0, atol=1e-9)


def test_zero_final_layer_is_uniform():
    params = small_params(3)
    params["fc4_w"][:] = 0
    params["fc4_b"][:] = 0
    logp = network.forward(np.random.default_rng(4).random((4, 16, 16)), params, SMALL)
    np.testing.assert_allclose(np.exp(logp), 1 / 3, atol=1e-15)


def test_param_shapes_default():
    shapes = network.param_shapes(network.NetworkConfig())
    assert shapes["conv0_w"] == (3, 3, 1, 16)
    assert shapes["fc0_w"] == (4 * 4 * 32, 512)
    assert shapes["fc4_w"] == (64, 7)
    assert sum(1 for k in shapes if k.startswith("conv") and k.endswith("_w")) == 3
    assert sum(1 for k in shapes if k.startswith("fc") and k.endswith("_w")) == 5


def test_shape_mismatch_rejected():
    params = small_params()
    with pytest.raises(ValueError):
        network.forward(np.zeros((2, 32, 32)), params, SMALL)
    params["fc1_w"] = params["fc1_w"][:, :5]
    with pytest.raises(ValueError):
        network.forward(np.zeros((2, 16, 16)), params, SMALL)
    with pytest.raises(ValueError):
        network.NetworkConfig(patch_size=20)


def test_soft_binarize_examples():
    np.testing.assert_array_equal(soft_binarize(np.zeros((3, 3)), 7.0), 0.5)
    sched = AnnealSchedule()
    assert sched.alpha(3000) == 3.5
    assert soft_binarize(np.array([1.0]), sched.alpha(3000))[0] == pytest.approx(1 / (1 + math.exp(-3.5)))
    assert soft_binarize(np.array([1.0]), 3.5)[0] == pytest.approx(0.9707, abs=1e-4)
    assert soft_binarize(np.array([-1000.0, 1000.0]), 5.0).tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        soft_binarize(np.ones(2), 0.0)


def test_soft_binarize_saturates():
    W = np.array([0.3, -0.7])
    dist = [np.min(np.minimum(C, 1 - C)) for C in (soft_binarize(W, a) for a in (2.5, 5, 10, 20))]
    assert all(a > b for a, b in zip(dist, dist[1:]))


def test_soft_binarize_monotone_in_w():
    W = np.linspace(-3, 3, 101)
    assert np.all(np.diff(soft_binarize(W, 2.5)) > 0)


def test_schedule():
    sched = AnnealSchedule()
    assert [sched.alpha(t) for t in (0, 1500, 3000)] == [2.5, 3.0, 3.5]
    assert all(sched.alpha(t) < sched.alpha(t + 1) for t in range(0, 10000, 97))
    with pytest.raises(ValueError):
        AnnealSchedule(slope_inv=0)


def test_hard_binarize_examples():
    np.testing.assert_array_equal(hard_binarize(np.full((3, 3), 0.5), 0.5), 1.0)
    np.testing.assert_array_equal(hard_binarize(np.array([[0.2, 0.9]]), 0.5), [[0.0, 1.0]])
    with pytest.raises(DegenerateCodeError):
        hard_binarize(np.full((3, 3), 0.1), 0.5)
    with pytest.raises(ValueError):
        hard_binarize(np.ones((3, 3)), 1.0)


def test_hard_binarize_depends_on_sign_at_high_alpha():
    W = np.random.default_rng(0).uniform(-1, 1, (11, 11))
    for alpha in (2.5, 40.0, 1e3):
        np.testing.assert_array_equal(hard_binarize(soft_binarize(W, alpha)), (W >= 0).astype(float))


def test_features_match_simulated_blur():
    rng = np.random.default_rng(5)
    X = rng.random((3, 32, 32))
    C = rng.random((11, 11))
    sizes = np.array([1, 5, 13])
    F = coded_features(X, sizes, C, CodeConfig())
    for x, s, f in zip(X, sizes, F):
        y = convolve_patch(x, scale_code(C, s), "cyclic")
        np.testing.assert_allclose(f, spectral_feature(y, eps=1e-12), atol=1e-9)


def test_uniform_predictions_give_log_k():
    params = small_params()
    params["fc4_w"][:] = 0
    params["fc4_b"][:] = 0
    cc = CodeConfig(scales=(1, 3, 5), patch_size=16)
    X = np.random.default_rng(0).random((4, 16, 16))
    loss, _, _ = loss_and_gradients(X, [1, 3, 5, 3], np.zeros((11, 11)), 2.5, params, SMALL, cc)
    assert loss == pytest.approx(math.log(3), abs=1e-12)


def test_duplication_invariance():
    params = small_params(2)
    cc = CodeConfig(scales=(1, 3, 5), patch_size=16)
    rng = np.random.default_rng(1)
    X = rng.random((3, 16, 16))
    sizes = np.array([1, 5, 3])
    W = rng.uniform(-0.5, 0.5, (11, 11))
    l1, w1, g1 = loss_and_gradients(X, sizes, W, 3.0, params, SMALL, cc)
    l2, w2, g2 = loss_and_gradients(np.concatenate([X, X]), np.concatenate([sizes, sizes]), W, 3.0, params, SMALL, cc)
    assert l2 == pytest.approx(l1, rel=1e-12)
    np.testing.assert_allclose(w2, w1, rtol=1e-9, atol=1e-15)
    for k in g1:
        np.testing.assert_allclose(g2[k], g1[k], rtol=1e-9, atol=1e-15)


def relu_masks(X, sizes, W, alpha, params, cfg, cc):
    F = coded_features(X, sizes, soft_binarize(W, alpha), cc)
    _, cache = network.forward(F, params, cfg, keep_cache=True)
    return np.concatenate([(c[-1] > 0).ravel() for c in cache])


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    cc = CodeConfig(scales=(1, 3, 5), patch_size=16)
    params = small_params(4)
    X = rng.random((3, 16, 16))
    sizes = np.array([3, 5, 1])
    W = rng.uniform(-0.5, 0.5, (11, 11))
    alpha = 2.8
    _, dW, grads = loss_and_gradients(X, sizes, W, alpha, params, SMALL, cc)
    h = 1e-4
    checked = 0
    for t in range(120):
        if t % 3 == 0:
            arr, idx = W, tuple(rng.integers(11, size=2))
            analytic = dW[idx]
        else:
            name = list(params)[rng.integers(len(params))]
            arr = params[name]
            idx = tuple(int(rng.integers(d)) for d in arr.shape)
            analytic = grads[name][idx]
        old = arr[idx]
        arr[idx] = old + h
        fp = loss_and_gradients(X, sizes, W, alpha, params, SMALL, cc)[0]
        mp = relu_masks(X, sizes, W, alpha, params, SMALL, cc)
        arr[idx] = old - h
        fm = loss_and_gradients(X, sizes, W, alpha, params, SMALL, cc)[0]
        mm = relu_masks(X, sizes, W, alpha, params, SMALL, cc)
        arr[idx] = old
        if np.any(mp != mm):
            continue  # the difference straddles a rectifier kink
        numeric = (fp - fm) / (2 * h)
        assert abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-10) < 1e-4
        checked += 1
    assert checked >= 100


def test_degenerate_kernel_is_training_step_error():
    params = small_params()
    cc = CodeConfig(scales=(1, 3, 5), patch_size=16)
    with pytest.raises(TrainingStepError) as exc:
        loss_and_gradients(np.zeros((1, 16, 16)), [3], np.zeros((11, 11)), 2.5, params, SMALL, cc,
                           code=np.zeros((11, 11)))
    assert exc.value.state is not None


def test_unknown_size_rejected():
    params = small_params()
    cc = CodeConfig(scales=(1, 3, 5), patch_size=16)
    with pytest.raises(ValueError):
        loss_and_gradients(np.zeros((1, 16, 16)), [7], np.zeros((11, 11)), 2.5, params, SMALL, cc)
