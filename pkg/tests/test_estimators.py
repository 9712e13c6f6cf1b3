import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from codedap.estimators import ArraySampler, CodedApertureClassifier, SpectralFeatures, WienerScaleEstimator
from codedap.optics import random_symmetric_code, scale_code
from codedap.simulator import convolve_patch, spectral_feature

CODE = random_symmetric_code(11, 0)


def test_spectral_features_transform():
    X = np.random.default_rng(0).random((4, 32, 32))
    F = SpectralFeatures().fit_transform(X)
    assert F.shape == (4, 32 * 32)
    np.testing.assert_allclose(F[2].reshape(32, 32), spectral_feature(X[2]))
    with pytest.raises(NotFittedError):
        SpectralFeatures().transform(X)
    with pytest.raises(ValueError):
        SpectralFeatures().fit(X).transform(np.zeros((2, 16, 16)))


def test_params_and_clone():
    est = CodedApertureClassifier(iterations=5, random_state=4)
    assert est.get_params()["iterations"] == 5
    c = clone(est)
    assert c.get_params() == est.get_params()
    est.set_params(batch_size=8)
    assert est.batch_size == 8
    w = WienerScaleEstimator(code=CODE, nsr=1e-2)
    assert clone(w).get_params()["nsr"] == 1e-2


def test_wiener_estimator_predicts_scales():
    rng = np.random.default_rng(1)
    sizes = [3, 7, 11]
    X = np.stack([convolve_patch(rng.random((32, 32)), scale_code(CODE, s)) for s in sizes])
    est = WienerScaleEstimator(code=CODE).fit()
    assert est.predict(X).tolist() == sizes
    assert est.score(X, sizes) == 1.0
    assert est.predict_depth_map(np.tile(X[1], (2, 2))).shape == (64, 64)
    with pytest.raises(ValueError):
        WienerScaleEstimator().fit()


def test_classifier_fit_predict(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.random((40, 16, 16))
    y = rng.choice([1, 3, 5], size=40)
    est = CodedApertureClassifier(max_kernel_size=5, patch_size=16, conv_channels=(2, 4, 4),
                                  fc_widths=(8, 8, 8, 8), iterations=6, batch_size=8, dtype="float64",
                                  random_state=1)
    est.fit(X, y, X_val=X[:10], y_val=y[:10])
    assert est.code_.shape == (11, 11) and set(np.unique(est.code_)) <= {0.0, 1.0}
    assert est.classes_.tolist() == [1, 3, 5]
    coded = np.stack([convolve_patch(x, scale_code(est.code_, s), "cyclic") for x, s in zip(X, y)])
    proba = est.predict_proba(coded)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    assert set(est.predict(coded)) <= {1, 3, 5}
    assert 0.0 <= est.val_accuracy_ <= 1.0
    assert len(est.log_) == 6
    sizes = est.predict_depth_map(rng.random((24, 40)))
    assert set(np.unique(sizes)) <= {1, 3, 5}
    assert est.simulate(X[:3], y[:3]).shape == (3, 16, 16)
    with pytest.raises(ValueError):
        est.fit(X, np.full(40, 7))


def test_classifier_determinism():
    rng = np.random.default_rng(3)
    X, y = rng.random((20, 16, 16)), rng.choice([1, 3, 5], size=20)
    kw = dict(max_kernel_size=5, patch_size=16, conv_channels=(2, 2, 2), fc_widths=(4, 4, 4, 4),
              iterations=4, batch_size=4, dtype="float64", random_state=5)
    a = CodedApertureClassifier(**kw).fit(X, y)
    b = CodedApertureClassifier(**kw).fit(X, y)
    np.testing.assert_array_equal(a.W_, b.W_)


def test_pipeline_with_features():
    X = np.random.default_rng(4).random((3, 32, 32))
    pipe = make_pipeline(SpectralFeatures(magnitude="raw"))
    out = pipe.fit_transform(X)
    np.testing.assert_allclose(out[0], np.fft.fftshift(np.abs(np.fft.fft2(X[0]))).ravel(), rtol=1e-12)


def test_array_sampler_is_seeded():
    X, y = np.arange(10.0)[:, None], np.arange(10)
    a, b = ArraySampler(X, y, seed=2), ArraySampler(X, y, seed=2)
    assert a.draw(5)[1].tolist() == b.draw(5)[1].tolist()
