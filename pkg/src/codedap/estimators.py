"""scikit-learn compatible front ends.

``CodedApertureClassifier`` learns the aperture code and the blur-size
classifier from all-focus patches and their blur sizes, then predicts
blur sizes of coded patches. ``WienerScaleEstimator`` wraps the
deconvolution baseline in the same interface, and ``SpectralFeatures``
exposes the classifier's input representation as a transformer.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_code_array, check_patch_stack
from .learner import network
from .learner.chain import AnnealSchedule, CodeConfig, coded_features
from .learner.inference import estimate_depth_map_cnn, patch_features
from .learner.training import TrainConfig, load_model, train
from .wiener_depth import WienerConfig, _ScaleBank, _estimate, _extend, estimate_depth_map_wiener


class ArraySampler:
    """Uniform, seeded sampling of ``(patch, size)`` pairs from in-memory arrays."""

    def __init__(self, X, y, seed=0):
        self.X, self.y = X, np.asarray(y)
        self.rng = np.random.default_rng(seed)

    def draw(self, n):
        idx = self.rng.integers(len(self.y), size=n)
        return self.X[idx], self.y[idx]

    def get_state(self):
        return self.rng.bit_generator.state

    def set_state(self, state):
        self.rng.bit_generator.state = state


class SpectralFeatures(TransformerMixin, BaseEstimator):
    """Flattened, centered ``log(1 + |DFT|)`` (or raw ``|DFT|``) of square patches."""

    def __init__(self, magnitude="log", eps=0.0):
        self.magnitude = magnitude
        self.eps = eps

    def fit(self, X, y=None):
        X = check_patch_stack(X)
        self.patch_size_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "patch_size_")
        X = check_patch_stack(X, self.patch_size_)
        cfg = CodeConfig(patch_size=self.patch_size_, eps=self.eps, magnitude=self.magnitude)
        return patch_features(X, cfg).reshape(len(X), -1)


class CodedApertureClassifier(ClassifierMixin, BaseEstimator):
    """Jointly learned binary aperture code and blur-size classifier.

    ``fit`` takes *all-focus* patches and their blur sizes; ``predict``
    takes patches already imaged through ``code_``.
    """

    def __init__(self, max_kernel_size=13, code_size=11, patch_size=32, conv_channels=(16, 32, 32),
                 fc_widths=(512, 256, 128, 64), iterations=10000, batch_size=128, learning_rate=1e-3,
                 optimizer="adam", anneal_base=2.5, anneal_slope_inv=3000.0, binarize_threshold=0.5,
                 finetune_iterations=0, magnitude="log", dtype="float32", random_state=0):
        self.max_kernel_size = max_kernel_size
        self.code_size = code_size
        self.patch_size = patch_size
        self.conv_channels = conv_channels
        self.fc_widths = fc_widths
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.anneal_base = anneal_base
        self.anneal_slope_inv = anneal_slope_inv
        self.binarize_threshold = binarize_threshold
        self.finetune_iterations = finetune_iterations
        self.magnitude = magnitude
        self.dtype = dtype
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_patch_stack(X, self.patch_size)
        y = np.asarray(y, dtype=np.int64)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} patches but y has {len(y)} labels")
        scales = tuple(range(1, self.max_kernel_size + 1, 2))
        self.code_cfg_ = CodeConfig(scales=scales, patch_size=self.patch_size, magnitude=self.magnitude)
        self.code_cfg_.class_index(y)
        self.net_cfg_ = network.NetworkConfig(
            n_classes=len(scales), patch_size=self.patch_size,
            conv_channels=self.conv_channels, fc_widths=self.fc_widths,
        )
        cfg = TrainConfig(
            batch_size=self.batch_size, iterations=self.iterations, learning_rate=self.learning_rate,
            seed=self.random_state, optimizer=self.optimizer, binarize_threshold=self.binarize_threshold,
            code_size=self.code_size, finetune_iterations=self.finetune_iterations, dtype=self.dtype,
            checkpoint_every=0,
        )
        val = None
        if X_val is not None:
            val = (check_patch_stack(X_val, self.patch_size), np.asarray(y_val))
        result = train(
            ArraySampler(X, y, seed=[self.random_state, 1]), self.code_cfg_, cfg,
            AnnealSchedule(self.anneal_base, self.anneal_slope_inv), self.net_cfg_, val_set=val,
        )
        self._set_fitted(result.code, result.W, result.params)
        self.log_ = result.log
        self.val_accuracy_ = result.val_accuracy
        return self

    def _set_fitted(self, code, W, params):
        self.code_ = code
        self.W_ = W
        self.params_ = params
        self.classes_ = np.asarray(self.code_cfg_.scales)

    @classmethod
    def from_checkpoint(cls, path, code=None):
        """Rebuild a fitted estimator from a training checkpoint."""
        W, params, net_cfg, code_cfg, meta = load_model(path)
        tc = meta["train_config"]
        est = cls(max_kernel_size=max(code_cfg.scales), code_size=W.shape[0], patch_size=code_cfg.patch_size,
                  conv_channels=net_cfg.conv_channels, fc_widths=net_cfg.fc_widths,
                  iterations=tc["iterations"], batch_size=tc["batch_size"], learning_rate=tc["learning_rate"],
                  optimizer=tc["optimizer"], anneal_base=meta["schedule"]["base"],
                  anneal_slope_inv=meta["schedule"]["slope_inv"], binarize_threshold=tc["binarize_threshold"],
                  finetune_iterations=tc["finetune_iterations"], magnitude=code_cfg.magnitude,
                  dtype=tc["dtype"], random_state=tc["seed"])
        est.code_cfg_, est.net_cfg_ = code_cfg, net_cfg
        if code is None:
            from .learner.chain import hard_binarize, soft_binarize
            alpha = AnnealSchedule(**meta["schedule"]).alpha(tc["iterations"])
            code = hard_binarize(soft_binarize(W, alpha), tc["binarize_threshold"])
        est._set_fitted(np.asarray(code, dtype=np.float64), W, params)
        return est

    def simulate(self, X, y):
        """Features of all-focus patches cyclically blurred with the learned code."""
        check_is_fitted(self, "code_")
        return coded_features(check_patch_stack(X, self.patch_size), y, self.code_, self.code_cfg_)

    def predict_log_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_patch_stack(X, self.patch_size)
        return network.predict_log_proba(patch_features(X, self.code_cfg_), self.params_, self.net_cfg_)

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_log_proba(X), axis=1)]

    def predict_depth_map(self, image, stride=8):
        check_is_fitted(self, "params_")
        return estimate_depth_map_cnn(image, self.params_, self.net_cfg_, self.code_cfg_, stride)


class WienerScaleEstimator(ClassifierMixin, BaseEstimator):
    """Per-patch blur-size estimation by Wiener deconvolution with each candidate kernel.

    Nothing is learned; ``fit`` only validates the configuration.
    """

    def __init__(self, code=None, nsr=1e-3, scales=None, boundary="reflect", texture_floor=0.01, threads=1):
        self.code = code
        self.nsr = nsr
        self.scales = scales
        self.boundary = boundary
        self.texture_floor = texture_floor
        self.threads = threads

    def fit(self, X=None, y=None):
        if self.code is None:
            raise ValueError("WienerScaleEstimator needs an aperture code")
        self.code_ = check_code_array(self.code)
        scales = list(range(1, 14, 2)) if self.scales is None else list(self.scales)
        self.config_ = WienerConfig(self.nsr, scales, self.boundary, self.texture_floor)
        self.classes_ = np.asarray(self.config_.scales)
        return self

    def estimate_patches(self, X):
        check_is_fitted(self, "config_")
        X = check_patch_stack(X)
        bank = _ScaleBank(self.code_, self.config_.scales, _extend(X[0], self.config_.boundary)[0].shape)
        return [_estimate(x, bank, self.config_) for x in X]

    def predict(self, X):
        return np.array([e.best_scale for e in self.estimate_patches(X)])

    def predict_depth_map(self, image, stride=8):
        check_is_fitted(self, "config_")
        return estimate_depth_map_wiener(image, self.code_, self.config_, stride, self.threads)
