"""Coded-aperture depth from defocus: code learning, simulation and evaluation."""

__version__ = "0.1.0"

from .code_eval import KLReport, PriorSpectrum, blurred_spectrum, gradient_prior, kl_between_scales, kl_report
from .data_io import (
    Scene,
    SplitSpec,
    discretize_depth,
    make_synthetic_corpus,
    make_synthetic_scene,
    patch_label_stream,
    split,
)
from .estimators import CodedApertureClassifier, SpectralFeatures, WienerScaleEstimator
from .optics import (
    ApertureCode,
    CameraConfig,
    depth_to_blur_size,
    load_code,
    open_aperture,
    random_symmetric_code,
    save_code,
    scale_code,
)
from .simulator import convolve_patch, extract_patches, simulate_coded_image, spectral_feature
from .wiener_depth import WienerConfig, estimate_depth_map_wiener, estimate_patch_scale, wiener_deconvolve

__all__ = [
    "ApertureCode",
    "CameraConfig",
    "CodedApertureClassifier",
    "KLReport",
    "PriorSpectrum",
    "Scene",
    "SpectralFeatures",
    "SplitSpec",
    "WienerConfig",
    "WienerScaleEstimator",
    "blurred_spectrum",
    "convolve_patch",
    "depth_to_blur_size",
    "discretize_depth",
    "estimate_depth_map_wiener",
    "estimate_patch_scale",
    "extract_patches",
    "gradient_prior",
    "kl_between_scales",
    "kl_report",
    "load_code",
    "make_synthetic_corpus",
    "make_synthetic_scene",
    "open_aperture",
    "patch_label_stream",
    "random_symmetric_code",
    "save_code",
    "scale_code",
    "simulate_coded_image",
    "spectral_feature",
    "split",
    "wiener_deconvolve",
]
