"""Blind image quality prediction from natural-scene-statistics features."""

from .features import LAYOUT_VERSION, N_FEATURES, FeatureVector, extract_all, layout
from .regressor import QualityModel, load_model, predict, save_model, train

__all__ = [
    "LAYOUT_VERSION",
    "N_FEATURES",
    "FeatureVector",
    "QualityModel",
    "extract_all",
    "layout",
    "load_model",
    "predict",
    "save_model",
    "train",
]
__version__ = "0.1.0"
