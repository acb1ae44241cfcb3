"""Nonparametric Bayesian sparse ICA with automatic feature-count inference.

The package provides:

* :class:`ibpica.IBPICA` -- sklearn-style estimator fitting the sparse ICA
  model to a data matrix and encoding new data with the learned features.
* video patch extraction, PCA whitening, the stacked convolutional network
  built from trained factor models, and k-means vector quantization.
* an `ibpica` command-line interface (synth / train / extract / quantize).
"""

from .estimator import IBPICA
from .inference import InferenceConfig, run_inference
from .network import (
    LayerConfig,
    NetworkModel,
    PoolingSpec,
    extract_features,
    load_network,
    save_network,
    train_network,
)
from .quantize import KMeansCodebook, kmeans_fit, quantize
from .randomness import RngStream, sample_poisson
from .serialize import load_model, save_model
from .special import beta_expectations, digamma, gamma_expectations
from .state import (
    ConfigurationError,
    FeatureCounts,
    Hyperparameters,
    ModelState,
    NumericalError,
    feature_counts,
    init_model,
    prune_features,
)
from .synth import SynthBundle, load_bundle, save_bundle, synth_generate
from .video import ReceptiveField, VideoTensor, extract_patches, read_video, write_video
from .whitening import PatchWhitener

__version__ = "0.1.0"

__all__ = [
    "IBPICA",
    "InferenceConfig",
    "run_inference",
    "RngStream",
    "sample_poisson",
    "digamma",
    "beta_expectations",
    "gamma_expectations",
    "Hyperparameters",
    "ModelState",
    "FeatureCounts",
    "feature_counts",
    "init_model",
    "prune_features",
    "ConfigurationError",
    "NumericalError",
    "VideoTensor",
    "ReceptiveField",
    "extract_patches",
    "read_video",
    "write_video",
    "PatchWhitener",
    "PoolingSpec",
    "LayerConfig",
    "NetworkModel",
    "train_network",
    "extract_features",
    "save_network",
    "load_network",
    "save_model",
    "load_model",
    "KMeansCodebook",
    "kmeans_fit",
    "quantize",
    "SynthBundle",
    "synth_generate",
    "save_bundle",
    "load_bundle",
    "__version__",
]
