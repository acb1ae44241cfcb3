"""Sklearn-style estimator facade over the sparse ICA inference engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .inference import (
    InferenceConfig,
    feedforward_encode,
    feedforward_scales,
    mean_responsibilities,
    run_inference,
)
from .state import Hyperparameters, feature_counts

__all__ = ["IBPICA"]


class IBPICA(BaseEstimator, TransformerMixin):
    """Nonparametric Bayesian sparse ICA transformer.

    Fits the spike-and-slab ICA model with an IBP prior over feature
    activity, inferring the number of latent features from the data.
    ``transform`` encodes rows with the learned linear feedforward map.

    Parameters
    ----------
    n_components : initial number of latent features (grows and shrinks
        during fitting).
    max_iter, tol : stopping rule for the coordinate-ascent loop.
    prune_threshold : features whose activity stays below this in every
        dimension are removed.
    updates : "exact" for monotone lower-bound ascent, "as-printed" for the
        simplified literal update rules.
    mixture_components : size of the Gaussian mixture source prior.
    hyperparameters : optional dict overriding individual prior
        hyperparameters (a, b, c, f, gamma1, gamma2, eta1, eta2, xi).
    random_state : root seed of the run's random streams.

    Attributes
    ----------
    state_ : full variational state after fitting.
    n_features_ : inferred number of active latent features.
    loadings_ : posterior mean loading matrix E[G], shape (D, K).
    elbo_trace_, k_trace_ : per-iteration lower bound and feature count.
    """

    def __init__(
        self,
        n_components: int = 5,
        max_iter: int = 100,
        tol: float = 1e-5,
        prune_threshold: float = 1e-3,
        updates: str = "exact",
        mixture_components: int = 2,
        hyperparameters: dict | None = None,
        sample_feature_counts: bool = True,
        random_state: int = 0,
    ):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.prune_threshold = prune_threshold
        self.updates = updates
        self.mixture_components = mixture_components
        self.hyperparameters = hyperparameters
        self.sample_feature_counts = sample_feature_counts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        hp = Hyperparameters(J=self.mixture_components, **(self.hyperparameters or {}))
        config = InferenceConfig(
            max_iter=self.max_iter,
            tolerance=self.tol,
            K_init=self.n_components,
            prune_threshold=self.prune_threshold,
            seed=self.random_state,
            updates=self.updates,
            sample_feature_counts=self.sample_feature_counts,
        )
        state, trace = run_inference(X, hp, config)
        self.state_ = state
        self.trace_ = trace
        self.elbo_trace_ = np.array(trace.elbo)
        self.k_trace_ = np.array(trace.k_active)
        self.n_features_ = feature_counts(state).K
        self.n_columns_ = state.n_features
        self.loadings_ = state.loading.loading_mean()
        self.mean_responsibilities_ = mean_responsibilities(state)
        self.feature_scales_ = feedforward_scales(state, self.mean_responsibilities_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        return feedforward_encode(self.state_, X, self.feature_scales_)
