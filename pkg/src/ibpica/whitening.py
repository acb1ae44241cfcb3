"""PCA whitening of patch samples."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = ["PatchWhitener"]

_RANK_RTOL = 1e-12


class PatchWhitener(BaseEstimator, TransformerMixin):
    """Center, rotate and rescale patches to unit covariance.

    Keeps the smallest number of leading eigendirections whose cumulative
    variance reaches ``variance_to_keep`` (capped at the numerical rank), and
    scales each by 1/sqrt(eigenvalue + eig_floor), where the floor is
    ``eig_floor_scale`` times the largest eigenvalue.

    Attributes after fitting: ``mean_`` (D,), ``projection_`` (D', D) whose
    rows are the scaled eigenvectors, ``retained_dim_``, ``eig_floor_``.
    """

    def __init__(self, variance_to_keep: float = 0.99, eig_floor_scale: float = 1e-8):
        self.variance_to_keep = variance_to_keep
        self.eig_floor_scale = eig_floor_scale

    def fit(self, X, y=None):
        if not 0.0 < self.variance_to_keep <= 1.0:
            raise ValueError("variance_to_keep must lie in (0, 1]")
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = (centered.T @ centered) / X.shape[0]
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        eigvecs = eigvecs[:, order]

        total = eigvals.sum()
        rank = int(np.sum(eigvals > _RANK_RTOL * max(eigvals[0], 1e-300)))
        rank = max(rank, 1)
        if total <= 0:
            retained = 1
        else:
            cumulative = np.cumsum(eigvals) / total
            retained = int(np.searchsorted(cumulative, self.variance_to_keep - 1e-12) + 1)
            retained = min(max(retained, 1), rank)

        self.eig_floor_ = self.eig_floor_scale * max(eigvals[0], 0.0)
        floored = eigvals[:retained] + self.eig_floor_
        # Zero-variance directions map to zero rather than dividing by zero.
        scale = np.where(floored > 0, 1.0 / np.sqrt(np.where(floored > 0, floored, 1.0)), 0.0)
        self.projection_ = eigvecs[:, :retained].T * scale[:, None]
        self.retained_dim_ = retained
        self.eigenvalues_ = eigvals
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.mean_.shape[0]:
            raise ValueError(
                f"input dimension {X.shape[1]} does not match fitted dimension {self.mean_.shape[0]}"
            )
        out = (X - self.mean_) @ self.projection_.T
        return out[0] if single else out
