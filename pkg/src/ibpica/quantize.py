"""K-means vector quantization of feature vectors into histograms."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .randomness import RngStream
from .state import ConfigurationError

__all__ = ["KMeansCodebook", "kmeans_fit", "quantize"]

_MAX_LLOYD_ITER = 100


def _squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, C), clipped at zero."""
    cross = X @ centers.T
    d2 = (X ** 2).sum(axis=1)[:, None] - 2.0 * cross + (centers ** 2).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_plus_plus(X: np.ndarray, n_centers: int, rng: RngStream) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((n_centers, X.shape[1]))
    first = int(rng.integers(0, n))
    centers[0] = X[first]
    d2 = _squared_distances(X, centers[:1])[:, 0]
    for c in range(1, n_centers):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(0, n))
        else:
            # Inverse-CDF draw proportional to squared distance.
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u))
            idx = min(idx, n - 1)
        centers[c] = X[idx]
        d2 = np.minimum(d2, _squared_distances(X, centers[c : c + 1])[:, 0])
    return centers


class KMeansCodebook(BaseEstimator):
    """Lloyd's k-means with k-means++ seeding and deterministic streams.

    Iterates to an assignment fixed point (or 100 iterations); the objective
    is non-increasing.  If the data contain fewer distinct points than
    requested centers, the codebook size is reduced with a warning.
    """

    def __init__(self, n_centers: int = 64, random_state: int = 0):
        self.n_centers = n_centers
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.n_centers < 1:
            raise ConfigurationError("codebook size must be at least 1")
        X = check_array(X, dtype=np.float64)
        n_centers = self.n_centers
        if X.shape[0] < n_centers:
            raise ConfigurationError(
                f"need at least {n_centers} samples to fit {n_centers} centers, got {X.shape[0]}"
            )
        distinct = np.unique(X, axis=0).shape[0]
        if distinct < n_centers:
            warnings.warn(
                f"only {distinct} distinct points; reducing codebook size from {n_centers}",
                stacklevel=2,
            )
            n_centers = distinct

        rng = RngStream(self.random_state, 0)
        centers = _kmeans_plus_plus(X, n_centers, rng)
        assignments = None
        objective = []
        for _ in range(_MAX_LLOYD_ITER):
            d2 = _squared_distances(X, centers)
            new_assignments = np.argmin(d2, axis=1)
            objective.append(float(d2[np.arange(X.shape[0]), new_assignments].sum()))
            if assignments is not None and np.array_equal(new_assignments, assignments):
                break
            assignments = new_assignments
            for c in range(n_centers):
                members = X[assignments == c]
                if members.shape[0]:
                    centers[c] = members.mean(axis=0)
        self.centers_ = centers
        self.objective_trace_ = np.array(objective)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Nearest-center assignment; ties resolve to the lowest index."""
        check_is_fitted(self, "centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(_squared_distances(X, self.centers_), axis=1)

    def histogram(self, X):
        """Normalized assignment histogram of length n_centers.

        An empty feature set yields the all-zero histogram with a warning.
        """
        check_is_fitted(self, "centers_")
        C = self.centers_.shape[0]
        X = np.asarray(X, dtype=np.float64)
        if X.size == 0:
            warnings.warn("no feature vectors to quantize; histogram is all zeros", stacklevel=2)
            return np.zeros(C)
        codes = self.predict(X)
        counts = np.bincount(codes, minlength=C).astype(np.float64)
        return counts / counts.sum()


def kmeans_fit(features: np.ndarray, n_centers: int, seed: int) -> KMeansCodebook:
    return KMeansCodebook(n_centers=n_centers, random_state=seed).fit(features)


def quantize(codebook: KMeansCodebook, features: np.ndarray) -> np.ndarray:
    return codebook.histogram(features)
