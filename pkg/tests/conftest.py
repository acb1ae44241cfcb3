"""Shared fixtures: random-but-valid variational states for property tests."""

import numpy as np
import pytest

from ibpica.state import (
    GlobalPrecisions,
    Hyperparameters,
    LoadingPosterior,
    ModelState,
    SourcePosterior,
    StickState,
    normalized_q_weights,
)


def random_state(rng: np.random.Generator, N=4, D=3, K=3, J=2, hp=None) -> tuple[ModelState, np.ndarray]:
    """A random model state satisfying every type invariant, plus data."""
    hp = hp or Hyperparameters(J=J)
    X = rng.normal(size=(N, D))
    activity = rng.uniform(0.02, 0.98, size=(D, K))
    loading = LoadingPosterior(
        activity=activity,
        mean=rng.normal(scale=1.0, size=(D, K)),
        precision=rng.uniform(0.5, 3.0, size=K),
    )
    resp = rng.uniform(0.1, 1.0, size=(N, K, J))
    resp /= resp.sum(axis=2, keepdims=True)
    source = SourcePosterior(
        mean=rng.normal(scale=0.7, size=(N, K)),
        variance=rng.uniform(0.2, 2.0, size=(N, K)),
        responsibilities=resp,
        mixture_weights=rng.uniform(0.5, 3.0, size=(K, J)),
        scale_shape=rng.uniform(0.8, 3.0, size=(K, J)),
        scale_rate=rng.uniform(0.5, 3.0, size=(K, J)),
    )
    tau_tilde = rng.uniform(0.6, 4.0, size=K)
    tau_hat = rng.uniform(0.6, 3.0, size=K)
    sticks = StickState(
        tau_tilde=tau_tilde,
        tau_hat=tau_hat,
        q_weights=normalized_q_weights(tau_tilde, tau_hat),
        alpha_shape=rng.uniform(0.5, 3.0),
        alpha_rate=rng.uniform(0.5, 3.0),
    )
    prec = GlobalPrecisions(
        lambda_shape=rng.uniform(0.8, 3.0, size=K),
        lambda_rate=rng.uniform(0.5, 3.0, size=K),
        phi_shape=rng.uniform(1.0, 4.0),
        phi_rate=rng.uniform(0.5, 3.0),
    )
    return ModelState(hp=hp, loading=loading, source=source, sticks=sticks, prec=prec), X


@pytest.fixture
def toy_state():
    rng = np.random.default_rng(42)
    return random_state(rng)
