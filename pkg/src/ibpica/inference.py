"""Inference driver: the full coordinate-ascent loop with feature-count moves.

Each iteration runs, in order: the per-dimension MH feature-count steps, the
activity update, the source-side updates (means/variances, responsibilities,
mixture weights, scales), the global precision and stick updates, and finally
the loading update.  Dead feature columns are pruned after every cycle, and
the evidence lower bound is recorded per iteration.

The per-dimension MH steps draw from one random substream per dimension
(stream id = 1-based dimension index; stream 0 seeds the initialization), so
results do not depend on scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elbo import elbo
from .mh import mh_feature_step
from .randomness import RngStream
from .state import (
    ConfigurationError,
    Hyperparameters,
    ModelState,
    NumericalError,
    feature_counts,
    init_model,
    prune_features,
)
from .updates import (
    UPDATE_MODES,
    update_activity,
    update_lambda,
    update_loadings,
    update_mixture_weights,
    update_phi,
    update_responsibilities,
    update_scales,
    update_sources,
    update_sticks,
)

__all__ = [
    "InferenceConfig",
    "InferenceTrace",
    "run_inference",
    "feedforward_scales",
    "feedforward_encode",
    "mean_responsibilities",
]


@dataclass
class InferenceConfig:
    max_iter: int = 100
    tolerance: float = 1e-5
    K_init: int = 5
    prune_threshold: float = 1e-3
    seed: int = 0
    updates: str = "exact"
    sample_feature_counts: bool = True

    def __post_init__(self):
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be non-negative")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.K_init < 1:
            raise ConfigurationError("K_init must be at least 1")
        if not 0.0 < self.prune_threshold < 1.0:
            raise ConfigurationError("prune_threshold must lie in (0, 1)")
        if self.updates not in UPDATE_MODES:
            raise ConfigurationError(
                f"updates must be one of {UPDATE_MODES}, got {self.updates!r}"
            )


@dataclass
class InferenceTrace:
    """Per-iteration record; entry 0 is the freshly initialized state."""

    elbo: list[float] = field(default_factory=list)
    k_active: list[int] = field(default_factory=list)
    k_columns: list[int] = field(default_factory=list)
    mh_accepted: list[bool] = field(default_factory=list)
    pruned: list[bool] = field(default_factory=list)

    def record(self, state: ModelState, X: np.ndarray, accepted: bool, pruned: bool) -> float:
        value = elbo(state, X)
        self.elbo.append(value)
        self.k_active.append(feature_counts(state).K)
        self.k_columns.append(state.n_features)
        self.mh_accepted.append(accepted)
        self.pruned.append(pruned)
        return value


def mean_responsibilities(state: ModelState) -> np.ndarray:
    """Training-time average responsibilities, (K, J); uniform when N = 0."""
    if state.n_samples == 0:
        return np.full((state.n_features, state.hp.J), 1.0 / state.hp.J)
    return state.source.responsibilities.mean(axis=0)


def feedforward_scales(state: ModelState, zeta_bar: np.ndarray | None = None) -> np.ndarray:
    """Per-feature posterior variances of the feedforward encoding map.

    scale_k = 1 / (E[phi] E[G_k^T G_k] + sum_j zbar_kj E[s_kj^-1]), with the
    responsibilities frozen to their training-time average by default.
    """
    if zeta_bar is None:
        zeta_bar = mean_responsibilities(state)
    denom = (
        state.expected_phi() * state.loading.loading_second_moment().sum(axis=0)
        + np.sum(zeta_bar * state.expected_scale_inv(), axis=1)
    )
    return 1.0 / denom


def feedforward_encode(
    state: ModelState, X: np.ndarray, scales: np.ndarray | None = None
) -> np.ndarray:
    """Linear feedforward feature map: scale_k * E[phi] * E[G_k]^T x.

    This is the source-mean update applied to raw inputs with frozen scales;
    no iterative inference is involved, so the map is linear in x.
    """
    if scales is None:
        scales = feedforward_scales(state)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != state.n_dims:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match model dimension {state.n_dims}"
        )
    return (X @ state.loading.loading_mean()) * (state.expected_phi() * scales)[None, :]


def _refresh_source_posterior(state: ModelState, X: np.ndarray) -> None:
    """Recompute source variances and set means to the feedforward encoding.

    Run once after convergence so the stored per-sample posterior means are
    exactly reproducible by the feature-generation path under the stored
    responsibilities' scales.
    """
    e_phi = state.expected_phi()
    e_g2_col = state.loading.loading_second_moment().sum(axis=0)
    scale_term = np.einsum(
        "nkj,kj->nk", state.source.responsibilities, state.expected_scale_inv()
    )
    state.source.variance = 1.0 / (e_phi * e_g2_col[None, :] + scale_term)
    state.source.mean = state.source.variance * e_phi * (X @ state.loading.loading_mean())


def run_inference(
    X: np.ndarray, hp: Hyperparameters, config: InferenceConfig
) -> tuple[ModelState, InferenceTrace]:
    """Fit the model to X; returns the final state and per-iteration traces.

    Converges when the relative lower-bound change between consecutive
    iterations without feature-count changes falls below the tolerance.
    """
    X = np.asarray(X, dtype=np.float64)
    state = init_model(X, hp, config.K_init, RngStream(config.seed, 0))
    # One source/loading refinement pass before the first activity update:
    # from the raw prior state the optimal activity is all-off (the slab
    # variance penalty dominates before the slabs tighten to data), which
    # would prune the model to a single feature immediately.
    update_sources(state, X, config.updates)
    update_loadings(state, X, config.updates)
    mode = config.updates
    D = state.n_dims
    mh_streams = [RngStream(config.seed, d + 1) for d in range(D)]

    trace = InferenceTrace()
    previous = trace.record(state, X, accepted=False, pruned=False)

    for iteration in range(config.max_iter):
        try:
            accepted_any = False
            if config.sample_feature_counts:
                for d in range(D):
                    result = mh_feature_step(state, X, d, mh_streams[d])
                    state = result.state
                    accepted_any = accepted_any or result.accepted
            update_activity(state, X, mode)
            update_sources(state, X, mode)
            update_responsibilities(state)
            update_mixture_weights(state)
            update_scales(state)
            update_lambda(state, mode)
            update_sticks(state, mode)
            update_phi(state, X, mode)
            update_loadings(state, X, mode)
            k_before = state.n_features
            state = prune_features(state, config.prune_threshold)
            pruned = state.n_features != k_before
        except NumericalError as exc:
            raise NumericalError(f"iteration {iteration + 1}: {exc}") from exc

        value = trace.record(state, X, accepted=accepted_any, pruned=pruned)
        stable = not accepted_any and not pruned
        if stable and abs(value - previous) <= config.tolerance * max(1.0, abs(previous)):
            break
        previous = value

    _refresh_source_posterior(state, X)
    return state, trace
