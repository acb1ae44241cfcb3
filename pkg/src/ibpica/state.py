"""Model state for nonparametric Bayesian sparse ICA.

The generative model: observations x_n = G y_n + noise, with a spike-and-slab
prior on each loading g_dk driven by stick-breaking IBP feature-activity
indicators z_dk, mixture-of-Gaussians source priors on y_nk, and Gamma priors
on all precisions.  The variational posterior factorizes per the mean-field
assumption; this module holds its parameters and the bookkeeping that grows
and shrinks the feature set.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .randomness import RngStream
from .special import digamma

__all__ = [
    "Hyperparameters",
    "LoadingPosterior",
    "SourcePosterior",
    "StickState",
    "GlobalPrecisions",
    "ModelState",
    "FeatureCounts",
    "ConfigurationError",
    "NumericalError",
    "init_model",
    "feature_counts",
    "prune_features",
    "append_features",
]

ACTIVE_THRESHOLD = 0.5  # Bernoulli MAP: a feature is "active" for a dimension above this.

# Geometric stagger applied to the initial mixture scale rates.  Identical
# components are a symmetric fixed point of the responsibility updates (they
# would never differentiate), so the source prior would stay effectively
# Gaussian and leave the ICA rotation unresolved.
MIXTURE_SCALE_SPREAD = 4.0


class ConfigurationError(ValueError):
    """Invalid run configuration or input data."""


class NumericalError(RuntimeError):
    """A posterior update produced a numerically invalid quantity."""


@dataclass
class Hyperparameters:
    """Prior hyperparameters; all strictly positive.

    a, b          Gamma prior on the noise precision.
    c, f          Gamma prior on the per-feature loading precisions.
    gamma1/2      Gamma prior on the IBP innovation rate.
    eta1/2        Gamma prior on the source mixture inverse variances.
    xi            Dirichlet concentration per mixture component.
    J             number of source mixture components.
    """

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    f: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0
    xi: float | None = None
    J: int = 2

    def __post_init__(self):
        if self.xi is None:
            self.xi = 1.0 / self.J
        for name in ("a", "b", "c", "f", "gamma1", "gamma2", "eta1", "eta2", "xi"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"hyperparameter {name} must be positive")
        if self.J < 1:
            raise ConfigurationError("J must be at least 1")

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.a, self.b, self.c, self.f, self.gamma1, self.gamma2,
             self.eta1, self.eta2, self.xi], dtype=np.float64
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray, J: int) -> "Hyperparameters":
        a, b, c, f, g1, g2, e1, e2, xi = (float(v) for v in vec)
        return cls(a=a, b=b, c=c, f=f, gamma1=g1, gamma2=g2, eta1=e1, eta2=e2, xi=xi, J=J)


@dataclass
class LoadingPosterior:
    """Spike-and-slab posterior over the loading matrix.

    activity[d, k] is q(z_dk = 1); mean[d, k] and precision[k] parameterize
    the slab component, the spike being a point mass at zero.
    """

    activity: np.ndarray  # (D, K) in [0, 1]
    mean: np.ndarray      # (D, K)
    precision: np.ndarray  # (K,) > 0, shared across dimensions

    @property
    def n_dims(self) -> int:
        return self.activity.shape[0]

    @property
    def n_features(self) -> int:
        return self.activity.shape[1]

    def loading_mean(self) -> np.ndarray:
        """E[g_dk] = activity * slab mean."""
        return self.activity * self.mean

    def loading_second_moment(self) -> np.ndarray:
        """E[g_dk^2] = activity * (slab mean^2 + slab variance)."""
        return self.activity * (self.mean ** 2 + 1.0 / self.precision[None, :])


@dataclass
class SourcePosterior:
    """Per-sample Gaussian posteriors over latent sources, plus the
    mixture bookkeeping of the source prior."""

    mean: np.ndarray              # (N, K)
    variance: np.ndarray          # (N, K) > 0
    responsibilities: np.ndarray  # (N, K, J), rows sum to 1 over j
    mixture_weights: np.ndarray   # (K, J) Dirichlet parameters
    scale_shape: np.ndarray       # (K, J) Gamma shape of inverse variances
    scale_rate: np.ndarray        # (K, J) Gamma rate

    @property
    def n_samples(self) -> int:
        return self.mean.shape[0]

    def second_moment(self) -> np.ndarray:
        """E[y_nk^2] = mean^2 + variance."""
        return self.mean ** 2 + self.variance


@dataclass
class StickState:
    """Beta posteriors over the stick variables and derived quantities.

    q_weights is the normalized multinomial-bound weight vector used to
    approximate E[log(1 - prod v)]; alpha_* parameterize the Gamma posterior
    of the IBP innovation rate.
    """

    tau_tilde: np.ndarray  # (K,) > 0
    tau_hat: np.ndarray    # (K,) > 0
    q_weights: np.ndarray  # (K,) simplex
    alpha_shape: float
    alpha_rate: float


@dataclass
class GlobalPrecisions:
    """Gamma posteriors over loading precisions and the noise precision."""

    lambda_shape: np.ndarray  # (K,)
    lambda_rate: np.ndarray   # (K,)
    phi_shape: float
    phi_rate: float


@dataclass
class FeatureCounts:
    """Active-feature counts per dimension and their maximum."""

    per_dim_active: np.ndarray  # (D,) ints
    K: int


@dataclass
class ModelState:
    """Aggregate variational state of one factor model.

    A state has a single writer.  Updates within one phase may be evaluated
    in parallel across their independent index (samples or dimensions) and
    merged, but phases never overlap.
    """

    hp: Hyperparameters
    loading: LoadingPosterior
    source: SourcePosterior
    sticks: StickState
    prec: GlobalPrecisions

    @property
    def n_features(self) -> int:
        return self.loading.n_features

    @property
    def n_dims(self) -> int:
        return self.loading.n_dims

    @property
    def n_samples(self) -> int:
        return self.source.n_samples

    # Expectations used across the update equations.

    def expected_phi(self) -> float:
        return self.prec.phi_shape / self.prec.phi_rate

    def expected_log_phi(self) -> float:
        return float(digamma(self.prec.phi_shape)) - np.log(self.prec.phi_rate)

    def expected_lambda(self) -> np.ndarray:
        return self.prec.lambda_shape / self.prec.lambda_rate

    def expected_log_lambda(self) -> np.ndarray:
        return digamma(self.prec.lambda_shape) - np.log(self.prec.lambda_rate)

    def expected_scale_inv(self) -> np.ndarray:
        return self.source.scale_shape / self.source.scale_rate

    def expected_log_scale_inv(self) -> np.ndarray:
        return digamma(self.source.scale_shape) - np.log(self.source.scale_rate)

    def expected_log_mixture(self) -> np.ndarray:
        xi = self.source.mixture_weights
        return digamma(xi) - digamma(xi.sum(axis=1, keepdims=True))

    def expected_log_v(self) -> np.ndarray:
        return digamma(self.sticks.tau_tilde) - digamma(
            self.sticks.tau_tilde + self.sticks.tau_hat
        )

    def expected_log_one_minus_v(self) -> np.ndarray:
        return digamma(self.sticks.tau_hat) - digamma(
            self.sticks.tau_tilde + self.sticks.tau_hat
        )

    def expected_alpha(self) -> float:
        return self.sticks.alpha_shape / self.sticks.alpha_rate

    def expected_log_alpha(self) -> float:
        return float(digamma(self.sticks.alpha_shape)) - np.log(self.sticks.alpha_rate)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)


def stick_bound_log_weights(tau_tilde: np.ndarray, tau_hat: np.ndarray) -> np.ndarray:
    """Unnormalized log weights of the multinomial lower bound.

    Entry i is E[log(1 - v_i)] + sum_{m<i} E[log v_m]; normalizing the first
    k+1 entries gives the optimal bound weights for feature k, and
    normalizing all entries gives the stored q_weights vector.
    """
    log_v = digamma(tau_tilde) - digamma(tau_tilde + tau_hat)
    log_1mv = digamma(tau_hat) - digamma(tau_tilde + tau_hat)
    prefix = np.concatenate(([0.0], np.cumsum(log_v)[:-1]))
    return log_1mv + prefix


def normalized_q_weights(tau_tilde: np.ndarray, tau_hat: np.ndarray) -> np.ndarray:
    ell = stick_bound_log_weights(tau_tilde, tau_hat)
    w = np.exp(ell - ell.max())
    return w / w.sum()


def prior_stick_activity(hp: Hyperparameters, n_features: int) -> np.ndarray:
    """E[pi_k] under the prior sticks: (E[v])^k with E[v] = abar/(abar+1)."""
    abar = hp.gamma1 / hp.gamma2
    ev = abar / (abar + 1.0)
    return ev ** np.arange(1, n_features + 1)


def init_model(
    X: np.ndarray, hp: Hyperparameters, K_init: int, rng: RngStream
) -> ModelState:
    """Build the initial variational state.

    All factors start at their priors, except slab means (drawn from the
    prior-mean slab N(0, f/c)), feature activities (prior stick expectations)
    and the source means, which are warm-started with one projection of the
    data through the initial loadings.  A cold start with zero source means
    makes the very first activity update deactivate every feature, so the
    projection is required for the optimization to leave the trivial basin.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ConfigurationError("observation matrix must be 2-D and non-empty")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("observation matrix contains non-finite entries")
    if K_init < 1:
        raise ConfigurationError("K_init must be at least 1")
    N, D = X.shape
    K, J = int(K_init), hp.J

    slab_var = hp.f / hp.c
    mean = rng.normal(0.0, np.sqrt(slab_var), size=(D, K))
    activity = np.tile(prior_stick_activity(hp, K), (D, 1))
    precision = np.full(K, hp.c / hp.f)
    loading = LoadingPosterior(activity=activity, mean=mean, precision=precision)

    mixture_weights = np.full((K, J), hp.xi)
    scale_shape = np.full((K, J), hp.eta1)
    stagger = MIXTURE_SCALE_SPREAD ** (np.arange(J) - 0.5 * (J - 1))
    scale_rate = hp.eta2 * np.tile(stagger, (K, 1))
    responsibilities = np.full((N, K, J), 1.0 / J)

    e_phi = hp.a / hp.b
    e_scale_inv = (scale_shape / scale_rate).mean(axis=1)
    e_g = loading.loading_mean()
    e_g2 = loading.loading_second_moment()
    s_inv = e_phi * e_g2.sum(axis=0)[None, :] + e_scale_inv[None, :]
    variance = np.broadcast_to(1.0 / s_inv, (N, K)).copy()
    src_mean = variance * e_phi * (X @ e_g)
    source = SourcePosterior(
        mean=src_mean,
        variance=variance,
        responsibilities=responsibilities,
        mixture_weights=mixture_weights,
        scale_shape=scale_shape,
        scale_rate=scale_rate,
    )

    abar = hp.gamma1 / hp.gamma2
    tau_tilde = np.full(K, abar)
    tau_hat = np.ones(K)
    sticks = StickState(
        tau_tilde=tau_tilde,
        tau_hat=tau_hat,
        q_weights=normalized_q_weights(tau_tilde, tau_hat),
        alpha_shape=hp.gamma1,
        alpha_rate=hp.gamma2,
    )

    prec = GlobalPrecisions(
        lambda_shape=np.full(K, hp.c),
        lambda_rate=np.full(K, hp.f),
        phi_shape=hp.a,
        phi_rate=hp.b,
    )
    return ModelState(hp=hp, loading=loading, source=source, sticks=sticks, prec=prec)


def feature_counts(state: ModelState) -> FeatureCounts:
    """Count features active per dimension (activity above 0.5) and their max."""
    active = state.loading.activity > ACTIVE_THRESHOLD
    per_dim = active.sum(axis=1).astype(int)
    return FeatureCounts(per_dim_active=per_dim, K=int(per_dim.max()))


def prune_features(state: ModelState, threshold: float) -> ModelState:
    """Drop feature columns whose activity is below threshold in every dimension.

    At least one column is always retained: if the threshold would remove
    everything, the single best column survives.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError("prune threshold must lie strictly in (0, 1)")
    col_max = state.loading.activity.max(axis=0)
    keep = np.flatnonzero(col_max >= threshold)
    if keep.size == state.n_features:
        return state
    if keep.size == 0:
        keep = np.array([int(np.argmax(col_max))])
    return _select_columns(state, keep)


def _select_columns(state: ModelState, keep: np.ndarray) -> ModelState:
    ld = state.loading
    src = state.source
    st = state.sticks
    pr = state.prec
    tau_tilde = st.tau_tilde[keep]
    tau_hat = st.tau_hat[keep]
    return ModelState(
        hp=state.hp,
        loading=LoadingPosterior(
            activity=ld.activity[:, keep].copy(),
            mean=ld.mean[:, keep].copy(),
            precision=ld.precision[keep].copy(),
        ),
        source=SourcePosterior(
            mean=src.mean[:, keep].copy(),
            variance=src.variance[:, keep].copy(),
            responsibilities=src.responsibilities[:, keep, :].copy(),
            mixture_weights=src.mixture_weights[keep, :].copy(),
            scale_shape=src.scale_shape[keep, :].copy(),
            scale_rate=src.scale_rate[keep, :].copy(),
        ),
        sticks=StickState(
            tau_tilde=tau_tilde,
            tau_hat=tau_hat,
            q_weights=normalized_q_weights(tau_tilde, tau_hat),
            alpha_shape=st.alpha_shape,
            alpha_rate=st.alpha_rate,
        ),
        prec=GlobalPrecisions(
            lambda_shape=pr.lambda_shape[keep].copy(),
            lambda_rate=pr.lambda_rate[keep].copy(),
            phi_shape=pr.phi_shape,
            phi_rate=pr.phi_rate,
        ),
    )


def append_features(
    state: ModelState,
    d: int,
    slab_row: np.ndarray,
    rng_unused: RngStream | None = None,
) -> ModelState:
    """Append new feature columns accepted by the per-dimension MH step.

    The proposing dimension d starts with activity 1 and the sampled slab
    values as its slab means; every other dimension starts at the spike with
    the prior stick expectation as activity.  All remaining posterior blocks
    start at their priors, as in initialization.
    """
    count = int(np.asarray(slab_row).size)
    if count == 0:
        return state
    hp = state.hp
    D, K, N, J = state.n_dims, state.n_features, state.n_samples, hp.J

    new_activity = np.tile(
        prior_stick_activity(hp, K + count)[K:], (D, 1)
    )
    new_activity[d, :] = 1.0
    new_mean = np.zeros((D, count))
    new_mean[d, :] = np.asarray(slab_row, dtype=np.float64)

    ld = state.loading
    src = state.source
    st = state.sticks
    pr = state.prec
    abar = hp.gamma1 / hp.gamma2
    tau_tilde = np.concatenate([st.tau_tilde, np.full(count, abar)])
    tau_hat = np.concatenate([st.tau_hat, np.ones(count)])
    return ModelState(
        hp=hp,
        loading=LoadingPosterior(
            activity=np.hstack([ld.activity, new_activity]),
            mean=np.hstack([ld.mean, new_mean]),
            precision=np.concatenate([ld.precision, np.full(count, hp.c / hp.f)]),
        ),
        source=SourcePosterior(
            mean=np.hstack([src.mean, np.zeros((N, count))]),
            variance=np.hstack([src.variance, np.full((N, count), hp.eta2 / hp.eta1)]),
            responsibilities=np.concatenate(
                [src.responsibilities, np.full((N, count, J), 1.0 / J)], axis=1
            ),
            mixture_weights=np.vstack([src.mixture_weights, np.full((count, J), hp.xi)]),
            scale_shape=np.vstack([src.scale_shape, np.full((count, J), hp.eta1)]),
            scale_rate=np.vstack([src.scale_rate, np.full((count, J), hp.eta2)]),
        ),
        sticks=StickState(
            tau_tilde=tau_tilde,
            tau_hat=tau_hat,
            q_weights=normalized_q_weights(tau_tilde, tau_hat),
            alpha_shape=st.alpha_shape,
            alpha_rate=st.alpha_rate,
        ),
        prec=GlobalPrecisions(
            lambda_shape=np.concatenate([pr.lambda_shape, np.full(count, hp.c)]),
            lambda_rate=np.concatenate([pr.lambda_rate, np.full(count, hp.f)]),
            phi_shape=pr.phi_shape,
            phi_rate=pr.phi_rate,
        ),
    )
