"""Per-dimension Metropolis-Hastings step on the number of latent features.

For each observed dimension d, a Poisson-distributed count of new features is
proposed (rate E[alpha]/(D-1)), with candidate loading-row entries sampled
from the slab prior.  The proposal is accepted with probability
min{1, theta_star / theta}, where both factors are collapsed Gaussian
quantities over the proposed (resp. currently active) features of that row,
evaluated in the log domain via Cholesky factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .randomness import RngStream, sample_poisson
from .state import ACTIVE_THRESHOLD, ModelState, NumericalError, append_features

__all__ = [
    "MHProposal",
    "MHResult",
    "proposal_rate",
    "log_theta_star",
    "log_theta_current",
    "mh_feature_step",
]


@dataclass
class MHProposal:
    """Diagnostic record of one proposal evaluation."""

    count: int
    loadings_star: np.ndarray   # (count,)
    M_star: np.ndarray          # (count, count)
    m_star: np.ndarray          # (N, count)
    M_cur: np.ndarray           # (K_d, K_d)
    m_cur: np.ndarray           # (N, K_d)
    log_theta_star: float
    log_theta_cur: float


@dataclass
class MHResult:
    accepted: bool
    count: int
    state: ModelState
    proposal: MHProposal | None


def proposal_rate(state: ModelState) -> float:
    """Poisson rate of the new-feature proposal: E[alpha] / (D - 1)."""
    return state.expected_alpha() / max(state.n_dims - 1, 1)


def _collapsed_log_theta(
    e_phi: float, row: np.ndarray, second_moment: np.ndarray, resid: np.ndarray
):
    """log |M|^(-N/2) + 1/2 sum_n m_n^T M m_n for one feature block.

    M = e_phi * second_moment + I and m_n = e_phi * M^{-1} row * resid_n.
    Returns (log_theta, M, m) with m of shape (N, p).
    """
    p = row.size
    n = resid.size
    if p == 0:
        return 0.0, np.zeros((0, 0)), np.zeros((n, 0))
    M = e_phi * second_moment + np.eye(p)
    if not np.all(np.isfinite(M)):
        raise NumericalError("collapsed moment matrix contains non-finite entries")
    try:
        cho = scipy.linalg.cho_factor(M, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("collapsed moment matrix is not positive definite") from exc
    log_det = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    solved = scipy.linalg.cho_solve(cho, row)
    m = e_phi * resid[:, None] * solved[None, :]
    quad = (e_phi ** 2) * float(resid @ resid) * float(row @ solved)
    return -0.5 * n * log_det + 0.5 * quad, M, m


def log_theta_star(
    state: ModelState, X: np.ndarray, d: int, loadings_star: np.ndarray
):
    """Collapsed factor of the proposed new features for dimension d."""
    resid = X[:, d] - state.source.mean @ state.loading.loading_mean()[d, :]
    row = np.asarray(loadings_star, dtype=np.float64).ravel()
    return _collapsed_log_theta(state.expected_phi(), row, np.outer(row, row), resid)


def log_theta_current(state: ModelState, X: np.ndarray, d: int):
    """Collapsed factor of the currently active features for dimension d."""
    e_g = state.loading.loading_mean()
    e_g2 = state.loading.loading_second_moment()
    resid = X[:, d] - state.source.mean @ e_g[d, :]
    active = np.flatnonzero(state.loading.activity[d, :] > ACTIVE_THRESHOLD)
    row = e_g[d, active]
    second = np.outer(row, row)
    np.fill_diagonal(second, e_g2[d, active])
    return _collapsed_log_theta(state.expected_phi(), row, second, resid)


def mh_feature_step(
    state: ModelState, X: np.ndarray, d: int, rng: RngStream
) -> MHResult:
    """Propose and possibly accept new features for dimension d.

    A zero proposal count is a no-op that reports a rejection.  On
    acceptance the new columns are appended to every posterior block; the
    input state is never mutated.
    """
    count = sample_poisson(proposal_rate(state), rng)
    if count == 0:
        return MHResult(accepted=False, count=0, state=state, proposal=None)

    # Candidate loading-row entries from the slab prior, with the prior-mean
    # precision standing in for the not-yet-instantiated feature precisions.
    slab_std = np.sqrt(state.hp.f / state.hp.c)
    loadings = rng.normal(0.0, slab_std, size=count)

    lt_star, m_mat_star, m_star = log_theta_star(state, X, d, loadings)
    lt_cur, m_mat_cur, m_cur = log_theta_current(state, X, d)
    proposal = MHProposal(
        count=count,
        loadings_star=loadings,
        M_star=m_mat_star,
        m_star=m_star,
        M_cur=m_mat_cur,
        m_cur=m_cur,
        log_theta_star=lt_star,
        log_theta_cur=lt_cur,
    )
    log_ratio = lt_star - lt_cur
    u = rng.random()
    accepted = log_ratio >= 0.0 or u < np.exp(log_ratio)
    if not accepted:
        return MHResult(accepted=False, count=count, state=state, proposal=proposal)
    new_state = append_features(state, d, loadings)
    return MHResult(accepted=True, count=count, state=new_state, proposal=proposal)
