"""Adaptive client-to-channel matching.

Ranks the scheduled channels (UCB values or historical means), scores each
client by a convex blend of estimated marginal contribution and normalized
age, and hands the best channels to the highest-priority clients. Also
provides the contribution-proportional aggregation weights used by the
federated update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .aoi import aoi_variance
from .policy import Assignment, GlrCucbScheduler


@dataclass(frozen=True)
class ChannelRanking:
    """Channels ordered best-first with the scores that produced the order."""

    order: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        # plain comparison (no subtraction): UCB scores may be +inf
        if np.any(self.scores[:-1] < self.scores[1:]):
            raise ValueError("ranking scores must be non-increasing")


def rank_channels_ucb(sched: GlrCucbScheduler, selected, t: int) -> ChannelRanking:
    """Order the selected channels by their current UCB values."""
    selected = np.sort(np.asarray(selected, dtype=np.int64))  # tie -> lower index
    ucb = sched.ucb_values(t)[selected]
    order = kernels.argsort_desc(ucb)
    return ChannelRanking(order=selected[order], scores=ucb[order])


def rank_channels_mean(historical_means, selected) -> ChannelRanking:
    """Order the selected channels by historical mean.

    ``historical_means`` uses -1 as the never-observed sentinel, so channels
    without observations rank last (index order among themselves).
    """
    selected = np.sort(np.asarray(selected, dtype=np.int64))  # tie -> lower index
    means = np.asarray(historical_means, dtype=np.float64)[selected]
    order = kernels.argsort_desc(means)
    return ChannelRanking(order=selected[order], scores=means[order])


class ContributionTracker:
    """Server-side buffers and marginal-contribution estimates.

    Keeps each client's most recently received gradient and model, plus the
    aggregation weight it carried at that time; those reconstruct the
    leave-one-out global gradient/model for the cosine and validation-error
    terms. Before a client's first successful upload its score is the
    neutral 1/M.
    """

    def __init__(self, n_clients: int, dim: int):
        self.n_clients = n_clients
        self.dim = dim
        self.grad_buf = np.zeros((n_clients, dim))
        self.model_buf = np.zeros((n_clients, dim))
        self.has_buffer = np.zeros(n_clients, dtype=bool)
        self.refresh_round = np.full(n_clients, -1, dtype=np.int64)
        self.last_zeta = np.zeros(n_clients)

    def update_buffer(self, m: int, gradient, model, t: int) -> None:
        """Overwrite client m's buffers after a successful transmission."""
        self.grad_buf[m] = np.asarray(gradient, dtype=np.float64).ravel()
        self.model_buf[m] = np.asarray(model, dtype=np.float64).ravel()
        self.has_buffer[m] = True
        self.refresh_round[m] = t

    def marginal_contribution(
        self, m: int, global_grad, global_model, zeta_m: float, val_loss_fn
    ) -> float:
        """Raw score: gradient-cosine dissimilarity times leave-one-out loss."""
        if zeta_m >= 1.0:
            raise ValueError("aggregation weight 1 leaves no other contributors")
        g = np.asarray(global_grad, dtype=np.float64).ravel()
        w = np.asarray(global_model, dtype=np.float64).ravel()
        g_loo = (g - zeta_m * self.grad_buf[m]) / (1.0 - zeta_m)
        w_loo = (w - zeta_m * self.model_buf[m]) / (1.0 - zeta_m)
        gamma_cos = 1.0 - _cosine(self.grad_buf[m], g_loo)
        gamma_err = float(val_loss_fn(w_loo))
        return gamma_cos * gamma_err

    def raw_scores(self, global_grad, global_model, val_loss_fn) -> np.ndarray:
        """Raw contribution per client; 1/M for clients never heard from.

        A client that was the sole participant of the last aggregation
        carries weight 1, leaving nothing to compare against; it keeps the
        neutral score until others contribute again.
        """
        out = np.full(self.n_clients, 1.0 / self.n_clients)
        for m in range(self.n_clients):
            if self.has_buffer[m] and self.last_zeta[m] < 1.0:
                out[m] = self.marginal_contribution(
                    m, global_grad, global_model, float(self.last_zeta[m]), val_loss_fn
                )
        return out


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    # zero-gradient convention: treat as orthogonal, i.e. cos = 0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    # clamp: rounding may push |cos| past 1, which would make scores negative
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalize_scores(raw) -> np.ndarray:
    """Min-max normalization to [0, 1]; all-equal inputs map to 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 0.0:
        return np.full(raw.shape, 0.5)
    return (raw - lo) / (hi - lo)


@dataclass
class FairnessBlend:
    beta_t: float
    age_norm: np.ndarray
    variance_norm: float


class FairnessTracker:
    """Running normalizers for the AoI-variance fairness blend.

    beta_t = beta * V_t / max_{tau<=t} V_tau, and each age is normalized by
    the largest age seen so far (both maxima include the current round).
    """

    def __init__(self, beta: float):
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        self.beta = beta
        self.max_variance = 0.0
        self.max_age = 1.0

    def blend(self, ages) -> FairnessBlend:
        ages = np.asarray(ages, dtype=np.float64)
        v = aoi_variance(ages)
        self.max_variance = max(self.max_variance, v)
        self.max_age = max(self.max_age, float(ages.max()))
        v_norm = v / self.max_variance if self.max_variance > 0.0 else 0.0
        return FairnessBlend(
            beta_t=self.beta * v_norm,
            age_norm=ages / self.max_age,
            variance_norm=v_norm,
        )


def priority(contrib_norm, age_norm, beta_t: float) -> np.ndarray:
    """Convex blend lambda_i = (1 - beta_t) * C_i + beta_t * a_i."""
    c = np.asarray(contrib_norm, dtype=np.float64)
    a = np.asarray(age_norm, dtype=np.float64)
    return (1.0 - beta_t) * c + beta_t * a


def match_clients(ranking: ChannelRanking, priorities) -> Assignment:
    """Give the i-th ranked channel to the client with the i-th highest priority."""
    lam = np.asarray(priorities, dtype=np.float64)
    if lam.shape[0] != ranking.order.shape[0]:
        raise ValueError("need one priority per ranked channel")
    client_order = kernels.argsort_desc(lam)
    channel_of = np.empty(lam.shape[0], dtype=np.int64)
    channel_of[client_order] = ranking.order
    return Assignment(channel_of=channel_of)


def aggregation_weights(raw_scores, success_set, n_clients: int) -> np.ndarray:
    """Contribution-proportional weights renormalized over the success set.

    Returns a length-M vector: zeros outside the success set, entries summing
    to 1 inside it; the all-zero degenerate case falls back to uniform.
    """
    success = np.asarray(list(success_set), dtype=np.int64)
    if success.size == 0:
        raise ValueError("empty success set: skip aggregation this round")
    raw = np.asarray(raw_scores, dtype=np.float64)
    if np.any(raw < 0.0):
        raise ValueError("contribution scores must be non-negative")
    zeta = np.zeros(n_clients)
    denom = raw[success].sum()
    if denom > 0.0:
        zeta[success] = raw[success] / denom
    else:
        zeta[success] = 1.0 / success.size
    return zeta
