"""Channel scheduling policies.

Implements the oracle and random baselines, the exponential-weights
super-arm scheduler (M-Exp3), combinatorial UCB with a generalized
likelihood-ratio restart test (GLR-CUCB), and the AoI-aware wrapper that
switches to pure exploitation when client ages run high.

These classes are the readable, step-by-step implementations; the fused
per-episode loops in :mod:`aoisched.kernels` replicate them exactly (pinned
by parity tests) for long-horizon runs. Both paths share the same low-level
helpers, tie rules (lower channel index first) and rotation rule: client j
gets the ``(j + t) mod M``-th best channel of the selected set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import kernels
from ._jit import NUMBA_ENABLED

KL_EPS = 1e-9
SUPER_ARM_CAP = 100_000


# ---------------------------------------------------------------------------
# pure helpers


def kl_bernoulli(p, q):
    """Binary KL divergence with q clamped away from {0, 1} and 0*ln(0) = 0."""
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.clip(np.asarray(q, dtype=np.float64), KL_EPS, 1.0 - KL_EPS)
    p_arr, q_arr = np.broadcast_arrays(p_arr, q_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(p_arr > 0.0, p_arr * np.log(p_arr / q_arr), 0.0)
        t2 = np.where(
            p_arr < 1.0, (1.0 - p_arr) * np.log((1.0 - p_arr) / (1.0 - q_arr)), 0.0
        )
    out = t1 + t2
    if out.ndim == 0:
        return float(out)
    return out


def glr_threshold(n: int, delta: float) -> float:
    """Detection threshold (1 + 1/n) * ln(3 n sqrt(n) / delta)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (1.0 + 1.0 / n) * math.log(3.0 * n * math.sqrt(n) / delta)


def glr_statistic(samples) -> float:
    """Sup over split points s of s*kl(mean_{1:s}, mean_all) + (n-s)*kl(mean_{s+1:n}, mean_all).

    Vectorized reference implementation; the table-based kernel used inside
    the episode loops computes the same value (up to the q-clamping epsilon).
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return 0.0
    csum = np.cumsum(x)
    total = csum[-1]
    s = np.arange(1, n, dtype=np.float64)
    mu_all = total / n
    mu1 = csum[:-1] / s
    mu2 = (total - csum[:-1]) / (n - s)
    stat = s * kl_bernoulli(mu1, mu_all) + (n - s) * kl_bernoulli(mu2, mu_all)
    return float(stat.max())


def glr_change_detected(samples, delta: float) -> bool:
    x = np.asarray(samples)
    if x.shape[0] < 2:
        return False
    return glr_statistic(x) >= glr_threshold(x.shape[0], delta)


def glr_first_detection(samples, delta: float):
    """Smallest sample count at which the online GLR test fires, else None."""
    x = np.asarray(samples, dtype=np.int64)
    if NUMBA_ENABLED:
        table = kernels.xlogx_table(x.shape[0])
        hit = kernels.glr_first_detection_nb(x, delta, table)
        return None if hit < 0 else int(hit)
    for n in range(2, x.shape[0] + 1):
        if glr_change_detected(x[:n], delta):
            return n
    return None


def rank_desc(scores) -> np.ndarray:
    """Indices sorted by score descending, ties broken by lower index."""
    return kernels.argsort_desc(np.asarray(scores, dtype=np.float64))


# ---------------------------------------------------------------------------
# assignments


@dataclass(frozen=True)
class Assignment:
    """Injective client -> channel map; ``channel_of[j]`` is client j's channel."""

    channel_of: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channel_of, dtype=np.int64)
        object.__setattr__(self, "channel_of", ch)
        if len(np.unique(ch)) != ch.shape[0]:
            raise ValueError("assignment maps two clients to one channel")

    @property
    def n_clients(self) -> int:
        return self.channel_of.shape[0]

    def success_set(self, states_row) -> np.ndarray:
        """Client indices whose assigned channel realized Good."""
        states_row = np.asarray(states_row)
        return np.nonzero(states_row[self.channel_of] == 1)[0]


def rotate_assignment(ranked_channels, t: int) -> Assignment:
    """Client j gets the ((j + t) mod M)-th entry of the best-first ranking."""
    ranked = np.asarray(ranked_channels, dtype=np.int64)
    m = ranked.shape[0]
    idx = (np.arange(m) + t) % m
    return Assignment(channel_of=ranked[idx])


def oracle_select(true_means, n_clients: int, t: int):
    """Top-M channels by true mean (ties to lower index) with rotation."""
    means = np.asarray(true_means, dtype=np.float64)
    if means.shape[0] < n_clients:
        raise ValueError("need at least as many channels as clients")
    ranked = rank_desc(means)[:n_clients]
    return ranked, rotate_assignment(ranked, t)


def random_select(n_channels: int, n_clients: int, rng: np.random.Generator):
    """Uniform M-subset and uniform client bijection; consumes M uniforms."""
    if n_channels < n_clients:
        raise ValueError("need at least as many channels as clients")
    u = rng.random(n_clients)
    chosen, _ = kernels.sample_distinct(n_channels, n_clients, u, 0)
    return Assignment(channel_of=chosen)


def enumerate_super_arms(n_channels: int, n_clients: int) -> np.ndarray:
    """All M-subsets of channels in lexicographic order, shape (C, M)."""
    if n_channels < n_clients or n_clients < 1:
        raise ValueError("need n_channels >= n_clients >= 1")
    count = math.comb(n_channels, n_clients)
    if count > SUPER_ARM_CAP:
        raise ValueError(
            f"C({n_channels},{n_clients}) = {count} super-arms exceeds the "
            f"{SUPER_ARM_CAP} cap; this scheduler targets small systems"
        )
    return np.array(list(combinations(range(n_channels), n_clients)), dtype=np.int64)


@dataclass
class SelectionResult:
    """One round's decision: selected channels ranked best-first + assignment."""

    ranked: np.ndarray
    assignment: Assignment
    combo_index: int = -1  # super-arm index (M-Exp3 only)
    exploited: bool = False  # AoI-aware exploitation bypass taken


# ---------------------------------------------------------------------------
# M-Exp3


class MExp3Scheduler:
    """Exponential weights over enumerated channel M-subsets (super-arms).

    Weights start at 1; the played combo's weight is multiplied by
    exp(gamma * importance-weighted reward / C) and all weights are rescaled
    by their maximum afterwards, which leaves the distribution unchanged and
    prevents overflow.
    """

    def __init__(self, n_channels: int, n_clients: int, gamma: float):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        self.n_channels = n_channels
        self.n_clients = n_clients
        self.gamma = gamma
        self.combos = enumerate_super_arms(n_channels, n_clients)
        self.n_combos = self.combos.shape[0]
        self.weights = np.ones(self.n_combos, dtype=np.float64)
        self.succ = np.zeros(n_channels, dtype=np.float64)
        self.cnt = np.zeros(n_channels, dtype=np.int64)
        self.last_probs = self.probabilities()

    def probabilities(self) -> np.ndarray:
        p = (1.0 - self.gamma) * self.weights / self.weights.sum()
        return p + self.gamma / self.n_combos

    def historical_means(self) -> np.ndarray:
        """Per-channel observed mean; -1 marks never-observed channels."""
        out = np.full(self.n_channels, -1.0)
        seen = self.cnt > 0
        out[seen] = self.succ[seen] / self.cnt[seen]
        return out

    def rank_combo(self, combo) -> np.ndarray:
        """Combo channels ordered by empirical mean, unobserved last."""
        combo = np.asarray(combo, dtype=np.int64)
        scores = self.historical_means()[combo]
        return combo[kernels.argsort_desc(scores)]

    def select(self, rng: np.random.Generator, t: int) -> SelectionResult:
        probs = self.probabilities()
        self.last_probs = probs
        idx = int(kernels.draw_categorical(probs, float(rng.random())))
        ranked = self.rank_combo(self.combos[idx])
        return SelectionResult(
            ranked=ranked, assignment=rotate_assignment(ranked, t), combo_index=idx
        )

    def update(self, combo_index: int, rewards) -> None:
        """Feed the realized 0/1 states of the played combo's channels.

        ``rewards`` maps channel -> state for exactly that combo.
        """
        combo = self.combos[combo_index]
        x = 0.0
        for ch in combo:
            s = float(rewards[int(ch)])
            x += s
            self.succ[ch] += s
            self.cnt[ch] += 1
        p = float(self.probabilities()[combo_index])
        xhat = x / p
        self.weights[combo_index] *= math.exp(self.gamma * xhat / self.n_combos)
        self.weights /= self.weights.max()


# ---------------------------------------------------------------------------
# GLR-CUCB


class GlrCucbScheduler:
    """Combinatorial UCB with a generalized-likelihood-ratio restart test.

    Every ``floor(N / alpha)`` rounds a short forced-exploration window pulls
    each channel once inside a random M-subset. Otherwise the M channels with
    the largest UCB values are selected (infinite UCB while unpulled). After
    each pull the per-channel observation stream since the last restart is
    scanned over all split points; a detection clears all counts and moves
    the restart marker to the current round.
    """

    def __init__(self, n_channels: int, n_clients: int, alpha: float, delta: float):
        if n_channels < n_clients:
            raise ValueError("need at least as many channels as clients")
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        if alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        self.n_channels = n_channels
        self.n_clients = n_clients
        self.alpha = alpha
        self.delta = delta
        self.mu = np.zeros(n_channels, dtype=np.float64)
        self.pulls = np.zeros(n_channels, dtype=np.int64)
        self.tau = 0
        self.samples = [[] for _ in range(n_channels)]
        if alpha > 0.0:
            self.cycle = max(int(n_channels / alpha), n_channels + 1)
        else:
            self.cycle = 0

    def ucb_values(self, t: int) -> np.ndarray:
        return kernels.ucb_values(self.mu, self.pulls, t - self.tau)

    def forced_channel(self, t: int) -> int:
        """Channel index forced this round, or -1."""
        if self.cycle == 0:
            return -1
        pos = (t - self.tau) % self.cycle
        if 1 <= pos <= self.n_channels:
            return pos - 1
        return -1

    def historical_means(self) -> np.ndarray:
        return self.mu.copy()

    def select(self, rng: np.random.Generator, t: int) -> SelectionResult:
        ucb = self.ucb_values(t)
        forced = self.forced_channel(t)
        if forced >= 0:
            u = rng.random(self.n_clients - 1)
            chosen, _ = kernels.sample_subset_with(
                forced, self.n_channels, self.n_clients, u, 0
            )
            chosen = np.sort(chosen)  # UCB tie -> lower channel index
            ranked = chosen[kernels.argsort_desc(ucb[chosen])]
        else:
            ranked = rank_desc(ucb)[: self.n_clients]
        return SelectionResult(ranked=ranked, assignment=rotate_assignment(ranked, t))

    def update(self, channels, rewards, t: int) -> bool:
        """Record pulls, run the change detector, restart on detection."""
        for ch in channels:
            ch = int(ch)
            x = int(rewards[ch])
            self.mu[ch] = (self.mu[ch] * self.pulls[ch] + x) / (self.pulls[ch] + 1)
            self.pulls[ch] += 1
            self.samples[ch].append(x)
        restart = False
        for ch in channels:
            ch = int(ch)
            if self.pulls[ch] < 2:
                continue
            if glr_change_detected(self.samples[ch], self.delta):
                restart = True
                break
        if restart:
            self.restart(t)
        return restart

    def restart(self, t: int) -> None:
        self.mu[:] = 0.0
        self.pulls[:] = 0
        self.samples = [[] for _ in range(self.n_channels)]
        self.tau = t


# ---------------------------------------------------------------------------
# AoI-aware wrapper


class AoiAwareScheduler:
    """Exploitation bypass on top of M-Exp3 or GLR-CUCB.

    When the total client age exceeds M / max(historical means), the base
    draw is skipped and the M channels with the highest historical success
    rates are scheduled (standard rotation). The base scheduler's learning
    state is still updated from the observed rewards either way. While no
    channel has a positive historical mean the threshold is undefined and the
    wrapper always delegates.
    """

    def __init__(self, base):
        self.base = base
        self.n_clients = base.n_clients
        self.n_channels = base.n_channels

    def should_exploit(self, ages) -> bool:
        mu_max = float(self.base.historical_means().max())
        if mu_max <= 0.0:
            return False
        return float(np.sum(ages)) > self.n_clients / mu_max

    def select(self, rng: np.random.Generator, t: int, ages) -> SelectionResult:
        if not self.should_exploit(ages):
            res = self.base.select(rng, t)
            res.exploited = False
            return res
        scores = self.base.historical_means()
        ranked = rank_desc(scores)[: self.n_clients]
        combo_index = -1
        if isinstance(self.base, MExp3Scheduler):
            combo_index = int(kernels.combo_rank(np.sort(ranked), self.n_channels))
        return SelectionResult(
            ranked=ranked,
            assignment=rotate_assignment(ranked, t),
            combo_index=combo_index,
            exploited=True,
        )

    def update(self, result: SelectionResult, rewards, t: int) -> bool:
        if isinstance(self.base, MExp3Scheduler):
            self.base.update(result.combo_index, rewards)
            return False
        return self.base.update(result.ranked, rewards, t)
