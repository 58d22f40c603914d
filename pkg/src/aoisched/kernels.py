"""Hot numeric kernels for the bandit simulation loops.

Every function here is numba-compiled unless ``AOISCHED_NO_NUMBA=1``, in
which case the identical code runs under the plain interpreter (slow but
bit-for-bit equivalent). The fused episode kernels mirror the step-by-step
scheduler classes in :mod:`aoisched.policy`; parity between the two paths is
pinned by tests.

Conventions shared with the rest of the package:

* rounds t are 1-based; trace row ``t - 1`` holds the post-update ages a(t);
* client j of M receives the ``(j + t) mod M``-th best channel of the
  selected set (deterministic rotation, ties broken by lower channel index);
* policy randomness is consumed from a flat pre-drawn uniform array via a
  cursor, which makes kernel runs reproducible and lets the per-operation
  API consume the same stream through a Generator.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import njit

INF = np.inf


def xlogx_table(n: int) -> np.ndarray:
    """Table L[m] = m * ln(m) for m = 0..n (L[0] = 0), used by the GLR scan."""
    m = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1, dtype=np.float64)
    np.multiply(m[1:], np.log(m[1:]), out=out[1:])
    return out


@njit(cache=True)
def glr_stat_prefix(prefix, n, table):
    """Sup over split points of the two-sided binary KL statistic.

    ``prefix[k]`` is the number of ones among the first k samples
    (``prefix[0] == 0``); ``n`` is the number of samples. Exploits that for
    0/1 samples every segment mean is a ratio of integers, so each term
    reduces to lookups in the m*ln(m) table.
    """
    if n < 2:
        return 0.0
    sn = prefix[n]
    const = table[sn] + table[n - sn] - table[n]
    best = 0.0
    for s in range(1, n):
        k1 = prefix[s]
        a = table[k1] + table[s - k1] - table[s]
        k2 = sn - k1
        b = table[k2] + table[(n - s) - k2] - table[n - s]
        g = a + b - const
        if g > best:
            best = g
    return best


@njit(cache=True)
def glr_threshold_nb(n, delta):
    return (1.0 + 1.0 / n) * math.log(3.0 * n * math.sqrt(n) / delta)


@njit(cache=True)
def glr_first_detection_nb(samples, delta, table):
    """First sample count n at which the GLR test fires, or -1.

    Runs the detector online: after each new sample the full split scan is
    evaluated against the delta-calibrated threshold.
    """
    total = samples.shape[0]
    prefix = np.zeros(total + 1, dtype=np.int64)
    for i in range(total):
        prefix[i + 1] = prefix[i] + samples[i]
        n = i + 1
        if n < 2:
            continue
        stat = glr_stat_prefix(prefix, n, table)
        if stat >= glr_threshold_nb(n, delta):
            return n
    return -1


@njit(cache=True)
def argsort_desc(scores):
    """Indices sorted by score descending, lower index first on ties."""
    n = scores.shape[0]
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        order[i] = i
    # insertion sort keeps the tie rule explicit; n is small everywhere
    for i in range(1, n):
        cur = order[i]
        j = i - 1
        while j >= 0 and scores[order[j]] < scores[cur]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = cur
    return order


@njit(cache=True)
def sample_distinct(n, m, uniforms, cursor):
    """Uniform ordered m-tuple of distinct values from 0..n-1.

    Partial Fisher-Yates; consumes exactly m uniforms starting at ``cursor``.
    Returns (choice, new_cursor).
    """
    pool = np.empty(n, dtype=np.int64)
    for i in range(n):
        pool[i] = i
    out = np.empty(m, dtype=np.int64)
    for j in range(m):
        k = j + int(uniforms[cursor + j] * (n - j))
        if k >= n:  # guards uniforms[cursor+j] == 1.0 edge
            k = n - 1
        pool[j], pool[k] = pool[k], pool[j]
        out[j] = pool[j]
    return out, cursor + m


@njit(cache=True)
def sample_subset_with(forced, n, m, uniforms, cursor):
    """Random m-subset of 0..n-1 that contains ``forced``; consumes m-1 draws."""
    pool = np.empty(n - 1, dtype=np.int64)
    k = 0
    for i in range(n):
        if i != forced:
            pool[k] = i
            k += 1
    out = np.empty(m, dtype=np.int64)
    out[0] = forced
    for j in range(m - 1):
        idx = j + int(uniforms[cursor + j] * (n - 1 - j))
        if idx >= n - 1:
            idx = n - 2
        pool[j], pool[idx] = pool[idx], pool[j]
        out[j + 1] = pool[j]
    return out, cursor + (m - 1)


@njit(cache=True)
def draw_categorical(probs, u):
    """Inverse-CDF draw from a probability vector with a single uniform."""
    acc = 0.0
    last = probs.shape[0] - 1
    for i in range(last + 1):
        acc += probs[i]
        if u < acc:
            return i
    return last


@njit(cache=True)
def binom_nb(n, k):
    if k < 0 or k > n:
        return 0
    if k > n - k:
        k = n - k
    r = 1
    for i in range(1, k + 1):
        r = r * (n - k + i) // i
    return r


@njit(cache=True)
def combo_rank(combo_sorted, n):
    """Lexicographic index of an ascending M-subset among C(n, M) subsets."""
    m = combo_sorted.shape[0]
    rank = 0
    prev = -1
    for i in range(m):
        for v in range(prev + 1, combo_sorted[i]):
            rank += binom_nb(n - 1 - v, m - 1 - i)
        prev = combo_sorted[i]
    return rank


@njit(cache=True)
def ucb_values(mu, pulls, rounds_since_restart):
    """Optimism-inflated means: mu + sqrt(3 ln(t - tau) / (2 D)), inf if D = 0."""
    n = mu.shape[0]
    out = np.empty(n, dtype=np.float64)
    logterm = math.log(rounds_since_restart)
    for i in range(n):
        if pulls[i] == 0:
            out[i] = INF
        else:
            out[i] = mu[i] + math.sqrt(1.5 * logterm / pulls[i])
    return out


@njit(cache=True)
def _apply_round(states_row, ranked, t, ages, n_clients, assign_row):
    """Rotation assignment + AoI update for one round; returns success count."""
    n_success = 0
    for j in range(n_clients):
        ch = ranked[(j + t) % n_clients]
        assign_row[j] = ch
        if states_row[ch] == 1:
            ages[j] = 1
            n_success += 1
        else:
            ages[j] += 1
    return n_success


@njit(cache=True)
def run_oracle_kernel(states, means, n_clients):
    """Top-M-by-true-mean policy with client rotation; ages trace (T, M)."""
    horizon, n_channels = states.shape
    ages = np.ones(n_clients, dtype=np.int64)
    ages_trace = np.empty((horizon, n_clients), dtype=np.int64)
    assign = np.empty((horizon, n_clients), dtype=np.int64)
    for ti in range(horizon):
        t = ti + 1
        order = argsort_desc(means[ti])
        ranked = order[:n_clients]
        _apply_round(states[ti], ranked, t, ages, n_clients, assign[ti])
        for j in range(n_clients):
            ages_trace[ti, j] = ages[j]
    return ages_trace, assign


@njit(cache=True)
def run_random_kernel(states, n_clients, uniforms):
    """Uniform M-subset with uniform client bijection each round."""
    horizon, n_channels = states.shape
    ages = np.ones(n_clients, dtype=np.int64)
    ages_trace = np.empty((horizon, n_clients), dtype=np.int64)
    assign = np.empty((horizon, n_clients), dtype=np.int64)
    cursor = 0
    for ti in range(horizon):
        chosen, cursor = sample_distinct(n_channels, n_clients, uniforms, cursor)
        n_success = 0
        for j in range(n_clients):
            ch = chosen[j]
            assign[ti, j] = ch
            if states[ti, ch] == 1:
                ages[j] = 1
            else:
                ages[j] += 1
            ages_trace[ti, j] = ages[j]
    return ages_trace, assign


@njit(cache=True)
def run_mexp3_kernel(states, combos, gamma, aa_enabled, uniforms):
    """Exponential-weights super-arm scheduler, optionally AoI-aware.

    ``combos`` lists every M-subset of channels in lexicographic order. The
    drawn combo's channels are ranked by empirical mean (never-observed
    channels last) before the rotation assignment. Returns the ages trace,
    the assignment trace and the per-round drawn combo index.
    """
    horizon, n_channels = states.shape
    n_combos, n_clients = combos.shape
    weights = np.ones(n_combos, dtype=np.float64)
    probs = np.empty(n_combos, dtype=np.float64)
    succ = np.zeros(n_channels, dtype=np.float64)
    cnt = np.zeros(n_channels, dtype=np.int64)
    ages = np.ones(n_clients, dtype=np.int64)
    ages_trace = np.empty((horizon, n_clients), dtype=np.int64)
    assign = np.empty((horizon, n_clients), dtype=np.int64)
    drawn = np.empty(horizon, dtype=np.int64)
    mean_key = np.empty(n_channels, dtype=np.float64)
    cursor = 0
    for ti in range(horizon):
        t = ti + 1
        # empirical means; unobserved channels sort below any observed mean
        mu_max = 0.0
        for i in range(n_channels):
            if cnt[i] > 0:
                mean_key[i] = succ[i] / cnt[i]
                if mean_key[i] > mu_max:
                    mu_max = mean_key[i]
            else:
                mean_key[i] = -1.0

        exploit = False
        if aa_enabled and mu_max > 0.0:
            age_sum = 0
            for j in range(n_clients):
                age_sum += ages[j]
            if age_sum > n_clients / mu_max:
                exploit = True

        if exploit:
            order = argsort_desc(mean_key)
            ranked = order[:n_clients]
            sorted_set = np.sort(ranked)
            idx = combo_rank(sorted_set, n_channels)
        else:
            wsum = 0.0
            for c in range(n_combos):
                wsum += weights[c]
            for c in range(n_combos):
                probs[c] = (1.0 - gamma) * weights[c] / wsum + gamma / n_combos
            idx = draw_categorical(probs, uniforms[cursor])
            cursor += 1
            combo = combos[idx]
            combo_scores = np.empty(n_clients, dtype=np.float64)
            for j in range(n_clients):
                combo_scores[j] = mean_key[combo[j]]
            local = argsort_desc(combo_scores)
            ranked = np.empty(n_clients, dtype=np.int64)
            for j in range(n_clients):
                ranked[j] = combo[local[j]]
        drawn[ti] = idx

        _apply_round(states[ti], ranked, t, ages, n_clients, assign[ti])
        for j in range(n_clients):
            ages_trace[ti, j] = ages[j]

        # bandit feedback: super-reward of the played combo only
        x = 0.0
        for j in range(n_clients):
            ch = combos[idx, j]
            s = 1.0 if states[ti, ch] == 1 else 0.0
            x += s
            succ[ch] += s
            cnt[ch] += 1
        wsum = 0.0
        for c in range(n_combos):
            wsum += weights[c]
        p_idx = (1.0 - gamma) * weights[idx] / wsum + gamma / n_combos
        weights[idx] *= math.exp(gamma * (x / p_idx) / n_combos)
        wmax = 0.0
        for c in range(n_combos):
            if weights[c] > wmax:
                wmax = weights[c]
        for c in range(n_combos):
            weights[c] /= wmax
    return ages_trace, assign, drawn


@njit(cache=True)
def run_glr_cucb_kernel(states, n_clients, alpha, delta, aa_enabled, uniforms, table):
    """Combinatorial UCB with a per-channel GLR restart test, optionally AoI-aware.

    Detector state is a per-channel prefix-sum of the 0/1 observations since
    the last restart; a detection clears every channel and moves the restart
    marker tau to the current round. Returns ages trace, assignment trace and
    a per-round restart flag.
    """
    horizon, n_channels = states.shape
    mu = np.zeros(n_channels, dtype=np.float64)
    pulls = np.zeros(n_channels, dtype=np.int64)
    prefix = np.zeros((n_channels, horizon + 1), dtype=np.int64)
    tau = 0
    ages = np.ones(n_clients, dtype=np.int64)
    ages_trace = np.empty((horizon, n_clients), dtype=np.int64)
    assign = np.empty((horizon, n_clients), dtype=np.int64)
    restarts = np.zeros(horizon, dtype=np.uint8)
    cursor = 0
    if alpha > 0.0:
        cycle = int(n_channels / alpha)
        if cycle < n_channels + 1:  # degenerate floor(N/alpha) <= N
            cycle = n_channels + 1
    else:
        cycle = 0
    for ti in range(horizon):
        t = ti + 1
        mu_max = 0.0
        for i in range(n_channels):
            if mu[i] > mu_max:
                mu_max = mu[i]

        exploit = False
        if aa_enabled and mu_max > 0.0:
            age_sum = 0
            for j in range(n_clients):
                age_sum += ages[j]
            if age_sum > n_clients / mu_max:
                exploit = True

        if exploit:
            # highest historical success rates, no optimism bonus
            order = argsort_desc(mu)
            ranked = order[:n_clients]
        else:
            pos = 0
            forced = -1
            if cycle > 0:
                pos = (t - tau) % cycle
                if 1 <= pos <= n_channels:
                    forced = pos - 1
            ucb = ucb_values(mu, pulls, t - tau)
            if forced >= 0:
                chosen, cursor = sample_subset_with(
                    forced, n_channels, n_clients, uniforms, cursor
                )
                chosen = np.sort(chosen)  # UCB tie -> lower channel index
                scores = np.empty(n_clients, dtype=np.float64)
                for j in range(n_clients):
                    scores[j] = ucb[chosen[j]]
                local = argsort_desc(scores)
                ranked = np.empty(n_clients, dtype=np.int64)
                for j in range(n_clients):
                    ranked[j] = chosen[local[j]]
            else:
                order = argsort_desc(ucb)
                ranked = order[:n_clients]

        _apply_round(states[ti], ranked, t, ages, n_clients, assign[ti])
        for j in range(n_clients):
            ages_trace[ti, j] = ages[j]

        # selected-arm feedback + change detection on pulled channels
        restart = False
        for j in range(n_clients):
            ch = ranked[j]
            x = np.int64(states[ti, ch])
            mu[ch] = (mu[ch] * pulls[ch] + x) / (pulls[ch] + 1)
            prefix[ch, pulls[ch] + 1] = prefix[ch, pulls[ch]] + x
            pulls[ch] += 1
        for j in range(n_clients):
            ch = ranked[j]
            n = pulls[ch]
            if n < 2:
                continue
            stat = glr_stat_prefix(prefix[ch], n, table)
            if stat >= glr_threshold_nb(n, delta):
                restart = True
                break
        if restart:
            for i in range(n_channels):
                pulls[i] = 0
                mu[i] = 0.0
            tau = t
            restarts[ti] = 1
    return ages_trace, assign, restarts
