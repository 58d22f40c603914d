"""Bernoulli channel processes: stationary, piecewise-stationary, adversarial.

An environment is immutable after construction. Sampling takes an external
``numpy.random.Generator`` so concurrent runs can use independent streams.
Draw order is documented and fixed: one uniform per channel per round,
channels in index order, rounds in increasing order. Adversarial
environments replay a pre-determined 0/1 state matrix and consume no
randomness at sampling time.

Rounds are 1-based everywhere: ``1 <= t <= horizon``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATIONARY = "stationary"
PIECEWISE = "piecewise"
ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class ChannelRealization:
    """Realized states of all channels in one round (1 = Good, 0 = Bad)."""

    round: int
    states: np.ndarray


@dataclass(frozen=True)
class ChannelEnvironment:
    n_channels: int
    kind: str
    horizon: int
    # (start_round, means) per segment; first start_round is 1. Used by
    # stationary (single segment) and piecewise kinds.
    segments: tuple = field(default_factory=tuple)
    # (N, T) 0/1 matrix for the adversarial kind.
    adversarial_states: np.ndarray | None = None

    @property
    def n_breakpoints(self) -> int:
        return max(len(self.segments) - 1, 0)

    def segment_index(self, t: int) -> int:
        self._check_round(t)
        idx = 0
        for i, (start, _) in enumerate(self.segments):
            if t >= start:
                idx = i
        return idx

    def true_means(self, t: int) -> np.ndarray:
        """Ground-truth success probabilities at round t.

        For the adversarial kind this is the stored 0/1 column. Intended only
        for oracle policies and regret accounting, never as policy input.
        """
        self._check_round(t)
        if self.kind == ADVERSARIAL:
            return self.adversarial_states[:, t - 1].astype(np.float64)
        return self.segments[self.segment_index(t)][1].copy()

    def true_means_matrix(self) -> np.ndarray:
        """(T, N) matrix of true means, one row per round."""
        if self.kind == ADVERSARIAL:
            return self.adversarial_states.T.astype(np.float64)
        out = np.empty((self.horizon, self.n_channels))
        for i, (start, means) in enumerate(self.segments):
            end = self.segments[i + 1][0] if i + 1 < len(self.segments) else self.horizon + 1
            out[start - 1 : end - 1, :] = means
        return out

    def sample_round(self, t: int, rng: np.random.Generator) -> ChannelRealization:
        """One Bernoulli draw per channel (index order) from the active means."""
        self._check_round(t)
        if self.kind == ADVERSARIAL:
            states = self.adversarial_states[:, t - 1].astype(np.uint8)
        else:
            means = self.segments[self.segment_index(t)][1]
            states = (rng.random(self.n_channels) < means).astype(np.uint8)
        return ChannelRealization(round=t, states=states)

    def realize_all(self, rng: np.random.Generator) -> np.ndarray:
        """(T, N) uint8 matrix of realized states for the whole horizon.

        Consumes the stream in exactly the same order as calling
        ``sample_round`` for t = 1..T, so the two are interchangeable.
        """
        if self.kind == ADVERSARIAL:
            return np.ascontiguousarray(self.adversarial_states.T.astype(np.uint8))
        u = rng.random((self.horizon, self.n_channels))
        return (u < self.true_means_matrix()).astype(np.uint8)

    def _check_round(self, t: int) -> None:
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside 1..{self.horizon}")


def make_piecewise(n_channels, horizon, breakpoints, per_segment_means) -> ChannelEnvironment:
    """Environment whose mean vector is piecewise constant.

    ``breakpoints`` are the rounds at which the means switch (strictly
    increasing, each in (1, horizon]); ``per_segment_means`` holds
    ``len(breakpoints) + 1`` mean vectors of length ``n_channels``. Zero
    breakpoints yield a stationary environment.
    """
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    breakpoints = [int(b) for b in breakpoints]
    for a, b in zip(breakpoints, breakpoints[1:]):
        if b <= a:
            raise ValueError(f"breakpoints not strictly increasing: {a} then {b}")
    for b in breakpoints:
        if not 1 < b <= horizon:
            raise ValueError(f"breakpoint {b} outside (1, {horizon}]")
    means = [np.asarray(m, dtype=np.float64) for m in per_segment_means]
    if len(means) != len(breakpoints) + 1:
        raise ValueError(
            f"need {len(breakpoints) + 1} mean vectors for {len(breakpoints)} "
            f"breakpoints, got {len(means)}"
        )
    for m in means:
        if m.shape != (n_channels,):
            raise ValueError(f"mean vector shape {m.shape} != ({n_channels},)")
        if np.any((m < 0.0) | (m > 1.0)):
            raise ValueError("channel means must lie in [0, 1]")
    starts = [1] + breakpoints
    segments = tuple((s, m.copy()) for s, m in zip(starts, means))
    kind = STATIONARY if not breakpoints else PIECEWISE
    return ChannelEnvironment(
        n_channels=n_channels, kind=kind, horizon=horizon, segments=segments
    )


def make_adversarial(state_matrix) -> ChannelEnvironment:
    """Environment replaying a fixed (N, T) matrix of 0/1 states."""
    mat = np.asarray(state_matrix)
    if mat.ndim != 2:
        raise ValueError("state matrix must be 2-D (channels x rounds)")
    if not np.isin(mat, (0, 1)).all():
        raise ValueError("state matrix entries must be 0 or 1")
    mat = mat.astype(np.uint8)
    n, t = mat.shape
    if n < 1 or t < 1:
        raise ValueError("state matrix must be non-empty")
    return ChannelEnvironment(
        n_channels=n, kind=ADVERSARIAL, horizon=t, adversarial_states=mat
    )


def gen_adversarial_flips(n_channels, horizon, flip_probability, seed) -> np.ndarray:
    """Reproducible adversarial state matrix.

    Each channel starts Good/Bad with probability 1/2 and flips its state
    each round with ``flip_probability``. Deterministic in ``seed``: the
    initial states are drawn first (channel order), then the flip indicators
    channel by channel.
    """
    if not 0.0 <= flip_probability <= 1.0:
        raise ValueError("flip_probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    init = rng.random(n_channels) < 0.5
    flips = rng.random((n_channels, horizon - 1)) < flip_probability
    states = np.empty((n_channels, horizon), dtype=np.uint8)
    states[:, 0] = init
    # state_t = state_0 XOR (cumulative flip parity)
    parity = np.logical_xor.accumulate(flips, axis=1)
    states[:, 1:] = np.logical_xor(init[:, None], parity)
    return states


def load_adversarial_csv(path) -> np.ndarray:
    """Read a 0/1 state matrix (one CSV row per channel)."""
    mat = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    if not np.isin(mat, (0, 1)).all():
        raise ValueError(f"{path}: adversarial CSV entries must be 0 or 1")
    return mat.astype(np.uint8)
