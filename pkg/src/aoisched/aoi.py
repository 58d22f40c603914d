"""Age-of-information bookkeeping and closed-form oracles.

Ages are 1-based: a client that succeeded in the current round has age 1,
and every failed round adds 1. All clients start at age 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


@dataclass
class AoiLedger:
    """Per-client ages plus the derived per-round statistics."""

    ages: np.ndarray
    round: int = 0
    cumulative_age_sum: int = 0
    variance_trace: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n_clients: int) -> "AoiLedger":
        return cls(ages=np.ones(n_clients, dtype=np.int64))

    @property
    def n_clients(self) -> int:
        return self.ages.shape[0]

    def update(self, success_set) -> "AoiLedger":
        """Advance one round: reset ages in ``success_set`` to 1, bump the rest."""
        mask = np.zeros(self.n_clients, dtype=bool)
        idx = np.asarray(list(success_set), dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.n_clients:
                raise ValueError("success set contains an unknown client index")
            mask[idx] = True
        self.ages[mask] = 1
        self.ages[~mask] += 1
        self.round += 1
        self.cumulative_age_sum += int(self.ages.sum())
        self.variance_trace.append(aoi_variance(self.ages))
        return self


def aoi_variance(ages) -> float:
    """V_t = sum_i (a_i - mean(a))^2 of the current age vector."""
    a = np.asarray(ages, dtype=np.float64)
    return float(((a - a.mean()) ** 2).sum())


@dataclass(frozen=True)
class RegretCurve:
    """Cumulative age excess of a policy over an oracle run."""

    policy_age_sums: np.ndarray
    oracle_age_sums: np.ndarray
    curve: np.ndarray

    @property
    def final(self) -> float:
        return float(self.curve[-1])


def aoi_regret(policy_ages, oracle_ages) -> RegretCurve:
    """Running sum over rounds of (policy age total - oracle age total).

    Both traces are (T, M) age matrices on the same horizon, typically run
    against the same channel realizations (common random numbers).
    """
    p = np.asarray(policy_ages)
    o = np.asarray(oracle_ages)
    if p.shape != o.shape or p.ndim != 2:
        raise ValueError(f"trace shapes differ: {p.shape} vs {o.shape}")
    ps = p.sum(axis=1).astype(np.int64)
    os_ = o.sum(axis=1).astype(np.int64)
    return RegretCurve(
        policy_age_sums=ps, oracle_age_sums=os_, curve=np.cumsum(ps - os_)
    )


def expected_aoi_stationary(mu: float) -> float:
    """Closed form sum_{tau>=0} prod_{k<=tau} (1 - mu) = (1 - mu) / mu.

    This is the steady-state expected number of consecutive failed rounds on
    a constant-mean channel, i.e. the mean of (age - 1) for the 1-based age
    process, whose mean is 1/mu.
    """
    if not 0.0 < mu <= 1.0:
        raise ValueError("mu must lie in (0, 1]; the series diverges at mu = 0")
    return (1.0 - mu) / mu


class UniformAoi(NamedTuple):
    per_client: float
    total: float


def mean_aoi_uniform(n_clients: int, n_success: int) -> UniformAoi:
    """Expected AoI when a uniformly random size-s subset succeeds per round.

    Returns both the per-client expectation M/s and the network total M^2/s.
    """
    if not 1 <= n_success <= n_clients:
        raise ValueError("need 1 <= n_success <= n_clients")
    per_client = n_clients / n_success
    return UniformAoi(per_client=per_client, total=n_clients * per_client)
