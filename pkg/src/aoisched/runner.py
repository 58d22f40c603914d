"""Bandit-mode episode engine.

Runs one policy against one environment realization and returns the full
age/assignment traces. Channel realizations come from the per-seed stream
``[seed, 0]`` so every policy run on the same seed sees the same channel
states (common random numbers for pathwise regret); each policy's own
randomness comes from its dedicated stream ``[seed, 1, stream_id]``, which
keeps a policy's trace independent of which other policies run alongside it.

Two engines produce identical output: ``kernel`` (fused numba loops, the
default) and ``ops`` (the step-by-step scheduler classes). Parity is pinned
by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .aoi import AoiLedger, RegretCurve, aoi_regret
from .env import ChannelEnvironment
from .policy import (
    AoiAwareScheduler,
    GlrCucbScheduler,
    MExp3Scheduler,
    enumerate_super_arms,
    oracle_select,
    random_select,
)

POLICY_NAMES = ("oracle", "random", "mexp3", "glr-cucb")


def policy_stream_id(name: str, aa: bool = False) -> int:
    base = {"oracle": 10, "random": 11, "mexp3": 12, "glr-cucb": 13}[name]
    return base + (10 if aa else 0)


def default_alpha(horizon: int) -> float:
    """Forced-exploration rate 0.05 * sqrt(ln T / T)."""
    return 0.05 * math.sqrt(math.log(horizon) / horizon)


@dataclass(frozen=True)
class PolicySpec:
    """Scheduler choice plus hyperparameters."""

    name: str
    aa: bool = False
    gamma: float = 0.1
    alpha: float | None = None  # None: default_alpha(horizon)
    delta: float = 0.001

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}")
        if self.aa and self.name in ("oracle", "random"):
            raise ValueError("the AoI-aware wrapper needs a learning policy")

    @property
    def label(self) -> str:
        return self.name + ("+aa" if self.aa else "")

    def resolved_alpha(self, horizon: int) -> float:
        return default_alpha(horizon) if self.alpha is None else self.alpha


@dataclass
class BanditRunResult:
    label: str
    seed: int
    ages: np.ndarray  # (T, M), row t-1 holds a(t)
    assignment: np.ndarray  # (T, M) channel per client
    restarts: np.ndarray | None = None

    @property
    def age_sums(self) -> np.ndarray:
        return self.ages.sum(axis=1)


def env_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])

def policy_stream(seed: int, spec: PolicySpec) -> np.random.Generator:
    return np.random.default_rng([seed, 1, policy_stream_id(spec.name, spec.aa)])


def realize(env: ChannelEnvironment, seed: int) -> np.ndarray:
    return env.realize_all(env_stream(seed))


def run_bandit(
    env: ChannelEnvironment,
    spec: PolicySpec,
    n_clients: int,
    seed: int,
    states: np.ndarray | None = None,
    engine: str = "kernel",
) -> BanditRunResult:
    """Simulate one policy over the whole horizon."""
    if env.n_channels < n_clients:
        raise ValueError("need at least as many channels as clients")
    if states is None:
        states = realize(env, seed)
    if engine == "kernel":
        return _run_kernel(env, spec, n_clients, seed, states)
    if engine == "ops":
        return _run_ops(env, spec, n_clients, seed, states)
    raise ValueError(f"unknown engine {engine!r}")


def _run_kernel(env, spec, n_clients, seed, states) -> BanditRunResult:
    horizon = env.horizon
    rng = policy_stream(seed, spec)
    restarts = None
    if spec.name == "oracle":
        ages, assign = kernels.run_oracle_kernel(
            states, env.true_means_matrix(), n_clients
        )
    elif spec.name == "random":
        ages, assign = kernels.run_random_kernel(
            states, n_clients, rng.random(horizon * n_clients)
        )
    elif spec.name == "mexp3":
        combos = enumerate_super_arms(env.n_channels, n_clients)
        ages, assign, _ = kernels.run_mexp3_kernel(
            states, combos, spec.gamma, spec.aa, rng.random(horizon)
        )
    else:
        table = kernels.xlogx_table(horizon)
        ages, assign, restarts = kernels.run_glr_cucb_kernel(
            states,
            n_clients,
            spec.resolved_alpha(horizon),
            spec.delta,
            spec.aa,
            rng.random(horizon * n_clients),
            table,
        )
    return BanditRunResult(
        label=spec.label, seed=seed, ages=ages, assignment=assign, restarts=restarts
    )


def _run_ops(env, spec, n_clients, seed, states) -> BanditRunResult:
    horizon = env.horizon
    rng = policy_stream(seed, spec)
    ledger = AoiLedger.fresh(n_clients)
    ages = np.empty((horizon, n_clients), dtype=np.int64)
    assign = np.empty((horizon, n_clients), dtype=np.int64)
    restarts = np.zeros(horizon, dtype=np.uint8)

    sched = None
    if spec.name == "mexp3":
        sched = MExp3Scheduler(env.n_channels, n_clients, spec.gamma)
    elif spec.name == "glr-cucb":
        sched = GlrCucbScheduler(
            env.n_channels, n_clients, spec.resolved_alpha(horizon), spec.delta
        )
    if spec.aa:
        sched = AoiAwareScheduler(sched)

    for ti in range(horizon):
        t = ti + 1
        row = states[ti]
        if spec.name == "oracle":
            _, assignment = oracle_select(env.true_means(t), n_clients, t)
        elif spec.name == "random":
            assignment = random_select(env.n_channels, n_clients, rng)
        else:
            res = sched.select(rng, t, ledger.ages) if spec.aa else sched.select(rng, t)
            assignment = res.assignment
            rewards = {int(ch): int(row[ch]) for ch in res.ranked}
            if spec.aa:
                if bool(sched.update(res, rewards, t)):
                    restarts[ti] = 1
            elif spec.name == "mexp3":
                sched.update(res.combo_index, rewards)
            else:
                if sched.update(res.ranked, rewards, t):
                    restarts[ti] = 1
        ledger.update(assignment.success_set(row))
        ages[ti] = ledger.ages
        assign[ti] = assignment.channel_of
    return BanditRunResult(
        label=spec.label,
        seed=seed,
        ages=ages,
        assignment=assign,
        restarts=restarts if spec.name == "glr-cucb" else None,
    )


@dataclass
class SeedOutcome:
    """All policies of one seed on shared realizations, plus regret curves."""

    seed: int
    results: dict = field(default_factory=dict)  # label -> BanditRunResult
    regrets: dict = field(default_factory=dict)  # label -> RegretCurve


def run_policies(
    env: ChannelEnvironment,
    specs,
    n_clients: int,
    seed: int,
    engine: str = "kernel",
) -> SeedOutcome:
    """Run a policy set on one seed with common channel realizations."""
    states = realize(env, seed)
    oracle = run_bandit(
        env, PolicySpec("oracle"), n_clients, seed, states=states, engine=engine
    )
    out = SeedOutcome(seed=seed)
    out.results["oracle"] = oracle
    out.regrets["oracle"] = aoi_regret(oracle.ages, oracle.ages)
    for spec in specs:
        if spec.name == "oracle":
            continue
        res = run_bandit(env, spec, n_clients, seed, states=states, engine=engine)
        out.results[res.label] = res
        out.regrets[res.label] = aoi_regret(res.ages, oracle.ages)
    return out


def loglog_slope(curve, t_lo: int, t_hi: int) -> float:
    """Least-squares slope of log R(t) vs log t over rounds [t_lo, t_hi].

    Rounds with non-positive regret are dropped; returns nan when fewer than
    two points remain (e.g. the oracle's all-zero curve).
    """
    curve = np.asarray(curve, dtype=np.float64)
    t = np.arange(1, curve.shape[0] + 1)
    mask = (t >= t_lo) & (t <= t_hi) & (curve > 0)
    if mask.sum() < 2:
        return float("nan")
    x = np.log(t[mask])
    y = np.log(curve[mask])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)
