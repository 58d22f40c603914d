"""Desk-scale asynchronous federated learning over scheduled channels.

A softmax-regression task on Gaussian-mixture data stands in for image
classification: it is convex, fast, and its gradients are analytically
checkable, while preserving the round structure (broadcast, local SGD,
cumulative-update caching for stragglers, weighted aggregation).

Model parameters travel as flat vectors of length n_classes * feat_dim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import match as matchmod
from .aoi import AoiLedger, aoi_variance
from .env import ChannelEnvironment
from .policy import (
    AoiAwareScheduler,
    GlrCucbScheduler,
    MExp3Scheduler,
    SelectionResult,
    oracle_select,
    random_select,
)
from .runner import policy_stream_id

# ---------------------------------------------------------------------------
# synthetic task and softmax model


@dataclass(frozen=True)
class SyntheticTask:
    """Gaussian mixture: one cluster per class with shared diagonal covariance.

    ``feature_scales`` stretches the coordinates (RMS-normalized), so plain
    gradient descent has to work against the conditioning instead of reading
    the answer off the class templates after one step.
    """

    centers: np.ndarray  # (n_classes, feat_dim)
    noise: float
    feature_scales: np.ndarray  # (feat_dim,)

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def dim(self) -> int:
        return self.n_classes * self.feat_dim

    def sample_balanced(self, n_per_class: int, rng: np.random.Generator):
        """Equal counts per class, grouped by class label."""
        n = n_per_class * self.n_classes
        y = np.repeat(np.arange(self.n_classes), n_per_class)
        x = self.centers[y] + self.noise * rng.standard_normal((n, self.feat_dim))
        return x * self.feature_scales, y


def make_task(
    n_classes, feat_dim, rng, center_scale=1.0, noise=0.6, condition_number=1.0
) -> SyntheticTask:
    centers = center_scale * rng.standard_normal((n_classes, feat_dim))
    scales = np.geomspace(1.0, condition_number, feat_dim)
    scales /= np.sqrt(np.mean(scales**2))
    return SyntheticTask(centers=centers, noise=noise, feature_scales=scales)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(w: np.ndarray, x: np.ndarray, n_classes: int) -> np.ndarray:
    return _softmax(x @ w.reshape(n_classes, -1).T)


def evaluate(w, x, y, n_classes: int):
    """Mean cross-entropy and top-1 accuracy."""
    if len(y) == 0:
        raise ValueError("empty evaluation set")
    p = predict_proba(np.asarray(w, dtype=np.float64), x, n_classes)
    eps = 1e-12
    loss = float(-np.log(p[np.arange(len(y)), y] + eps).mean())
    acc = float((p.argmax(axis=1) == y).mean())
    return loss, acc


def ce_gradient(w, x, y, n_classes: int) -> np.ndarray:
    """Flat gradient of the mean cross-entropy of a softmax classifier."""
    p = predict_proba(np.asarray(w, dtype=np.float64), x, n_classes)
    p[np.arange(len(y)), y] -= 1.0
    return (p.T @ x / len(y)).ravel()


def local_sgd(w0, x, y, n_classes, eta, epochs, batch_size, rng) -> np.ndarray:
    """E mini-batch SGD steps from w0; sampling without replacement.

    Batches walk a shuffled index order, reshuffling whenever the pool is
    exhausted.
    """
    if len(y) == 0:
        raise ValueError("client has an empty shard")
    w = np.array(w0, dtype=np.float64, copy=True)
    n = len(y)
    b = min(batch_size, n)
    order = rng.permutation(n)
    cursor = 0
    for _ in range(epochs):
        if cursor + b > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + b]
        cursor += b
        w -= eta * ce_gradient(w, x[idx], y[idx], n_classes)
    return w


def dirichlet_partition(labels, alpha, n_clients, rng, max_retries=200):
    """Split sample indices into non-IID client shards.

    For each class, proportions are drawn from Dir(alpha) and the class's
    (shuffled) samples are split by largest-remainder rounding. Draws where
    some client ends up empty are retried.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    for cls in classes:
        if (labels == cls).sum() < 1:
            raise ValueError(f"class {cls} has no samples")
    for _ in range(max_retries):
        shards = [[] for _ in range(n_clients)]
        for cls in classes:
            idx = np.nonzero(labels == cls)[0]
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(n_clients, alpha))
            counts = _largest_remainder(props, len(idx))
            start = 0
            for j, c in enumerate(counts):
                shards[j].extend(idx[start : start + c])
                start += c
        if all(len(s) >= 1 for s in shards):
            return [np.array(sorted(s), dtype=np.int64) for s in shards]
    raise ValueError(
        "could not give every client a sample; increase the dataset size or alpha"
    )


def _largest_remainder(props, total: int) -> np.ndarray:
    raw = props * total
    counts = np.floor(raw).astype(np.int64)
    short = total - counts.sum()
    if short > 0:
        frac = raw - counts
        # ties resolved toward the lower client index
        order = np.lexsort((np.arange(len(props)), -frac))
        counts[order[:short]] += 1
    return counts


# ---------------------------------------------------------------------------
# world state


@dataclass
class ClientState:
    x: np.ndarray
    y: np.ndarray
    rng: np.random.Generator
    cum_update: np.ndarray
    model_snapshot: np.ndarray


@dataclass
class RoundRecord:
    round: int
    loss: float
    accuracy: float
    n_success: int
    ages: np.ndarray
    variance: float
    regret: int
    restart: bool = False
    exploited: bool = False


@dataclass
class MatchLogRow:
    round: int
    client: int
    age: int
    age_norm: float
    contribution: float
    priority: float
    channel: int
    zeta: float


class FlWorld:
    """One federated run: scheduling, matching, local training, aggregation.

    Round flow (t = 1..rounds): broadcast to last round's successful set,
    local SGD there, cumulative-update refresh, channel selection (optionally
    AoI-aware), contribution/fairness matching, channel realization, policy
    update from observed states, buffer refresh, weighted global update, AoI
    update, evaluation.
    """

    def __init__(
        self,
        env: ChannelEnvironment,
        policy_name: str,
        n_clients: int,
        seed: int,
        eta=0.1,
        epochs=2,
        batch_size=32,
        alpha_dirichlet=0.5,
        rounds=250,
        samples_per_client=200,
        n_classes=10,
        feat_dim=20,
        noise=0.6,
        center_scale=1.0,
        condition_number=1.0,
        val_per_class=100,
        aa=False,
        matching_enabled=False,
        matching_beta=0.5,
        matching_mode="ucb",
        gamma=0.1,
        alpha_explore=None,
        delta=0.001,
        log_matching=False,
    ):
        if policy_name not in ("oracle", "random", "mexp3", "glr-cucb"):
            raise ValueError(f"unknown policy {policy_name!r}")
        if rounds > env.horizon:
            raise ValueError("rounds exceed the environment horizon")
        if eta <= 0.0:
            raise ValueError("eta must be positive")
        self.env = env
        self.policy_name = policy_name
        self.n_clients = n_clients
        self.eta = eta
        self.epochs = epochs
        self.batch_size = batch_size
        self.rounds = rounds
        self.aa = aa
        self.matching_enabled = matching_enabled
        self.matching_mode = matching_mode
        self.log_matching = log_matching

        # rng layout: [seed, 0] channel realizations, [seed, 1, pid] policy
        # draws, [seed, 2] task + partition, [seed, 3, i] client batches
        self.realizations = env.realize_all(np.random.default_rng([seed, 0]))
        self.rng_policy = np.random.default_rng([seed, 1, policy_stream_id(policy_name, aa)])
        rng_task = np.random.default_rng([seed, 2])

        self.task = make_task(
            n_classes, feat_dim, rng_task, center_scale, noise, condition_number
        )
        per_class = samples_per_client * n_clients // n_classes
        x_train, y_train = self.task.sample_balanced(per_class, rng_task)
        self.x_val, self.y_val = self.task.sample_balanced(val_per_class, rng_task)
        shards = dirichlet_partition(y_train, alpha_dirichlet, n_clients, rng_task)
        dim = self.task.dim
        self.clients = [
            ClientState(
                x=x_train[s],
                y=y_train[s],
                rng=np.random.default_rng([seed, 3, i]),
                cum_update=np.zeros(dim),
                model_snapshot=np.zeros(dim),
            )
            for i, s in enumerate(shards)
        ]
        self.shards = shards

        if alpha_explore is None:
            alpha_explore = 0.05 * np.sqrt(np.log(env.horizon) / env.horizon)
        base = None
        if policy_name == "mexp3":
            base = MExp3Scheduler(env.n_channels, n_clients, gamma)
        elif policy_name == "glr-cucb":
            base = GlrCucbScheduler(env.n_channels, n_clients, alpha_explore, delta)
        self.base_sched = base
        self.sched = AoiAwareScheduler(base) if (aa and base is not None) else base

        self.model = np.zeros(dim)
        self.global_grad = np.zeros(dim)
        self.tracker = matchmod.ContributionTracker(n_clients, dim)
        self.fairness = matchmod.FairnessTracker(matching_beta)
        self.ledger = AoiLedger.fresh(n_clients)
        self.oracle_ledger = AoiLedger.fresh(n_clients)
        self.regret = 0
        self.round = 0
        self.s_prev = list(range(n_clients))  # round 0: everyone is fresh
        self.last_assignment = None
        self.records: list[RoundRecord] = []
        self.match_log: list[MatchLogRow] = []

    # -- round steps -------------------------------------------------------

    def _train_clients(self):
        for i in self.s_prev:
            c = self.clients[i]
            w_local = local_sgd(
                self.model, c.x, c.y, self.task.n_classes,
                self.eta, self.epochs, self.batch_size, c.rng,
            )
            c.cum_update = (self.model - w_local) / self.eta
            c.model_snapshot = w_local

    def _select(self, t: int) -> SelectionResult:
        if self.policy_name == "oracle":
            ranked, assignment = oracle_select(self.env.true_means(t), self.n_clients, t)
            return SelectionResult(ranked=ranked, assignment=assignment)
        if self.policy_name == "random":
            assignment = random_select(self.env.n_channels, self.n_clients, self.rng_policy)
            return SelectionResult(ranked=assignment.channel_of, assignment=assignment)
        if self.aa:
            return self.sched.select(self.rng_policy, t, self.ledger.ages)
        return self.sched.select(self.rng_policy, t)

    def _val_loss(self, w) -> float:
        return evaluate(w, self.x_val, self.y_val, self.task.n_classes)[0]

    def run_round(self) -> RoundRecord:
        t = self.round + 1
        self._train_clients()
        res = self._select(t)

        contrib_raw = None
        assignment = res.assignment
        blend = None
        lam = None
        if self.matching_enabled:
            contrib_raw = self.tracker.raw_scores(
                self.global_grad, self.model, self._val_loss
            )
            contrib_norm = matchmod.normalize_scores(contrib_raw)
            blend = self.fairness.blend(self.ledger.ages)
            lam = matchmod.priority(contrib_norm, blend.age_norm, blend.beta_t)
            use_ucb = self.matching_mode == "ucb" and isinstance(
                self.base_sched, GlrCucbScheduler
            )
            if use_ucb:
                ranking = matchmod.rank_channels_ucb(self.base_sched, res.ranked, t)
            else:
                # historical-mean ranking; also the fallback when the scheduler
                # has no optimism values (M-Exp3 under a ucb-mode config)
                ranking = matchmod.rank_channels_mean(
                    self.base_sched.historical_means(), res.ranked
                )
            assignment = matchmod.match_clients(ranking, lam)

        states_row = self.realizations[t - 1]
        succ = assignment.success_set(states_row)
        self.last_assignment = assignment
        restart = False
        if self.base_sched is not None:
            rewards = {int(ch): int(states_row[ch]) for ch in res.ranked}
            if self.aa:
                restart = bool(self.sched.update(res, rewards, t))
            elif self.policy_name == "mexp3":
                self.sched.update(res.combo_index, rewards)
            else:
                restart = self.sched.update(res.ranked, rewards, t)

        for i in succ:
            c = self.clients[i]
            self.tracker.update_buffer(i, c.cum_update, c.model_snapshot, t)

        zeta = np.zeros(self.n_clients)
        if len(succ) > 0:
            if self.matching_enabled:
                zeta = matchmod.aggregation_weights(contrib_raw, succ, self.n_clients)
            else:
                zeta[succ] = 1.0 / len(succ)
            agg = zeta[succ] @ np.stack([self.clients[i].cum_update for i in succ])
            self.model = self.model - (self.eta / len(succ)) * agg
            self.global_grad = agg
            self.tracker.last_zeta[succ] = zeta[succ]

        # shadow oracle on the same realizations feeds the regret column
        _, oracle_assign = oracle_select(self.env.true_means(t), self.n_clients, t)
        self.oracle_ledger.update(oracle_assign.success_set(states_row))
        self.ledger.update(succ)
        self.regret += int(self.ledger.ages.sum() - self.oracle_ledger.ages.sum())

        loss, acc = evaluate(self.model, self.x_val, self.y_val, self.task.n_classes)
        rec = RoundRecord(
            round=t,
            loss=loss,
            accuracy=acc,
            n_success=len(succ),
            ages=self.ledger.ages.copy(),
            variance=self.ledger.variance_trace[-1],
            regret=self.regret,
            restart=restart,
            exploited=res.exploited,
        )
        self.records.append(rec)
        if self.log_matching and lam is not None:
            for i in range(self.n_clients):
                self.match_log.append(
                    MatchLogRow(
                        round=t,
                        client=i,
                        age=int(self.ledger.ages[i]),
                        age_norm=float(blend.age_norm[i]),
                        contribution=float(contrib_raw[i]),
                        priority=float(lam[i]),
                        channel=int(assignment.channel_of[i]),
                        zeta=float(zeta[i]),
                    )
                )
        self.s_prev = list(succ)
        self.round = t
        return rec

    def run(self) -> list:
        while self.round < self.rounds:
            self.run_round()
        return self.records

    def cumulative_variance(self) -> float:
        return float(np.sum(self.ledger.variance_trace))
