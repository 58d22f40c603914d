import math

import numpy as np
import pytest

from aoisched.env import make_piecewise
from aoisched.flsim import (
    FlWorld,
    ce_gradient,
    dirichlet_partition,
    evaluate,
    local_sgd,
    make_task,
)

# ---------------------------------------------------------------------------
# task + model


def test_evaluate_uniform_model_is_chance():
    task = make_task(10, 20, np.random.default_rng(0))
    x, y = task.sample_balanced(50, np.random.default_rng(1))
    loss, acc = evaluate(np.zeros(task.dim), x, y, 10)
    assert loss == pytest.approx(math.log(10), rel=1e-9)
    assert acc == pytest.approx(0.1, abs=0.02)


def test_evaluate_perfect_fit_accuracy_one():
    # orthonormal class centers: the template classifier is exact at low noise
    from aoisched.flsim import SyntheticTask

    task = SyntheticTask(
        centers=np.eye(3, 5), noise=0.01, feature_scales=np.ones(5)
    )
    x, y = task.sample_balanced(30, np.random.default_rng(3))
    _, acc = evaluate(100.0 * task.centers.ravel(), x, y, 3)
    assert acc == 1.0


def test_evaluate_matches_independent_recount():
    task = make_task(4, 6, np.random.default_rng(4))
    x, y = task.sample_balanced(25, np.random.default_rng(5))
    w = np.random.default_rng(6).standard_normal(task.dim)
    loss, acc = evaluate(w, x, y, 4)
    # explicit per-sample recomputation
    wm = w.reshape(4, 6)
    losses, hits = [], []
    for xi, yi in zip(x, y):
        logits = wm @ xi
        p = np.exp(logits - logits.max())
        p /= p.sum()
        losses.append(-math.log(p[yi] + 1e-12))
        hits.append(int(np.argmax(p) == yi))
    assert loss == pytest.approx(np.mean(losses), abs=1e-10)
    assert acc == pytest.approx(np.mean(hits), abs=1e-12)


def test_evaluate_rejects_empty():
    with pytest.raises(ValueError):
        evaluate(np.zeros(8), np.zeros((0, 2)), np.zeros(0, dtype=int), 4)


def test_gradient_matches_finite_differences():
    task = make_task(3, 4, np.random.default_rng(7))
    x, y = task.sample_balanced(10, np.random.default_rng(8))
    w = 0.1 * np.random.default_rng(9).standard_normal(task.dim)
    g = ce_gradient(w, x, y, 3)
    eps = 1e-6
    for k in (0, 3, 7, 11):
        wp, wm = w.copy(), w.copy()
        wp[k] += eps
        wm[k] -= eps
        num = (evaluate(wp, x, y, 3)[0] - evaluate(wm, x, y, 3)[0]) / (2 * eps)
        assert g[k] == pytest.approx(num, abs=1e-5)


def test_local_sgd_zero_rate_is_identity():
    task = make_task(3, 4, np.random.default_rng(0))
    x, y = task.sample_balanced(8, np.random.default_rng(1))
    w0 = np.random.default_rng(2).standard_normal(task.dim)
    w1 = local_sgd(w0, x, y, 3, eta=0.0, epochs=3, batch_size=4,
                   rng=np.random.default_rng(3))
    assert np.array_equal(w0, w1)


def test_local_sgd_single_full_batch_step_is_exact_gradient_step():
    task = make_task(3, 4, np.random.default_rng(4))
    x, y = task.sample_balanced(6, np.random.default_rng(5))
    w0 = 0.05 * np.random.default_rng(6).standard_normal(task.dim)
    eta = 0.2
    w1 = local_sgd(w0, x, y, 3, eta=eta, epochs=1, batch_size=len(y),
                   rng=np.random.default_rng(7))
    # independent analytic gradient via explicit loops
    wm = w0.reshape(3, 4)
    grad = np.zeros((3, 4))
    for xi, yi in zip(x, y):
        logits = wm @ xi
        p = np.exp(logits - logits.max())
        p /= p.sum()
        for c in range(3):
            grad[c] += (p[c] - (c == yi)) * xi
    grad /= len(y)
    assert np.allclose(w1, w0 - eta * grad.ravel(), atol=1e-12)
    # cumulative update recovers the batch gradient: (w0 - w1)/eta = grad
    assert np.allclose((w0 - w1) / eta, grad.ravel(), atol=1e-10)


def test_local_sgd_descends_on_convex_task():
    task = make_task(5, 8, np.random.default_rng(8))
    x, y = task.sample_balanced(40, np.random.default_rng(9))
    w = np.zeros(task.dim)
    prev = evaluate(w, x, y, 5)[0]
    for _ in range(20):
        w = local_sgd(w, x, y, 5, eta=0.05, epochs=1, batch_size=len(y),
                      rng=np.random.default_rng(0))
        cur = evaluate(w, x, y, 5)[0]
        assert cur <= prev + 1e-9
        prev = cur


def test_local_sgd_rejects_empty_shard():
    with pytest.raises(ValueError, match="empty"):
        local_sgd(np.zeros(6), np.zeros((0, 2)), np.zeros(0, dtype=int), 3,
                  eta=0.1, epochs=1, batch_size=4, rng=np.random.default_rng(0))


# ---------------------------------------------------------------------------
# partitioning


def test_dirichlet_partition_conserves_samples():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(5), 40)
    shards = dirichlet_partition(labels, 0.5, 7, rng)
    all_idx = np.concatenate(shards)
    assert len(all_idx) == len(labels)
    assert len(np.unique(all_idx)) == len(labels)


def test_dirichlet_partition_near_uniform_for_huge_alpha():
    rng = np.random.default_rng(1)
    labels = np.repeat(np.arange(10), 1000)
    shards = dirichlet_partition(labels, 1e6, 10, rng)
    for s in shards:
        props = np.bincount(labels[s], minlength=10) / len(s)
        assert np.all(np.abs(props - 0.1) < 0.02)


def test_dirichlet_partition_skews_for_small_alpha():
    labels = np.repeat(np.arange(10), 200)
    saw_extreme = False
    for seed in range(10):
        shards = dirichlet_partition(labels, 0.1, 10, np.random.default_rng(seed))
        for s in shards:
            if len(s) and np.bincount(labels[s], minlength=10).max() / len(s) > 0.6:
                saw_extreme = True
    assert saw_extreme


def test_dirichlet_partition_rejects_bad_alpha():
    with pytest.raises(ValueError):
        dirichlet_partition(np.zeros(10, dtype=int), 0.0, 2, np.random.default_rng(0))


def test_dirichlet_partition_gives_everyone_data():
    labels = np.repeat(np.arange(2), 30)
    for seed in range(5):
        shards = dirichlet_partition(labels, 0.05, 6, np.random.default_rng(seed))
        assert all(len(s) >= 1 for s in shards)


# ---------------------------------------------------------------------------
# world / rounds


def _small_world(policy="glr-cucb", means=None, rounds=12, **kw):
    n = 4
    if means is None:
        means = [[0.9, 0.8, 0.3, 0.2]]
    env = make_piecewise(n, rounds, [], means)
    defaults = dict(
        eta=0.1, epochs=1, batch_size=16, alpha_dirichlet=1.0, rounds=rounds,
        samples_per_client=40, n_classes=4, feat_dim=6, noise=0.5,
        val_per_class=25, condition_number=4.0,
    )
    defaults.update(kw)
    return FlWorld(env, policy, n_clients=2, seed=0, **defaults)


def test_round_all_good_resets_all_ages():
    w = _small_world(means=[[1.0, 1.0, 1.0, 1.0]])
    rec = w.run_round()
    assert rec.n_success == 2
    assert rec.ages.tolist() == [1, 1]


def test_round_all_bad_freezes_model_and_ages_grow():
    w = _small_world(means=[[0.0, 0.0, 0.0, 0.0]])
    before = w.model.copy()
    for k in range(3):
        rec = w.run_round()
    assert np.array_equal(w.model, before)
    assert rec.ages.tolist() == [4, 4]
    assert rec.n_success == 0


def test_straggler_carries_cumulative_update_bit_identical():
    # only one Good channel: one of the two clients fails every round
    w = _small_world(means=[[1.0, 0.0, 0.0, 0.0]])
    w.run_round()
    failed = [i for i in range(2) if w.ledger.ages[i] > 1]
    assert failed
    frozen = {i: w.clients[i].cum_update.copy() for i in failed}
    w.run_round()
    # a client outside S_{t-1} does no local work, so its cached update
    # survives bit-for-bit even if it happens to transmit this round
    for i in failed:
        assert np.array_equal(w.clients[i].cum_update, frozen[i])


def test_success_set_matches_assignment_states():
    w = _small_world()
    for _ in range(8):
        rec = w.run_round()
        states = w.realizations[rec.round - 1]
        for i in range(2):
            ch = int(w.last_assignment.channel_of[i])
            assert (w.ledger.ages[i] == 1) == bool(states[ch] == 1)


def test_full_participation_uniform_weights_is_gradient_descent():
    # all-Good channels, matching off, E=1 full batch: synchronous GD
    w = _small_world(
        means=[[1.0, 1.0, 1.0, 1.0]], epochs=1, batch_size=10_000, eta=0.05,
        rounds=30,
    )
    losses = [w.run_round().loss for _ in range(30)]
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def test_smoke_run_improves_over_round_zero():
    w = _small_world(rounds=40)
    chance = evaluate(np.zeros(w.task.dim), w.x_val, w.y_val, w.task.n_classes)[1]
    recs = w.run()
    assert recs[-1].accuracy > chance


def test_world_deterministic_given_seed():
    a = _small_world(rounds=15, matching_enabled=True)
    b = _small_world(rounds=15, matching_enabled=True)
    ra = a.run()
    rb = b.run()
    assert [r.loss for r in ra] == [r.loss for r in rb]
    assert [r.ages.tolist() for r in ra] == [r.ages.tolist() for r in rb]
    assert np.array_equal(a.model, b.model)


def test_world_matching_enabled_runs_and_logs():
    w = _small_world(rounds=10, matching_enabled=True, log_matching=True)
    w.run()
    assert len(w.match_log) == 10 * 2
    for row in w.match_log:
        assert 0.0 <= row.age_norm <= 1.0
        assert row.zeta >= 0.0


def test_world_rejects_bad_rounds():
    env = make_piecewise(4, 5, [], [[0.5] * 4])
    with pytest.raises(ValueError, match="horizon"):
        FlWorld(env, "random", 2, seed=0, rounds=10)


def test_world_rejects_unknown_policy():
    env = make_piecewise(4, 5, [], [[0.5] * 4])
    with pytest.raises(ValueError, match="unknown policy"):
        FlWorld(env, "ucb1", 2, seed=0, rounds=5)


def test_world_mexp3_with_ucb_mode_falls_back_to_means():
    w = _small_world("mexp3", rounds=8, matching_enabled=True,
                     matching_mode="ucb", gamma=0.3)
    recs = w.run()
    assert len(recs) == 8  # ranking fell back to historical means
