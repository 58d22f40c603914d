"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Criteria 1-4 run the bandit presets in-process (shared fixtures, common
random numbers per seed); 5-7 check the closed-form and detector oracles;
8-9 run the full federated pipeline; 10 sweeps the structural invariants
over randomized cases.
"""

import time

import numpy as np
import pytest

from aoisched.aoi import AoiLedger, aoi_regret, expected_aoi_stationary, mean_aoi_uniform
from aoisched.config import build_env, policy_spec
from aoisched.env import make_piecewise
from aoisched.experiment import _build_world
from aoisched.kernels import argsort_desc
from aoisched.policy import (
    GlrCucbScheduler,
    MExp3Scheduler,
    glr_first_detection,
    kl_bernoulli,
    oracle_select,
    random_select,
)
from aoisched.presets import get_preset
from aoisched.runner import PolicySpec, loglog_slope, run_bandit, run_policies

REPORT = "ACCEPTANCE {num:>2} {name}: PASS"


def _mean_final(outcomes, label):
    return float(np.mean([o.regrets[label].final for o in outcomes]))


def _mean_curve(outcomes, label):
    return np.mean([o.regrets[label].curve for o in outcomes], axis=0)


@pytest.fixture(scope="module")
def main_preset_outcomes():
    cfg = get_preset("regret-main")[0]
    env = build_env(cfg["env"])
    specs = [policy_spec(p) for p in cfg["policies"]]
    # compile the kernels outside the timed region
    warm = make_piecewise(5, 60, [], [cfg["env"]["segment_means"][0]])
    run_policies(warm, specs, cfg["n_clients"], seed=0)
    t0 = time.perf_counter()
    outcomes = [run_policies(env, specs, cfg["n_clients"], s) for s in cfg["seeds"]]
    elapsed = time.perf_counter() - t0
    return outcomes, elapsed


def test_criterion_1_sublinear_regret(main_preset_outcomes):
    outcomes, elapsed = main_preset_outcomes
    rnd = _mean_final(outcomes, "random")
    mexp3 = _mean_final(outcomes, "mexp3")
    cucb = _mean_final(outcomes, "glr-cucb")
    assert mexp3 < 0.5 * rnd, f"mexp3 {mexp3:.0f} vs random {rnd:.0f}"
    assert cucb < 0.5 * rnd, f"glr-cucb {cucb:.0f} vs random {rnd:.0f}"

    horizon = len(_mean_curve(outcomes, "random"))
    lo, hi = 2000, horizon
    s_mexp3 = loglog_slope(_mean_curve(outcomes, "mexp3"), lo, hi)
    s_cucb = loglog_slope(_mean_curve(outcomes, "glr-cucb"), lo, hi)
    s_rnd = loglog_slope(_mean_curve(outcomes, "random"), lo, hi)
    assert s_mexp3 < 0.9, f"mexp3 slope {s_mexp3:.3f}"
    assert s_cucb < 0.9, f"glr-cucb slope {s_cucb:.3f}"
    assert s_rnd >= 0.95, f"random slope {s_rnd:.3f}"
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s"
    print(
        REPORT.format(num=1, name="sublinear regret")
        + f" (ratios {mexp3 / rnd:.3f}/{cucb / rnd:.3f}, slopes "
        + f"{s_mexp3:.2f}/{s_cucb:.2f}/{s_rnd:.2f}, {elapsed:.1f}s)"
    )


def test_criterion_2_aoi_aware_improves(main_preset_outcomes):
    outcomes, _ = main_preset_outcomes
    plain = _mean_final(outcomes, "glr-cucb")
    aware = _mean_final(outcomes, "glr-cucb+aa")
    assert aware <= plain, f"aa {aware:.0f} vs plain {plain:.0f}"
    print(REPORT.format(num=2, name="AoI-aware improvement")
          + f" ({aware:.0f} <= {plain:.0f})")


def test_criterion_3_breakpoint_monotonicity():
    means, stds = [], []
    for cfg in get_preset("regret-breakpoints"):
        env = build_env(cfg["env"])
        specs = [policy_spec(p) for p in cfg["policies"]]
        finals = [
            run_policies(env, specs, cfg["n_clients"], s).regrets["glr-cucb"].final
            for s in cfg["seeds"]
        ]
        means.append(float(np.mean(finals)))
        stds.append(float(np.std(finals)))
    inversions = [
        i for i in range(len(means) - 1) if means[i + 1] < means[i]
    ]
    assert len(inversions) <= 1, f"means {means}"
    for i in inversions:
        slack = max(stds[i], stds[i + 1])
        assert means[i] - means[i + 1] <= slack, f"inversion beyond 1 std: {means}"
    print(REPORT.format(num=3, name="breakpoint monotonicity")
          + f" (means {[round(m) for m in means]})")


def test_criterion_4_combination_count_monotonicity():
    means = []
    for cfg in get_preset("regret-channels"):
        env = build_env(cfg["env"])
        specs = [policy_spec(p) for p in cfg["policies"]]
        finals = [
            run_policies(env, specs, cfg["n_clients"], s).regrets["mexp3"].final
            for s in cfg["seeds"]
        ]
        means.append(float(np.mean(finals)))
    assert all(a <= b for a, b in zip(means, means[1:])), f"means {means}"
    print(REPORT.format(num=4, name="combination-count monotonicity")
          + f" (means {[round(m) for m in means]})")


def test_criterion_5_uniform_selection_oracle():
    m, rounds = 10, 100_000
    rng = np.random.default_rng(2024)
    for s in (1, 2, 5):
        picks = np.argsort(rng.random((rounds, m)), axis=1)[:, :s]
        ledger = AoiLedger.fresh(m)
        for t in range(rounds):
            ledger.update(picks[t])
        sim = ledger.cumulative_age_sum / (rounds * m)
        expect = mean_aoi_uniform(m, s).per_client
        assert abs(sim - expect) / expect < 0.05, f"s={s}: {sim:.3f} vs {expect:.3f}"
    print(REPORT.format(num=5, name="uniform-selection AoI oracle"))


def test_criterion_6_stationary_channel_oracle():
    # the closed form counts consecutive failed rounds, i.e. age - 1 for the
    # 1-based ledger ages (whose long-run mean is 1/mu)
    rounds = 100_000
    for mu, seed in ((0.2, 11), (0.5, 12), (0.9, 13)):
        rng = np.random.default_rng(seed)
        hits = rng.random(rounds) < mu
        ledger = AoiLedger.fresh(1)
        excess = 0
        for t in range(rounds):
            ledger.update({0} if hits[t] else set())
            excess += ledger.ages[0] - 1
        sim = excess / rounds
        expect = expected_aoi_stationary(mu)
        assert abs(sim - expect) / expect < 0.05, f"mu={mu}: {sim:.4f} vs {expect:.4f}"
    print(REPORT.format(num=6, name="stationary-channel AoI oracle"))


def test_criterion_7_glr_detector():
    delta = 0.001
    detected_fast = 0
    false_alarms = 0
    for seed in range(100):
        rng = np.random.default_rng([77, seed])
        stream = np.concatenate([
            (rng.random(500) < 0.2).astype(np.int64),
            (rng.random(300) < 0.8).astype(np.int64),
        ])
        hit = glr_first_detection(stream, delta)
        if hit is not None and hit <= 650:
            detected_fast += 1
        flat = (rng.random(2000) < 0.2).astype(np.int64)
        if glr_first_detection(flat, delta) is not None:
            false_alarms += 1
    assert detected_fast >= 95, f"detections within 150 post-change: {detected_fast}"
    assert false_alarms <= 5, f"false alarms: {false_alarms}"
    print(REPORT.format(num=7, name="GLR detector")
          + f" ({detected_fast}/100 fast, {false_alarms} false alarms)")


@pytest.fixture(scope="module")
def fl_trend_runs():
    out = {}
    for cfg in get_preset("fl-trends"):
        env = build_env(cfg["env"])
        runs = []
        for seed in cfg["seeds"]:
            world = _build_world(cfg, env, cfg["policies"][0], seed)
            world.run()
            runs.append(world)
        out[cfg["name"]] = runs
    return out


def test_criterion_8_fairness_trend(fl_trend_runs):
    learned = np.mean([w.cumulative_variance() for w in fl_trend_runs["fl-learned"]])
    random_ = np.mean([w.cumulative_variance() for w in fl_trend_runs["fl-random"]])
    ratio = learned / random_
    assert ratio <= 0.5, f"cumulative AoI variance ratio {ratio:.3f}"
    print(REPORT.format(num=8, name="fairness trend") + f" (ratio {ratio:.3f})")


def test_criterion_9_convergence_trend(fl_trend_runs):
    def rounds_to(world, threshold):
        for rec in world.records:
            if rec.accuracy >= threshold:
                return rec.round
        return world.rounds + 1

    learned, random_ = [], []
    for seed in range(5):
        ceiling = fl_trend_runs["fl-ceiling"][seed].records[-1].accuracy
        threshold = 0.8 * ceiling
        learned.append(rounds_to(fl_trend_runs["fl-learned"][seed], threshold))
        random_.append(rounds_to(fl_trend_runs["fl-random"][seed], threshold))
    med_l, med_r = np.median(learned), np.median(random_)
    assert med_l < med_r, f"median rounds-to-threshold {med_l} vs {med_r}"
    print(REPORT.format(num=9, name="convergence trend")
          + f" (medians {med_l:.0f} < {med_r:.0f}; per-seed {learned} vs {random_})")


def test_criterion_10_structural_invariants():
    rng = np.random.default_rng(99)
    cases = 1000

    # assignment bijectivity across every policy on randomized states
    for _ in range(cases):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, n + 1))
        kind = rng.integers(0, 4)
        if kind == 0:
            a = random_select(n, m, rng)
        elif kind == 1:
            _, a = oracle_select(rng.random(n), m, int(rng.integers(1, 100)))
        elif kind == 2:
            s = MExp3Scheduler(n, m, gamma=float(rng.uniform(0.05, 1.0)))
            s.weights = rng.random(s.n_combos) + 1e-6
            a = s.select(rng, int(rng.integers(1, 100))).assignment
        else:
            s = GlrCucbScheduler(n, m, alpha=float(rng.uniform(0, 1)), delta=0.01)
            s.mu[:] = rng.random(n)
            s.pulls[:] = rng.integers(0, 50, n)
            a = s.select(rng, int(rng.integers(1, 100))).assignment
        assert len(set(a.channel_of.tolist())) == m

    # M-Exp3 simplex and gamma/C floor on random weights
    for _ in range(cases):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n))
        s = MExp3Scheduler(n, m, gamma=float(rng.uniform(0.01, 1.0)))
        s.weights = rng.random(s.n_combos) + 1e-9
        p = s.probabilities()
        assert abs(p.sum() - 1.0) < 1e-9
        assert p.min() >= s.gamma / s.n_combos - 1e-12

    # aggregation weights form a simplex over the success set
    from aoisched.match import aggregation_weights

    for _ in range(cases):
        m = int(rng.integers(1, 9))
        raw = rng.random(m) * (rng.random() < 0.95)  # sometimes all-zero
        k = int(rng.integers(1, m + 1))
        succ = rng.permutation(m)[:k]
        z = aggregation_weights(raw, succ, m)
        assert abs(z[succ].sum() - 1.0) <= 1e-12
        assert np.all(z >= 0.0)

    # KL non-negativity
    ps = rng.random(cases)
    qs = rng.random(cases)
    assert np.all(kl_bernoulli(ps, qs) >= 0.0)

    # AoI reset/increment exclusivity
    ledger = AoiLedger.fresh(8)
    for _ in range(cases):
        s = set(np.nonzero(rng.random(8) < 0.3)[0])
        prev = ledger.ages.copy()
        ledger.update(s)
        for i in range(8):
            assert (ledger.ages[i] == 1) == (i in s)
            if i not in s:
                assert ledger.ages[i] == prev[i] + 1

    # determinism: identical config + seed reproduce bit-identical traces
    policies = ["random", "mexp3", "glr-cucb"]
    for case in range(cases):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n + 1))
        horizon = int(rng.integers(5, 40))
        env = make_piecewise(n, horizon, [], [rng.random(n)])
        spec = PolicySpec(
            policies[case % 3],
            aa=bool(case % 6 >= 3) and policies[case % 3] != "random",
            gamma=0.2,
        )
        seed = int(rng.integers(0, 2**31))
        r1 = run_bandit(env, spec, m, seed)
        r2 = run_bandit(env, spec, m, seed)
        assert np.array_equal(r1.ages, r2.ages)
        assert np.array_equal(r1.assignment, r2.assignment)

    print(REPORT.format(num=10, name="structural invariant suite")
          + f" ({cases} cases per property)")
