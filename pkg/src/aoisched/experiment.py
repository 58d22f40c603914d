"""Experiment execution and metric files.

Every CSV starts with a schema comment line (``# aoisched-csv v1 <kind>``)
followed by a header row. A ``manifest.json`` written next to the CSVs holds
the fully resolved config, its hash and the seed list, which is everything
needed to reproduce the files byte-for-byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .aoi import aoi_variance
from .config import build_env, config_hash, policy_spec
from .flsim import FlWorld
from .runner import loglog_slope, realize, run_policies

CSV_VERSION = "aoisched-csv v1"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _write_csv(path: Path, kind: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION} {kind}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_bandit_csv(path: Path, ages: np.ndarray, regret_curve: np.ndarray) -> None:
    """Columns: round, per-client ages, V_t, cumulative regret."""
    horizon, m = ages.shape
    header = ["round"] + [f"a_{i+1}" for i in range(m)] + ["V_t", "regret"]
    variances = [aoi_variance(ages[ti]) for ti in range(horizon)]
    rows = (
        [ti + 1, *ages[ti], variances[ti], regret_curve[ti]] for ti in range(horizon)
    )
    _write_csv(path, "bandit", header, rows)


def write_fl_csv(path: Path, records) -> None:
    """Columns: round, loss, accuracy, |S_t|, per-client ages, V_t, regret."""
    m = records[0].ages.shape[0]
    header = (
        ["round", "loss", "accuracy", "n_success"]
        + [f"a_{i+1}" for i in range(m)]
        + ["V_t", "regret"]
    )
    rows = (
        [r.round, r.loss, r.accuracy, r.n_success, *r.ages, r.variance, r.regret]
        for r in records
    )
    _write_csv(path, "fl", header, rows)


def write_decisions_csv(path: Path, result, states: np.ndarray) -> None:
    """Columns: round, policy, selected set, assignment, rewards, restart."""
    header = ["round", "policy", "selected", "assignment", "rewards", "restart"]

    def rows():
        for ti in range(result.ages.shape[0]):
            chans = result.assignment[ti]
            rewards = states[ti][chans]
            restart = 0 if result.restarts is None else int(result.restarts[ti])
            yield [
                ti + 1,
                result.label,
                "|".join(str(c) for c in sorted(chans)),
                "|".join(str(c) for c in chans),
                "|".join(str(int(r)) for r in rewards),
                restart,
            ]

    _write_csv(path, "decisions", header, rows())


def write_matching_csv(path: Path, rows) -> None:
    """Columns: round, client, age, normalized age, contribution, priority,
    channel, aggregation weight."""
    header = ["round", "client", "a_i", "a_norm", "C_i", "lambda_i", "channel", "zeta_i"]
    _write_csv(
        path,
        "matching",
        header,
        (
            [r.round, r.client, r.age, r.age_norm, r.contribution, r.priority,
             r.channel, r.zeta]
            for r in rows
        ),
    )


def run_experiment(cfg: dict, output_dir=None, seed_override=None, bandit_only=False):
    """Execute one resolved config; returns the manifest dict."""
    cfg = dict(cfg)
    if seed_override is not None:
        if not seed_override:
            raise ValueError("seed override must not be empty")
        cfg["seeds"] = [int(s) for s in seed_override]
    if bandit_only:
        cfg["fl"] = None
    out_root = Path(output_dir if output_dir is not None else cfg["output_dir"])
    out_dir = out_root / cfg["name"]
    out_dir.mkdir(parents=True, exist_ok=True)

    env = build_env(cfg["env"])
    files = []
    if cfg["fl"] is None:
        specs = [policy_spec(p) for p in cfg["policies"]]
        configured = {s.label for s in specs}
        for seed in cfg["seeds"]:
            outcome = run_policies(env, specs, cfg["n_clients"], seed)
            for label, result in outcome.results.items():
                if label not in configured:
                    continue
                fname = f"{label.replace('+', '-')}_seed{seed}.csv"
                write_bandit_csv(
                    out_dir / fname, result.ages, outcome.regrets[label].curve
                )
                files.append(fname)
                if cfg["log_decisions"]:
                    dname = f"decisions_{label.replace('+', '-')}_seed{seed}.csv"
                    write_decisions_csv(out_dir / dname, result, realize(env, seed))
                    files.append(dname)
    else:
        for policy in cfg["policies"]:
            for seed in cfg["seeds"]:
                world = _build_world(cfg, env, policy, seed)
                world.run()
                label = policy["name"] + ("-aa" if policy["aa"] else "")
                fname = f"fl_{label}_seed{seed}.csv"
                write_fl_csv(out_dir / fname, world.records)
                files.append(fname)
                if cfg["log_matching"] and world.match_log:
                    mname = f"matching_{label}_seed{seed}.csv"
                    write_matching_csv(out_dir / mname, world.match_log)
                    files.append(mname)
                if cfg["dump_shards"]:
                    sname = f"shards_seed{seed}.json"
                    with open(out_dir / sname, "w") as fh:
                        json.dump(
                            {i: s.tolist() for i, s in enumerate(world.shards)},
                            fh, sort_keys=True,
                        )
                        fh.write("\n")
                    if sname not in files:
                        files.append(sname)

    manifest = {
        "name": cfg["name"],
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seeds": cfg["seeds"],
        "version": __version__,
        "files": sorted(files),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _build_world(cfg, env, policy, seed) -> FlWorld:
    fl = cfg["fl"]
    matching = cfg["matching"]
    learned = policy["name"] in ("mexp3", "glr-cucb")
    return FlWorld(
        env=env,
        policy_name=policy["name"],
        n_clients=cfg["n_clients"],
        seed=seed,
        eta=fl["eta"],
        epochs=fl["epochs"],
        batch_size=fl["batch_size"],
        alpha_dirichlet=fl["alpha_dirichlet"],
        rounds=fl["rounds"],
        samples_per_client=fl["samples_per_client"],
        n_classes=fl["n_classes"],
        feat_dim=fl["feat_dim"],
        noise=fl["noise"],
        center_scale=fl["center_scale"],
        condition_number=fl["condition_number"],
        val_per_class=fl["val_per_class"],
        aa=policy["aa"],
        matching_enabled=matching["enabled"] and learned,
        matching_beta=matching["beta"],
        matching_mode=matching["mode"],
        gamma=policy["gamma"],
        alpha_explore=policy["alpha"],
        delta=policy["delta"],
        log_matching=cfg["log_matching"],
    )


# ---------------------------------------------------------------------------
# summaries


def read_metric_csv(path: Path) -> dict:
    """Parse a bandit/fl CSV into named float columns."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing schema comment line")
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def summarize(root) -> list:
    """Aggregate every run under ``root`` into per-(experiment, policy) rows.

    Reports mean/std of final regret, the log-log regret slope over the last
    decade of rounds, final accuracy (FL runs) and cumulative AoI variance.
    Writes ``summary.csv`` next to the manifests' common root.
    """
    root = Path(root)
    manifests = sorted(root.rglob("manifest.json"))
    if not manifests:
        raise FileNotFoundError(f"no manifest.json under {root}")
    rows = []
    for mpath in manifests:
        with open(mpath) as fh:
            manifest = json.load(fh)
        per_policy = {}
        for fname in manifest["files"]:
            if fname.startswith(("decisions_", "matching_", "shards_", "summary")):
                continue
            label, seed = _parse_run_filename(fname)
            cols = read_metric_csv(mpath.parent / fname)
            entry = per_policy.setdefault(label, {"finals": [], "slopes": [],
                                                  "accs": [], "cumvars": []})
            regret = cols["regret"]
            horizon = len(regret)
            entry["finals"].append(regret[-1])
            entry["slopes"].append(
                loglog_slope(regret, max(horizon // 10, 2), horizon)
            )
            entry["cumvars"].append(float(cols["V_t"].sum()))
            if "accuracy" in cols:
                entry["accs"].append(float(cols["accuracy"][-1]))
        for label in sorted(per_policy):
            e = per_policy[label]
            finals = np.array(e["finals"])
            slopes = np.array(e["slopes"])
            row = {
                "experiment": manifest["name"],
                "policy": label,
                "seeds": len(finals),
                "final_regret_mean": float(finals.mean()),
                "final_regret_std": float(finals.std()),
                "loglog_slope": float(np.nanmean(slopes)) if np.any(~np.isnan(slopes)) else float("nan"),
                "cum_aoi_var_mean": float(np.mean(e["cumvars"])),
                "final_acc_mean": float(np.mean(e["accs"])) if e["accs"] else float("nan"),
                "final_acc_std": float(np.std(e["accs"])) if e["accs"] else float("nan"),
            }
            rows.append(row)
    header = list(rows[0].keys())
    _write_csv(
        root / "summary.csv", "summary", header, ([r[k] for k in header] for r in rows)
    )
    return rows


def _parse_run_filename(fname: str):
    stem = fname[:-4]
    label, _, seed = stem.rpartition("_seed")
    if label.startswith("fl_"):
        label = label[3:]
    return label, int(seed)


def format_summary(rows) -> str:
    header = ["experiment", "policy", "seeds", "final_regret_mean",
              "final_regret_std", "loglog_slope", "cum_aoi_var_mean",
              "final_acc_mean"]
    lines = ["  ".join(f"{h:>18}" for h in header)]
    for r in rows:
        cells = []
        for h in header:
            v = r[h]
            if isinstance(v, float):
                cells.append(f"{v:>18.4g}")
            else:
                cells.append(f"{str(v):>18}")
        lines.append("  ".join(cells))
    return "\n".join(lines)
