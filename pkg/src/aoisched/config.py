"""Experiment configuration: JSON documents with all defaults made explicit.

``resolve_config`` validates a raw dict and fills every default, so the
serialized form is self-contained and round-trips exactly (parse ->
serialize -> parse is the identity on resolved configs).
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .env import (
    ChannelEnvironment,
    gen_adversarial_flips,
    load_adversarial_csv,
    make_adversarial,
    make_piecewise,
)
from .runner import PolicySpec

POLICY_DEFAULTS = {"aa": False, "gamma": 0.1, "alpha": None, "delta": 0.001}
MATCHING_DEFAULTS = {"enabled": False, "beta": 0.5, "mode": "ucb"}
FL_DEFAULTS = {
    "eta": 0.1,
    "epochs": 2,
    "batch_size": 32,
    "alpha_dirichlet": 0.5,
    "rounds": 250,
    "samples_per_client": 200,
    "n_classes": 10,
    "feat_dim": 20,
    "noise": 0.6,
    "center_scale": 1.0,
    "condition_number": 25.0,
    "val_per_class": 100,
}


class ConfigError(ValueError):
    """Invalid experiment config; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


def _require(cond, fld, msg):
    if not cond:
        raise ConfigError(fld, msg)


def resolve_config(raw: dict) -> dict:
    """Validate and normalize a config dict; returns the fully explicit form."""
    _require(isinstance(raw, dict), "<root>", "config must be a JSON object")
    known = {
        "name", "n_clients", "env", "policies", "matching", "fl", "seeds",
        "output_dir", "log_decisions", "log_matching", "dump_shards",
    }
    for key in raw:
        _require(key in known, key, "unknown field")

    name = raw.get("name", "experiment")
    _require(isinstance(name, str) and name, "name", "must be a non-empty string")

    n_clients = raw.get("n_clients")
    _require(
        isinstance(n_clients, int) and n_clients >= 1,
        "n_clients", "must be an integer >= 1",
    )

    env = _resolve_env(raw.get("env"))
    _require(
        env["n_channels"] >= n_clients,
        "n_clients", f"needs n_channels >= n_clients, got {env['n_channels']} < {n_clients}",
    )

    policies = raw.get("policies")
    _require(
        isinstance(policies, list) and policies, "policies", "must be a non-empty list"
    )
    resolved_policies = [_resolve_policy(p, i) for i, p in enumerate(policies)]
    labels = [_label(p) for p in resolved_policies]
    _require(len(set(labels)) == len(labels), "policies", "duplicate policy entries")

    matching = dict(MATCHING_DEFAULTS)
    matching.update(raw.get("matching") or {})
    for key in matching:
        _require(key in MATCHING_DEFAULTS, f"matching.{key}", "unknown field")
    _require(
        isinstance(matching["enabled"], bool), "matching.enabled", "must be a boolean"
    )
    _require(
        0.0 <= float(matching["beta"]) <= 1.0, "matching.beta", "must lie in [0, 1]"
    )
    _require(
        matching["mode"] in ("ucb", "mean"), "matching.mode", "must be 'ucb' or 'mean'"
    )
    if matching["enabled"]:
        _require(
            matching["mode"] != "ucb"
            or any(p["name"] == "glr-cucb" for p in resolved_policies),
            "matching.mode", "'ucb' ranking needs a glr-cucb policy",
        )

    fl = raw.get("fl")
    if fl is not None:
        resolved_fl = dict(FL_DEFAULTS)
        resolved_fl.update(fl)
        for key in resolved_fl:
            _require(key in FL_DEFAULTS, f"fl.{key}", "unknown field")
        for key in ("epochs", "batch_size", "rounds", "samples_per_client",
                    "n_classes", "feat_dim", "val_per_class"):
            _require(
                isinstance(resolved_fl[key], int) and resolved_fl[key] >= 1,
                f"fl.{key}", "must be an integer >= 1",
            )
        _require(float(resolved_fl["eta"]) > 0.0, "fl.eta", "must be positive")
        _require(
            float(resolved_fl["alpha_dirichlet"]) > 0.0,
            "fl.alpha_dirichlet", "must be positive",
        )
        _require(
            resolved_fl["rounds"] <= env["horizon"],
            "fl.rounds", "must not exceed env.horizon",
        )
        fl = resolved_fl
        if matching["enabled"]:
            _require(
                any(p["name"] in ("mexp3", "glr-cucb") for p in resolved_policies),
                "matching.enabled", "matching needs a learning policy",
            )

    seeds = raw.get("seeds")
    _require(
        isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
        "seeds", "must be a non-empty list of integers",
    )
    _require(len(set(seeds)) == len(seeds), "seeds", "must be distinct")

    out = {
        "name": name,
        "n_clients": n_clients,
        "env": env,
        "policies": resolved_policies,
        "matching": matching,
        "fl": fl,
        "seeds": list(seeds),
        "output_dir": raw.get("output_dir", f"runs/{name}"),
        "log_decisions": bool(raw.get("log_decisions", False)),
        "log_matching": bool(raw.get("log_matching", False)),
        "dump_shards": bool(raw.get("dump_shards", False)),
    }
    return out


def _resolve_env(env) -> dict:
    _require(isinstance(env, dict), "env", "must be an object")
    kind = env.get("kind")
    _require(
        kind in ("stationary", "piecewise", "adversarial"),
        "env.kind", "must be stationary, piecewise or adversarial",
    )
    n = env.get("n_channels")
    _require(isinstance(n, int) and n >= 1, "env.n_channels", "must be an integer >= 1")
    horizon = env.get("horizon")
    _require(
        isinstance(horizon, int) and horizon >= 1,
        "env.horizon", "must be an integer >= 1",
    )
    out = {"kind": kind, "n_channels": n, "horizon": horizon}
    if kind == "adversarial":
        src = env.get("source")
        _require(isinstance(src, dict), "env.source", "must be an object")
        if "csv" in src:
            out["source"] = {"csv": str(src["csv"])}
        else:
            _require(
                "flip_probability" in src and "seed" in src,
                "env.source", "needs either csv or flip_probability+seed",
            )
            p = float(src["flip_probability"])
            _require(0.0 <= p <= 1.0, "env.source.flip_probability", "must lie in [0, 1]")
            out["source"] = {"flip_probability": p, "seed": int(src["seed"])}
    else:
        breakpoints = env.get("breakpoints", [])
        means = env.get("segment_means")
        _require(
            isinstance(means, list) and means, "env.segment_means", "must be a list"
        )
        try:
            make_piecewise(n, horizon, breakpoints, means)
        except ValueError as exc:
            raise ConfigError("env.segment_means", str(exc)) from exc
        _require(
            (kind == "stationary") == (len(breakpoints) == 0),
            "env.kind", "stationary means zero breakpoints",
        )
        out["breakpoints"] = [int(b) for b in breakpoints]
        out["segment_means"] = [[float(v) for v in row] for row in means]
    return out


def _resolve_policy(p, i) -> dict:
    fld = f"policies[{i}]"
    _require(isinstance(p, dict), fld, "must be an object")
    name = p.get("name")
    _require(
        name in ("oracle", "random", "mexp3", "glr-cucb"),
        f"{fld}.name", "must be oracle, random, mexp3 or glr-cucb",
    )
    out = {"name": name}
    out.update(POLICY_DEFAULTS)
    for key, val in p.items():
        if key == "name":
            continue
        _require(key in POLICY_DEFAULTS, f"{fld}.{key}", "unknown field")
        out[key] = val
    _require(isinstance(out["aa"], bool), f"{fld}.aa", "must be a boolean")
    if out["aa"]:
        _require(
            name in ("mexp3", "glr-cucb"), f"{fld}.aa", "needs a learning policy"
        )
    _require(0.0 < float(out["gamma"]) <= 1.0, f"{fld}.gamma", "must lie in (0, 1]")
    _require(float(out["delta"]) > 0.0, f"{fld}.delta", "must be positive")
    if out["alpha"] is not None:
        _require(float(out["alpha"]) >= 0.0, f"{fld}.alpha", "must be >= 0")
    return out


def _label(policy: dict) -> str:
    return policy["name"] + ("+aa" if policy["aa"] else "")


def policy_spec(policy: dict) -> PolicySpec:
    return PolicySpec(
        name=policy["name"],
        aa=policy["aa"],
        gamma=float(policy["gamma"]),
        alpha=None if policy["alpha"] is None else float(policy["alpha"]),
        delta=float(policy["delta"]),
    )


def build_env(env_cfg: dict) -> ChannelEnvironment:
    if env_cfg["kind"] == "adversarial":
        src = env_cfg["source"]
        if "csv" in src:
            mat = load_adversarial_csv(src["csv"])
            if mat.shape != (env_cfg["n_channels"], env_cfg["horizon"]):
                raise ConfigError(
                    "env.source.csv",
                    f"matrix shape {mat.shape} != "
                    f"({env_cfg['n_channels']}, {env_cfg['horizon']})",
                )
        else:
            mat = gen_adversarial_flips(
                env_cfg["n_channels"],
                env_cfg["horizon"],
                src["flip_probability"],
                src["seed"],
            )
        return make_adversarial(mat)
    return make_piecewise(
        env_cfg["n_channels"],
        env_cfg["horizon"],
        env_cfg["breakpoints"],
        [np.asarray(m) for m in env_cfg["segment_means"]],
    )


def to_json(resolved: dict) -> str:
    return json.dumps(resolved, indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> dict:
    return resolve_config(json.loads(text))


def config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
