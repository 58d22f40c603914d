"""Built-in experiment presets.

Each preset expands to a list of resolved configs (a family shares one output
root). Channel means are fixed here so runs are exactly reproducible; the
segment vectors were chosen to give well-separated best pairs (gap >= 0.25)
with a mix of disruptive and benign switches.

The aliases fig2a/fig2b/fig2c/fig34 are shorthand for the figures these
families produce: regret overview, regret vs breakpoints, regret vs channel
count, and the FL accuracy/AoI-variance trends.
"""

from __future__ import annotations

import numpy as np

from .config import resolve_config

HORIZON = 20_000

# 6 segments / 5 breakpoints. The strong pair {0, 1} stays put (gap 0.3 to
# the rest) while the weak channels reshuffle at every switch; disruptive
# best-pair changes are exercised by the regret-breakpoints preset instead.
MAIN_SEGMENT_MEANS = [
    [0.90, 0.80, 0.50, 0.30, 0.15],
    [0.90, 0.80, 0.50, 0.15, 0.30],
    [0.90, 0.80, 0.50, 0.35, 0.10],
    [0.90, 0.80, 0.50, 0.20, 0.25],
    [0.90, 0.80, 0.50, 0.30, 0.15],
    [0.90, 0.80, 0.50, 0.25, 0.20],
]

MEXP3_GAMMA = 0.08


def _equal_breakpoints(horizon: int, n_breaks: int) -> list:
    return [horizon * (k + 1) // (n_breaks + 1) + 1 for k in range(n_breaks)]


def regret_main() -> list:
    """5 channels, 2 clients, 5 breakpoints: all schedulers, 10 seeds."""
    cfg = {
        "name": "regret-main",
        "n_clients": 2,
        "env": {
            "kind": "piecewise",
            "n_channels": 5,
            "horizon": HORIZON,
            "breakpoints": _equal_breakpoints(HORIZON, 5),
            "segment_means": MAIN_SEGMENT_MEANS,
        },
        "policies": [
            {"name": "oracle"},
            {"name": "random"},
            {"name": "mexp3", "gamma": MEXP3_GAMMA},
            {"name": "mexp3", "gamma": MEXP3_GAMMA, "aa": True},
            {"name": "glr-cucb"},
            {"name": "glr-cucb", "aa": True},
        ],
        "seeds": list(range(10)),
        "output_dir": "runs/regret-main",
    }
    return [resolve_config(cfg)]


def regret_breakpoints() -> list:
    """GLR-CUCB regret as the breakpoint count grows (0, 4, 8, 12)."""
    base = np.array([0.85, 0.75, 0.45, 0.30, 0.15])
    family = []
    for c_t in (0, 4, 8, 12):
        means = [list(np.roll(base, j)) for j in range(c_t + 1)]
        cfg = {
            "name": f"regret-breakpoints-ct{c_t}",
            "n_clients": 2,
            "env": {
                "kind": "stationary" if c_t == 0 else "piecewise",
                "n_channels": 5,
                "horizon": HORIZON,
                "breakpoints": _equal_breakpoints(HORIZON, c_t),
                "segment_means": means,
            },
            "policies": [
                {"name": "oracle"},
                {"name": "random"},
                {"name": "glr-cucb"},
            ],
            "seeds": list(range(10)),
            "output_dir": "runs/regret-breakpoints",
        }
        family.append(resolve_config(cfg))
    return family


def regret_channels() -> list:
    """M-Exp3 regret as the super-arm count grows (N = 4, 5, 6; M = 2).

    The two strong channels are stable across segments; extra channels are
    unattractive, so a larger system only enlarges the exploration burden.
    """
    ch2 = [0.50, 0.35, 0.55, 0.40, 0.50, 0.45]
    ch3 = [0.30, 0.45, 0.25, 0.35, 0.30, 0.40]
    family = []
    for n in (4, 5, 6):
        means = []
        for j in range(6):
            row = [0.90, 0.80, ch2[j], ch3[j]]
            if n >= 5:
                row.append(0.30)
            if n >= 6:
                row.append(0.25)
            means.append(row)
        cfg = {
            "name": f"regret-channels-n{n}",
            "n_clients": 2,
            "env": {
                "kind": "piecewise",
                "n_channels": n,
                "horizon": HORIZON,
                "breakpoints": _equal_breakpoints(HORIZON, 5),
                "segment_means": means,
            },
            "policies": [
                {"name": "oracle"},
                {"name": "random"},
                {"name": "mexp3", "gamma": MEXP3_GAMMA},
            ],
            "seeds": list(range(10)),
            "output_dir": "runs/regret-channels",
        }
        family.append(resolve_config(cfg))
    return family


FL_ROUNDS = 250
FL_CHANNELS = 30
FL_CLIENTS = 20


def _fl_segment_means() -> tuple:
    """20 good / 10 poor channels; the good block rotates at each breakpoint."""
    base = np.array([0.90] * 20 + [0.05] * 10)
    breakpoints = _equal_breakpoints(FL_ROUNDS, 2)
    means = [list(np.roll(base, 10 * j)) for j in range(3)]
    return breakpoints, means


def fl_trends() -> list:
    """Full pipeline: learned scheduling + aware matching vs random, plus the
    all-Good-channel ceiling run used as the convergence reference.

    Severe non-IID shards (Dirichlet 0.1) and an ill-conditioned feature map
    make convergence speed hinge on fresh, broad participation.
    """
    breakpoints, means = _fl_segment_means()
    fl = {
        "rounds": FL_ROUNDS,
        "alpha_dirichlet": 0.1,
        "condition_number": 100.0,
        "noise": 0.6,
        "eta": 0.1,
    }
    family = []
    family.append(
        resolve_config(
            {
                "name": "fl-learned",
                "n_clients": FL_CLIENTS,
                "env": {
                    "kind": "piecewise",
                    "n_channels": FL_CHANNELS,
                    "horizon": FL_ROUNDS,
                    "breakpoints": breakpoints,
                    "segment_means": means,
                },
                "policies": [{"name": "glr-cucb"}],
                "matching": {"enabled": True, "beta": 0.5, "mode": "ucb"},
                "fl": dict(fl),
                "seeds": list(range(5)),
                "output_dir": "runs/fl-trends",
            }
        )
    )
    family.append(
        resolve_config(
            {
                "name": "fl-random",
                "n_clients": FL_CLIENTS,
                "env": {
                    "kind": "piecewise",
                    "n_channels": FL_CHANNELS,
                    "horizon": FL_ROUNDS,
                    "breakpoints": breakpoints,
                    "segment_means": means,
                },
                "policies": [{"name": "random"}],
                "fl": dict(fl),
                "seeds": list(range(5)),
                "output_dir": "runs/fl-trends",
            }
        )
    )
    family.append(
        resolve_config(
            {
                "name": "fl-ceiling",
                "n_clients": FL_CLIENTS,
                "env": {
                    "kind": "stationary",
                    "n_channels": FL_CHANNELS,
                    "horizon": FL_ROUNDS,
                    "breakpoints": [],
                    "segment_means": [[1.0] * FL_CHANNELS],
                },
                "policies": [{"name": "glr-cucb"}],
                "matching": {"enabled": True, "beta": 0.5, "mode": "ucb"},
                "fl": dict(fl),
                "seeds": list(range(5)),
                "output_dir": "runs/fl-trends",
            }
        )
    )
    return family


PRESETS = {
    "regret-main": regret_main,
    "regret-breakpoints": regret_breakpoints,
    "regret-channels": regret_channels,
    "fl-trends": fl_trends,
}

ALIASES = {
    "fig2a": "regret-main",
    "fig2b": "regret-breakpoints",
    "fig2c": "regret-channels",
    "fig34": "fl-trends",
}


def preset_names() -> list:
    return sorted(PRESETS)


def get_preset(name: str) -> list:
    key = ALIASES.get(name, name)
    if key not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return PRESETS[key]()
