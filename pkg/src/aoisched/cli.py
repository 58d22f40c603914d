"""Command-line entry point.

Subcommands: ``run`` (execute a config file or preset), ``summarize``
(aggregate a results directory), ``presets`` (list/show built-ins) and
``bench`` (time the jitted kernels against the pure fallback).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from ._jit import NUMBA_ENABLED
from .config import ConfigError, resolve_config, to_json
from .experiment import format_summary, run_experiment, summarize
from .presets import get_preset, preset_names


def _load_configs(target: str):
    path = Path(target)
    if path.exists():
        with open(path) as fh:
            raw = json.load(fh)
        if isinstance(raw, list):
            return [resolve_config(c) for c in raw]
        return [resolve_config(raw)]
    try:
        return get_preset(target)
    except KeyError:
        raise FileNotFoundError(
            f"{target!r} is neither a config file nor a preset "
            f"(presets: {', '.join(preset_names())})"
        )


def _cmd_run(args) -> int:
    configs = _load_configs(args.config)
    for cfg in configs:
        manifest = run_experiment(
            cfg,
            output_dir=args.output,
            seed_override=args.seed_override,
            bandit_only=args.bandit_only,
        )
        print(
            f"{manifest['name']}: wrote {len(manifest['files'])} files "
            f"(config {manifest['config_sha256'][:12]})"
        )
    return 0


def _cmd_summarize(args) -> int:
    rows = summarize(args.directory)
    print(format_summary(rows))
    return 0


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            family = get_preset(name)
            members = ", ".join(c["name"] for c in family)
            print(f"{name}: {members}")
        return 0
    for cfg in get_preset(args.name):
        print(to_json(cfg), end="")
    return 0


def _bench_case(fn, *args, repeat: int) -> float:
    fn(*args)  # warm up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _bench_payload(rounds: int, detector_samples: int, repeat: int) -> dict:
    from .env import make_piecewise
    from .policy import glr_statistic
    from .runner import PolicySpec, run_bandit

    rng = np.random.default_rng(0)
    samples = (rng.random(detector_samples) < 0.4).astype(np.int64)
    table = kernels.xlogx_table(detector_samples)
    prefix = np.concatenate(([0], np.cumsum(samples))).astype(np.int64)

    env = make_piecewise(
        5, rounds, [rounds // 2 + 1],
        [[0.9, 0.7, 0.5, 0.3, 0.1], [0.1, 0.3, 0.5, 0.7, 0.9]],
    )
    out = {
        "glr-statistic": _bench_case(
            lambda: kernels.glr_stat_prefix(prefix, detector_samples, table),
            repeat=repeat,
        ),
        "glr-statistic-numpy": _bench_case(
            lambda: glr_statistic(samples), repeat=repeat
        ),
        "glr-cucb-episode": _bench_case(
            lambda: run_bandit(env, PolicySpec("glr-cucb"), 2, seed=0),
            repeat=repeat,
        ),
        "mexp3-episode": _bench_case(
            lambda: run_bandit(env, PolicySpec("mexp3"), 2, seed=0),
            repeat=repeat,
        ),
    }
    return out


def _cmd_bench(args) -> int:
    mine = _bench_payload(args.rounds, args.detector_samples, args.repeat)
    fallback = None
    if NUMBA_ENABLED and not args.no_subprocess:
        # time the pure path in a subprocess where the JIT flag is off
        code = (
            "import json\n"
            "from aoisched.cli import _bench_payload\n"
            f"print(json.dumps(_bench_payload({args.fallback_rounds}, "
            f"{args.detector_samples}, {args.repeat})))\n"
        )
        env = dict(os.environ, AOISCHED_NO_NUMBA="1")
        proc = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        if proc.returncode == 0:
            fallback = json.loads(proc.stdout.strip().splitlines()[-1])
        else:
            print("fallback benchmark failed:", proc.stderr.strip(), file=sys.stderr)

    mode = "numba" if NUMBA_ENABLED else "pure (AOISCHED_NO_NUMBA)"
    print(f"kernel timings, best of {args.repeat} ({mode} path):")
    print(f"{'case':<24}{'this path [s]':>16}{'pure path [s]':>16}{'speedup':>10}")
    for name, secs in mine.items():
        if fallback is not None and name in fallback:
            ratio = fallback[name] / secs if secs > 0 else float("inf")
            scale = args.rounds / args.fallback_rounds if "episode" in name else 1.0
            print(f"{name:<24}{secs:>16.5f}{fallback[name]:>16.5f}{ratio * scale:>10.1f}")
        else:
            print(f"{name:<24}{secs:>16.5f}{'-':>16}{'-':>10}")
    if fallback is not None:
        print(
            f"(pure-path episodes ran {args.fallback_rounds} rounds vs "
            f"{args.rounds}; speedups are scaled accordingly)"
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aoisched",
        description="Bandit channel scheduling experiments for asynchronous "
        "federated learning with AoI accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config file or preset")
    p_run.add_argument("config", help="path to a JSON config, or a preset name")
    p_run.add_argument("--output", default=None, help="output directory override")
    p_run.add_argument(
        "--seed-override", type=int, nargs="+", default=None, help="replace the seed list"
    )
    p_run.add_argument(
        "--bandit-only", action="store_true", help="skip the FL harness even if configured"
    )
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="aggregate a results directory")
    p_sum.add_argument("directory")
    p_sum.set_defaults(func=_cmd_summarize)

    p_pre = sub.add_parser("presets", help="list or show built-in presets")
    pre_sub = p_pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list")
    p_show = pre_sub.add_parser("show")
    p_show.add_argument("name")
    p_pre.set_defaults(func=_cmd_presets)

    p_bench = sub.add_parser("bench", help="compare jitted kernels vs pure fallback")
    p_bench.add_argument("--rounds", type=int, default=4000)
    p_bench.add_argument("--fallback-rounds", type=int, default=400)
    p_bench.add_argument("--detector-samples", type=int, default=4000)
    p_bench.add_argument("--repeat", type=int, default=3)
    p_bench.add_argument("--no-subprocess", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
