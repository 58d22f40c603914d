"""Bandit channel scheduling for asynchronous federated learning.

Simulates non-stationary Bernoulli uplink channels, schedules them with
multi-armed-bandit policies (M-Exp3, GLR-CUCB, AoI-aware variants), tracks
per-client age of information and its regret against an oracle, and runs a
desk-scale federated softmax task with contribution/fairness-aware
client-to-channel matching.
"""

__version__ = "0.1.0"

from .aoi import AoiLedger, aoi_regret, expected_aoi_stationary, mean_aoi_uniform
from .env import (
    ChannelEnvironment,
    gen_adversarial_flips,
    make_adversarial,
    make_piecewise,
)
from .policy import (
    AoiAwareScheduler,
    Assignment,
    GlrCucbScheduler,
    MExp3Scheduler,
    glr_change_detected,
    glr_first_detection,
    glr_statistic,
    glr_threshold,
    kl_bernoulli,
    oracle_select,
    random_select,
)
from .runner import PolicySpec, loglog_slope, run_bandit, run_policies

__all__ = [
    "AoiLedger",
    "aoi_regret",
    "expected_aoi_stationary",
    "mean_aoi_uniform",
    "ChannelEnvironment",
    "gen_adversarial_flips",
    "make_adversarial",
    "make_piecewise",
    "AoiAwareScheduler",
    "Assignment",
    "GlrCucbScheduler",
    "MExp3Scheduler",
    "glr_change_detected",
    "glr_first_detection",
    "glr_statistic",
    "glr_threshold",
    "kl_bernoulli",
    "oracle_select",
    "random_select",
    "PolicySpec",
    "loglog_slope",
    "run_bandit",
    "run_policies",
    "__version__",
]
