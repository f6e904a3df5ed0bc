"""Incentivized data-contribution games for cross-silo federated training.

Core pieces: the per-slot payoff game with its weighted potential and
brute-force equilibrium oracles (game), pluggable precision models
(precision), the multi-agent slot environment (env), minimal networks with
exact gradients (nets), the decentralized clipped policy-gradient trainer
and baselines (marl), and experiment orchestration (runner, cli).
"""

from .config import (AlphaConfig, ConfigError, ExperimentConfig, OrgParamSpec,
                     PrecisionSpec, TrainerSpec, dump_config, load_config)
from .env import AlphaSchedule, ContributionEnv, Observation, SlotRecord, \
    alpha_update, encode_observation
from .game import (ActionProfile, GridSpec, OrgProfile, PayoffBreakdown,
                   best_response, best_response_dynamics,
                   check_weighted_potential, nash_brute_force, payoff,
                   potential_corrected, potential_literal, redistribution)
from .marl import (ActorState, CriticState, MetricsRow, Trajectory,
                   advantages, bootstrap_targets, clip_eta, collect_rollout,
                   discounted_returns, importance_ratio, surrogate, train)
from .nets import (Mlp, PolicyDistribution, backward, forward, init_mlp,
                   load_checkpoint, policy_sample, save_checkpoint, sgd_step)
from .precision import (ExpSaturation, LogSaturation, MicroFLState,
                        SyntheticFLTask, eval_analytic, microfl_reset,
                        microfl_round)
from .runner import cmd_run, cmd_sweep_alpha, emit_csv, sample_orgs
from .svg import Series, emit_svg

__version__ = "0.1.0"
