"""Multi-agent slot environment: per-slot game resolution, the adaptive
redistribution-intensity schedule, observation windows, and reward emission.

Each slot, every organization submits a contribution fraction; the precision
source turns the joint profile into a model-precision value; rewards are the
per-org game payoffs at the current intensity alpha and freshly sampled
communication overheads. Agents observe only records of past slots, never
anything from the slot they are acting in.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .game import OrgProfile, payoff
from .rng import substream

ALPHA_DENOM_EPS = 1e-6


@dataclass(frozen=True)
class AlphaSchedule:
    """Intensity schedule: adaptive precision-gain ratio or a constant."""

    alpha0: float = 5.0
    alpha_max: float = 20.0
    mode: str = "adaptive_gain"  # or "constant"

    def __post_init__(self):
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be >= 0")
        if self.alpha_max < self.alpha0:
            raise ValueError("alpha_max must be >= alpha0")
        if self.mode not in ("adaptive_gain", "constant"):
            raise ValueError(f"unknown alpha mode {self.mode!r}")


def alpha_update(p_t: float, p_t_minus_1: float, p_t_minus_2: float,
                 alpha0: float, prev_alpha: float, alpha_max: float) -> float:
    """Next intensity from the ratio of consecutive precision gains.

    alpha = alpha0 * (P_t - P_{t-1}) / (P_{t-1} - P_{t-2}), clamped to
    [0, alpha_max]. A vanishing denominator holds the previous alpha
    (precision plateaus are routine late in training); a negative numerator
    clamps to zero.
    """
    denom = p_t_minus_1 - p_t_minus_2
    if abs(denom) < ALPHA_DENOM_EPS:
        return prev_alpha
    num = p_t - p_t_minus_1
    if num < 0:
        return 0.0
    ratio = num / denom
    return float(min(max(ratio * alpha0, 0.0), alpha_max))


@dataclass(frozen=True)
class SlotRecord:
    """What one agent gets to remember about one finished slot."""

    others_actions: tuple  # d_{-n}, ascending org index with n skipped
    comm_overhead: float
    alpha: float
    precision: float


def zero_record(num_orgs: int) -> SlotRecord:
    return SlotRecord(others_actions=(0.0,) * (num_orgs - 1),
                      comm_overhead=0.0, alpha=0.0, precision=0.0)


@dataclass(frozen=True)
class Observation:
    """Window of the last H slot records, most recent first."""

    window: tuple  # of SlotRecord


def encode_observation(obs: Observation, alpha_max: float) -> np.ndarray:
    """Flatten a window in declared field order, most recent slot first.

    Per record: d_{-n} entries raw, comm overhead raw (unit money scale),
    alpha divided by alpha_max, precision raw. Length is H * (N + 2).
    """
    parts = []
    for rec in obs.window:
        parts.extend(rec.others_actions)
        parts.append(rec.comm_overhead)
        parts.append(rec.alpha / alpha_max)
        parts.append(rec.precision)
    return np.asarray(parts, dtype=float)


class EpisodeFinished(RuntimeError):
    pass


class ContributionEnv:
    """Single-writer environment for one training process.

    reset() without arguments advances to the next episode substream of the
    master seed, so a fixed (seed, action sequence) pair fully determines
    every emission across an arbitrary number of episodes.
    """

    def __init__(self, orgs: Sequence[OrgProfile], schedule: AlphaSchedule,
                 precision_source, horizon: int, window: int,
                 comm_mean: float, comm_std: float, master_seed: int,
                 stream_label: str = "env"):
        if horizon < 1 or window < 1:
            raise ValueError("horizon and window must be >= 1")
        if comm_std < 0:
            raise ValueError("comm_std must be >= 0")
        self.orgs = list(orgs)
        self.num_orgs = len(self.orgs)
        self.schedule = schedule
        self.precision_source = precision_source
        self.horizon = int(horizon)
        self.window = int(window)
        self.comm_mean = float(comm_mean)
        self.comm_std = float(comm_std)
        self.master_seed = int(master_seed)
        self.stream_label = stream_label
        self._episode = -1
        self.t = 0
        self.alpha = schedule.alpha0
        self.precision_history: list[float] = []
        self.comm: np.ndarray = np.zeros(self.num_orgs)
        self.last_actions: np.ndarray = np.zeros(self.num_orgs)
        self._windows: list[list[SlotRecord]] = []
        self._rng = None

    @property
    def obs_dim(self) -> int:
        return self.window * (self.num_orgs + 2)

    def _sample_comm(self) -> np.ndarray:
        draw = self._rng.normal(self.comm_mean, self.comm_std, self.num_orgs)
        return np.maximum(draw, 0.0)

    def reset(self, episode: int | None = None) -> list[Observation]:
        """Start an episode: zero windows, alpha0, fresh comm draws."""
        self._episode = self._episode + 1 if episode is None else int(episode)
        self._rng = substream(self.master_seed, self.stream_label, self._episode)
        self.t = 0
        self.alpha = self.schedule.alpha0
        self.precision_history = []
        self.last_actions = np.zeros(self.num_orgs)
        self.precision_source.reset()
        self.comm = self._sample_comm()
        zero = zero_record(self.num_orgs)
        self._windows = [[zero] * self.window for _ in range(self.num_orgs)]
        return self._observations()

    def _observations(self) -> list[Observation]:
        return [Observation(window=tuple(w)) for w in self._windows]

    def orgs_for_slot(self) -> list[OrgProfile]:
        """Org profiles carrying this slot's sampled communication overheads."""
        return [replace(org, comm_overhead=float(c))
                for org, c in zip(self.orgs, self.comm)]

    def peek_precision(self, actions) -> float:
        """Counterfactual precision at a profile, without advancing state."""
        return float(self.precision_source.peek(np.asarray(actions, dtype=float)))

    def step(self, actions):
        """Resolve one slot. Returns (observations, rewards, info).

        Rewards are exactly the game payoffs at the realized precision,
        the current alpha, and this slot's comm overheads. The adaptive
        alpha update applies to the next slot only.
        """
        if self._rng is None:
            raise RuntimeError("call reset() before step()")
        if self.t >= self.horizon:
            raise EpisodeFinished(f"episode is over after {self.horizon} slots")
        d = np.asarray(actions, dtype=float)
        if d.shape != (self.num_orgs,):
            raise ValueError(f"need {self.num_orgs} actions, got shape {d.shape}")
        if (d < 0).any() or (d > 1).any() or not np.isfinite(d).all():
            raise ValueError("actions must lie in [0, 1]")

        p_value = float(self.precision_source.observe(d))
        slot_orgs = self.orgs_for_slot()
        breakdowns = [payoff(n, d, p_value, slot_orgs, self.alpha)
                      for n in range(self.num_orgs)]
        rewards = np.array([b.total for b in breakdowns])
        info = {"precision": p_value, "alpha": self.alpha,
                "comm": self.comm.copy(), "breakdowns": breakdowns}

        for n in range(self.num_orgs):
            others = tuple(float(d[j]) for j in range(self.num_orgs) if j != n)
            rec = SlotRecord(others_actions=others,
                             comm_overhead=float(self.comm[n]),
                             alpha=self.alpha, precision=p_value)
            self._windows[n] = [rec] + self._windows[n][:self.window - 1]

        self.precision_history.append(p_value)
        if self.schedule.mode == "adaptive_gain" and len(self.precision_history) >= 3:
            p2, p1, p0 = self.precision_history[-1], self.precision_history[-2], \
                self.precision_history[-3]
            self.alpha = alpha_update(p2, p1, p0, self.schedule.alpha0,
                                      prev_alpha=self.alpha,
                                      alpha_max=self.schedule.alpha_max)
        self.last_actions = d.copy()
        self.comm = self._sample_comm()
        self.t += 1
        return self._observations(), rewards, info

    @property
    def finished(self) -> bool:
        return self.t >= self.horizon
