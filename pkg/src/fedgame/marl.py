"""Decentralized trainer: clipped-ratio policy gradient with a bootstrapped
critic (mode MPGD), plus the unclipped single-update variant (A2C), the
no-redistribution ablation (WPR), and the myopic oracle baseline (Greedy).

Each agent owns its actor and critic and updates them from its own
trajectory only; the environment step is the sole synchronization point.
A batch is collected under a frozen sampling policy and reused for several
clipped updates; the ratio clip bounds the resulting off-policy drift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import TrainerSpec
from .env import ContributionEnv, Observation, encode_observation
from .game import GridSpec, best_response
from .nets import (Mlp, PolicyDistribution, bin_to_action, forward, init_mlp,
                   log_softmax, policy_sample, sgd_step, backward)
from .rng import substream

HIDDEN_SIZES = (210, 50)
GRAD_CLIP = 10.0

_MODE_ALIASES = {"mpgd": "MPGD", "a2c": "A2C", "greedy": "Greedy",
                 "wpr": "WPR", "wpr-mpgd": "WPR"}


def canonical_mode(name: str) -> str:
    try:
        return _MODE_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown mode {name!r}; choose from "
                         f"{sorted(set(_MODE_ALIASES.values()))}") from None


@dataclass
class Trajectory:
    """One agent's on-policy batch, collected under its sampling policy."""

    observations: np.ndarray   # (D, obs_dim), encoded
    actions: np.ndarray        # (D,), bin indices
    log_probs: np.ndarray      # (D,), log prob of the taken bin at sampling time
    rewards: np.ndarray        # (D,)
    entropies: np.ndarray      # (D,), sampling-policy entropy per step
    next_observation: np.ndarray  # encoded first observation after the batch

    def __post_init__(self):
        if not np.isfinite(self.rewards).all():
            raise ValueError("rewards must be finite")
        if (self.log_probs > 1e-12).any():
            raise ValueError("log probabilities must be <= 0")

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class ActorState:
    net: Mlp
    sampling: Mlp  # frozen snapshot used to collect the current batch
    lr: float
    clip_eps: float

    def snapshot(self):
        self.sampling = self.net.copy()


@dataclass
class CriticState:
    net: Mlp
    lr: float
    gamma: float


@dataclass
class MetricsRow:
    """One row per training batch."""

    run_id: str
    mode: str
    seed: int
    batch: int
    global_step: int
    overall_payoff: float
    precision: float
    alpha: float
    payoff_mean: tuple     # per agent
    contrib_mean: tuple    # per agent
    entropy: tuple         # per agent


@dataclass
class TrainResult:
    rows: list
    actors: list | None
    critics: list | None


# ---------------------------------------------------------------------------
# Estimation primitives


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """Backward recursion R_t = u_t + gamma * R_{t+1}, zero beyond the batch."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.zeros_like(rewards)
    acc = 0.0
    for t in reversed(range(len(rewards))):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def bootstrap_targets(traj: Trajectory, critic: CriticState,
                      gamma: float) -> np.ndarray:
    """In-batch discounted return completed by the critic at the boundary:
    Y_t = sum_{l=t}^{D-1} gamma^{l-t} u_l + gamma^{D-t} V(z_D)."""
    v_end, _ = forward(critic.net, traj.next_observation)
    returns = discounted_returns(traj.rewards, gamma)
    d = len(traj)
    powers = gamma ** (d - np.arange(d))
    return returns + powers * float(v_end[0])


def advantages(traj: Trajectory, critic: CriticState,
               targets: np.ndarray) -> np.ndarray:
    """A_t = Y_t - V(z_t); the bootstrapped target stands in for Q."""
    values, _ = forward(critic.net, traj.observations)
    return np.asarray(targets, dtype=float) - values[:, 0]


def importance_ratio(net: Mlp, sampling_net: Mlp, z, action: int) -> float:
    """exp(log pi_theta(d|z) - log pi_theta_hat(d|z)); exactly 1 when the
    parameters coincide."""
    cur, _ = forward(net, z)
    old, _ = forward(sampling_net, z)
    return float(np.exp(log_softmax(cur)[action] - log_softmax(old)[action]))


def clip_eta(f, eps: float):
    """Piecewise ratio clip: min(max(f, 1 - eps), 1 + eps)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    return np.minimum(np.maximum(f, 1.0 - eps), 1.0 + eps)


def surrogate(f, adv, eps: float):
    """Pessimistic clipped objective: min(f * A, eta(f) * A).

    Gains from large ratios are capped at (1 + eps) * A; losses are never
    capped, so moving further off-policy cannot look better than it is.
    """
    f = np.asarray(f, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(f * adv, clip_eta(f, eps) * adv)


def policy_gradient_estimate(net: Mlp, observations, actions,
                             coefficients) -> np.ndarray:
    """(1/B) sum_t coeff_t * grad log pi(a_t | z_t) over the flat parameters.

    The coefficients are treated as constants; no gradient flows through
    them. This is the single estimator used for every actor update.
    """
    actions = np.asarray(actions)
    coeff = np.asarray(coefficients, dtype=float)
    logits, tape = forward(net, np.atleast_2d(observations))
    probs = np.exp(log_softmax(logits))
    b = len(actions)
    gy = -probs * (coeff / b)[:, None]
    gy[np.arange(b), actions] += coeff / b
    return backward(tape, gy)


def clip_grad_norm(grad: np.ndarray, max_norm: float = GRAD_CLIP) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def actor_update(actor: ActorState, traj: Trajectory, adv) -> dict:
    """One ascent step on the clipped surrogate gradient estimate."""
    logits, _ = forward(actor.net, traj.observations)
    log_probs = log_softmax(logits)
    current = log_probs[np.arange(len(traj)), traj.actions]
    ratios = np.exp(current - traj.log_probs)
    coeff = surrogate(ratios, adv, actor.clip_eps)
    grad = clip_grad_norm(
        policy_gradient_estimate(actor.net, traj.observations, traj.actions,
                                 coeff))
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite actor gradient")
    actor.net.set_params(sgd_step(actor.net.params, grad, actor.lr, "ascend"))
    clipped = (ratios < 1.0 - actor.clip_eps) | (ratios > 1.0 + actor.clip_eps)
    return {"mean_ratio": float(ratios.mean()),
            "clip_fraction": float(clipped.mean())}


def critic_update(critic: CriticState, traj: Trajectory, targets) -> dict:
    """One descent step on (1/D) sum (V(z_t) - Y_t) dV/dw; Y is constant."""
    targets = np.asarray(targets, dtype=float)
    values, tape = forward(critic.net, traj.observations)
    err = values[:, 0] - targets
    grad = clip_grad_norm(backward(tape, (err / len(targets))[:, None]))
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite critic gradient")
    critic.net.set_params(sgd_step(critic.net.params, grad, critic.lr,
                                   "descend"))
    return {"value_loss": float(np.mean(err ** 2))}


def scale_rewards(traj: Trajectory, scale: float) -> Trajectory:
    return replace(traj, rewards=traj.rewards * scale)


# ---------------------------------------------------------------------------
# Rollout collection


def collect_rollout(env: ContributionEnv, actors: Sequence[ActorState],
                    steps: int, rngs: Sequence[np.random.Generator],
                    current_obs: list[Observation], *, bins: int,
                    use_redistribution: bool = True):
    """All agents act simultaneously with their sampling policies for
    ``steps`` slots. Finished episodes roll over into a fresh one.

    Returns (trajectories, batch_info, observations_after_batch); the
    trajectories carry raw environment rewards.
    """
    alpha_max = env.schedule.alpha_max
    num = len(actors)
    enc = [encode_observation(o, alpha_max) for o in current_obs]
    store = [{"obs": [], "act": [], "lp": [], "rew": [], "ent": []}
             for _ in range(num)]
    precisions, alphas, action_rows = [], [], []
    for _ in range(steps):
        if env.finished:
            current_obs = env.reset()
            enc = [encode_observation(o, alpha_max) for o in current_obs]
        chosen = np.zeros(num)
        for i, actor in enumerate(actors):
            logits, _ = forward(actor.sampling, enc[i])
            dist = PolicyDistribution(logits)
            idx, lp = policy_sample(dist, rngs[i])
            store[i]["obs"].append(enc[i])
            store[i]["act"].append(idx)
            store[i]["lp"].append(lp)
            store[i]["ent"].append(dist.entropy())
            chosen[i] = bin_to_action(idx, bins)
        current_obs, rewards, info = env.step(chosen)
        if not use_redistribution:
            rewards = np.array([b.total - b.redistribution
                                for b in info["breakdowns"]])
        for i in range(num):
            store[i]["rew"].append(float(rewards[i]))
        precisions.append(info["precision"])
        alphas.append(info["alpha"])
        action_rows.append(chosen)
        enc = [encode_observation(o, alpha_max) for o in current_obs]
    trajectories = [
        Trajectory(observations=np.stack(s["obs"]),
                   actions=np.array(s["act"], dtype=int),
                   log_probs=np.array(s["lp"]),
                   rewards=np.array(s["rew"]),
                   entropies=np.array(s["ent"]),
                   next_observation=enc[i])
        for i, s in enumerate(store)]
    batch_info = {"precision": np.array(precisions),
                  "alpha": np.array(alphas),
                  "actions": np.stack(action_rows)}
    return trajectories, batch_info, current_obs


def greedy_actions(env: ContributionEnv, grid: GridSpec) -> np.ndarray:
    """Myopic oracle play: each org grid-scans its own payoff against the
    previous slot's joint actions, querying the precision source directly.
    Learned agents never get this access."""
    slot_orgs = env.orgs_for_slot()
    prev = env.last_actions
    actions = np.zeros(env.num_orgs)
    for n in range(env.num_orgs):
        actions[n], _ = best_response(n, np.delete(prev, n), slot_orgs,
                                      env.alpha, env.peek_precision, grid)
    return actions


# ---------------------------------------------------------------------------
# Training loop


def _metrics_row(run_id, mode, seed, batch, global_step, reward_rows,
                 batch_info, entropies) -> MetricsRow:
    payoff_mean = tuple(float(np.mean(r)) for r in reward_rows)
    return MetricsRow(
        run_id=run_id, mode=mode, seed=seed, batch=batch,
        global_step=global_step,
        overall_payoff=float(sum(payoff_mean)),
        precision=float(np.mean(batch_info["precision"])),
        alpha=float(np.mean(batch_info["alpha"])),
        payoff_mean=payoff_mean,
        contrib_mean=tuple(float(m) for m in batch_info["actions"].mean(axis=0)),
        entropy=tuple(float(np.mean(e)) for e in entropies))


def _run_greedy(env: ContributionEnv, spec: TrainerSpec, seed: int,
                run_id: str) -> TrainResult:
    grid = GridSpec(points=spec.action_bins)
    env.reset()
    rows = []
    total_batches = (spec.episodes * env.horizon) // spec.batch_size
    global_step = 0
    for batch in range(total_batches):
        rewards_acc = [[] for _ in range(env.num_orgs)]
        precisions, alphas, action_rows = [], [], []
        for _ in range(spec.batch_size):
            if env.finished:
                env.reset()
            actions = greedy_actions(env, grid)
            _, rewards, info = env.step(actions)
            for i in range(env.num_orgs):
                rewards_acc[i].append(float(rewards[i]))
            precisions.append(info["precision"])
            alphas.append(info["alpha"])
            action_rows.append(actions)
        global_step += spec.batch_size
        binfo = {"precision": np.array(precisions), "alpha": np.array(alphas),
                 "actions": np.stack(action_rows)}
        zeros = [np.zeros(1)] * env.num_orgs
        rows.append(_metrics_row(run_id, "Greedy", seed, batch, global_step,
                                 rewards_acc, binfo, zeros))
    return TrainResult(rows=rows, actors=None, critics=None)


def train(env: ContributionEnv, spec: TrainerSpec, mode: str,
          master_seed: int, run_id: str = "") -> TrainResult:
    """Run one training (or baseline) process and emit per-batch metrics.

    Every agent sees only its own observations and rewards; updates are pure
    functions of the agent's own trajectory and parameters.
    """
    mode = canonical_mode(mode)
    if mode == "Greedy":
        return _run_greedy(env, spec, master_seed, run_id)

    obs_dim = env.obs_dim
    sizes = (obs_dim,) + HIDDEN_SIZES + (spec.action_bins,)
    critic_sizes = (obs_dim,) + HIDDEN_SIZES + (1,)
    actors, critics, rngs = [], [], []
    for i in range(env.num_orgs):
        actor_net = init_mlp(sizes, substream(master_seed, "agent-init", i, "actor"))
        critic_net = init_mlp(critic_sizes,
                              substream(master_seed, "agent-init", i, "critic"))
        actors.append(ActorState(net=actor_net, sampling=actor_net.copy(),
                                 lr=spec.actor_lr, clip_eps=spec.clip_eps))
        critics.append(CriticState(net=critic_net, lr=spec.critic_lr,
                                   gamma=spec.gamma))
        rngs.append(substream(master_seed, "agent-sample", i))

    updates = 1 if mode == "A2C" else spec.updates_per_batch
    total_batches = (spec.episodes * env.horizon) // spec.batch_size
    obs = env.reset()
    rows = []
    global_step = 0
    for batch in range(total_batches):
        for actor in actors:
            actor.snapshot()
        trajs, binfo, obs = collect_rollout(
            env, actors, spec.batch_size, rngs, obs, bins=spec.action_bins,
            use_redistribution=(mode != "WPR"))
        for i in range(env.num_orgs):
            scaled = scale_rewards(trajs[i], spec.reward_scale)
            targets = bootstrap_targets(scaled, critics[i], critics[i].gamma)
            adv = advantages(scaled, critics[i], targets)
            for _ in range(updates):
                actor_update(actors[i], scaled, adv)
                critic_update(critics[i], scaled, targets)
        global_step += spec.batch_size
        rows.append(_metrics_row(run_id, mode, master_seed, batch, global_step,
                                 [t.rewards for t in trajs], binfo,
                                 [t.entropies for t in trajs]))
    return TrainResult(rows=rows, actors=actors, critics=critics)
