"""Cross-module verification suites behind the `verify` CLI command.

Each check is independent and seeded; failures name the violated property.
Informational checks report measurements (for instance the residual of the
uncorrected potential transcription) without affecting the exit status.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .game import (GridSpec, OrgProfile, best_response_dynamics,
                   check_weighted_potential, nash_brute_force,
                   potential_corrected, potential_literal, redistribution)
from .marl import (CriticState, Trajectory, bootstrap_targets, critic_update,
                   policy_gradient_estimate)
from .nets import Mlp, backward, forward, init_mlp, log_softmax
from .precision import AnalyticPrecision, ExpSaturation
from .rng import substream

VERIFY_SEED = 20240817


@dataclass
class CheckResult:
    name: str
    status: str  # PASS | FAIL | INFO
    detail: str

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"


def _random_game(rng, n_orgs, scale="large"):
    """Random org draw plus a bound analytic precision callable."""
    if scale == "large":
        profits = rng.normal(1000, 10, n_orgs)
        energies = rng.normal(4, 0.2, n_orgs)
    else:
        profits = rng.uniform(20, 80, n_orgs)
        energies = rng.uniform(0.002, 0.02, n_orgs)
    sizes = np.round(rng.normal(2000, 50, n_orgs))
    comms = np.abs(rng.normal(0.5, 0.02, n_orgs))
    orgs = [OrgProfile(float(abs(p)), float(abs(v)), float(max(s, 1.0)), float(c))
            for p, v, s, c in zip(profits, energies, sizes, comms)]
    model = ExpSaturation()
    source = AnalyticPrecision(model, [o.dataset_size for o in orgs])
    return orgs, source.observe


def check_zero_sum(instances: int = 1000) -> CheckResult:
    rng = substream(VERIFY_SEED, "zero-sum")
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 5))
        d = rng.uniform(0, 1, n)
        alpha = float(rng.uniform(0, 10))
        total = sum(redistribution(i, d, alpha) for i in range(n))
        worst = max(worst, abs(total))
    ok = worst <= 1e-12
    return CheckResult("redistribution zero-sum",
                       "PASS" if ok else "FAIL",
                       f"max |sum_n r_n| = {worst:.3e} over {instances} instances")


def check_potential_identity(instances: int = 1000) -> CheckResult:
    """Corrected potential: |p_n dU - du_n| <= 1e-9 after money rescale to O(1)."""
    rng = substream(VERIFY_SEED, "potential")
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 5))
        orgs, precision = _random_game(rng, n)
        scaled = [OrgProfile(o.profit_rate * 1e-3, o.unit_energy_cost * 1e-3,
                             o.dataset_size, o.comm_overhead * 1e-3)
                  for o in orgs]
        d = rng.uniform(0, 1, n)
        i = int(rng.integers(n))
        res = check_weighted_potential(i, d, float(rng.uniform(0, 1)), scaled,
                                       float(rng.uniform(0, 10)), precision)
        worst = max(worst, res)
    ok = worst <= 1e-9
    return CheckResult("weighted potential identity (corrected)",
                       "PASS" if ok else "FAIL",
                       f"max residual = {worst:.3e} over {instances} instances")


def check_literal_residual(instances: int = 200) -> CheckResult:
    """Report-only: the pairwise-cross-term transcription leaves a residual
    proportional to alpha whenever alpha > 0."""
    rng = substream(VERIFY_SEED, "potential-literal")
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 5))
        orgs, precision = _random_game(rng, n)
        scaled = [OrgProfile(o.profit_rate * 1e-3, o.unit_energy_cost * 1e-3,
                             o.dataset_size, o.comm_overhead * 1e-3)
                  for o in orgs]
        d = rng.uniform(0, 1, n)
        res = check_weighted_potential(int(rng.integers(n)), d,
                                       float(rng.uniform(0, 1)), scaled,
                                       float(rng.uniform(1, 10)), precision,
                                       potential=potential_literal)
        worst = max(worst, res)
    return CheckResult("literal potential residual (informational)", "INFO",
                       f"max residual = {worst:.3e}; exceeds 1e-6 as expected "
                       "for heterogeneous profits with alpha > 0")


def check_equilibria(games: int = 50) -> CheckResult:
    rng = substream(VERIFY_SEED, "equilibria")
    grid = GridSpec(points=11)
    for g in range(games):
        n = int(rng.integers(2, 4))
        scale = "large" if rng.random() < 0.5 else "small"
        orgs, precision = _random_game(rng, n, scale=scale)
        alpha = float(rng.uniform(0, 8))
        equilibria = nash_brute_force(orgs, alpha, precision, grid)
        if not equilibria:
            return CheckResult("grid equilibria", "FAIL",
                               f"game {g}: no grid equilibrium found")
        pots = [potential_corrected(e.array, orgs, alpha, precision(e.array))
                for e in equilibria]
        best = None
        best_pot = -np.inf
        for idx in itertools.product(range(grid.points), repeat=n):
            d = grid.values()[list(idx)]
            pot = potential_corrected(d, orgs, alpha, precision(d))
            if pot > best_pot:
                best_pot, best = pot, tuple(d)
        if not any(np.allclose(e.array, best) for e in equilibria):
            return CheckResult("grid equilibria", "FAIL",
                               f"game {g}: potential argmax {best} not in the "
                               f"equilibrium set (max pot {max(pots):.6f})")
        start = rng.uniform(0, 1, n)
        traj = best_response_dynamics(start, orgs, alpha, precision, grid,
                                      max_rounds=10 * grid.points * n)
        end = traj[-1].array
        if not any(np.allclose(e.array, end) for e in equilibria):
            return CheckResult("grid equilibria", "FAIL",
                               f"game {g}: dynamics endpoint {end} is not an "
                               "equilibrium")
    return CheckResult("grid equilibria", "PASS",
                       f"{games} games: equilibrium exists, potential argmax "
                       "included, dynamics terminate at an equilibrium")


def finite_difference_check(sizes, rng, n_params: int = 20,
                            step: float = 1e-5) -> float:
    """Worst relative error between reverse mode and central differences.

    The scalar under test is dot(gy, output) for a fixed random gy, whose
    exact parameter gradient is backward(tape, gy).
    """
    net = init_mlp(sizes, rng)
    x = rng.normal(size=sizes[0])
    gy = rng.normal(size=sizes[-1])
    _, tape = forward(net, x)
    analytic = backward(tape, gy)

    def scalar_at(params):
        out, _ = forward(Mlp(sizes, params), x)
        return float(np.dot(gy, out))

    worst = 0.0
    for idx in rng.choice(net.params.size, size=n_params, replace=False):
        up = net.params.copy()
        up[idx] += step
        down = net.params.copy()
        down[idx] -= step
        fd = (scalar_at(up) - scalar_at(down)) / (2 * step)
        ad = analytic[idx]
        denom = max(abs(fd), abs(ad))
        if denom < 1e-8:
            continue  # both effectively zero
        worst = max(worst, abs(fd - ad) / denom)
    return worst


def check_gradients() -> CheckResult:
    rng = substream(VERIFY_SEED, "grad-check")
    obs_dim = 24
    worst_actor = finite_difference_check((obs_dim, 210, 50, 11), rng)
    worst_critic = finite_difference_check((obs_dim, 210, 50, 1), rng)
    worst = max(worst_actor, worst_critic)
    ok = worst <= 1e-4
    return CheckResult("reverse-mode vs finite differences",
                       "PASS" if ok else "FAIL",
                       f"max relative error actor {worst_actor:.2e}, "
                       f"critic {worst_critic:.2e}")


def bandit_gradient_report(samples: int = 100_000):
    """Monte-Carlo policy gradient on a 2-armed softmax bandit vs closed form.

    Returns (estimate, analytic, standard_error) for the two bias params.
    """
    rng = substream(VERIFY_SEED, "bandit")
    net = init_mlp((1, 2), rng)
    obs = np.ones((samples, 1))
    logits, _ = forward(net, obs[:1])
    probs = np.exp(log_softmax(logits[0]))
    actions = rng.choice(2, size=samples, p=probs)
    rewards = np.where(actions == 0, 1.0, 0.0)
    grad = policy_gradient_estimate(net, obs, actions, rewards)
    est = grad[-2:]  # bias entries map one-to-one onto the two logits
    onehot = np.eye(2)[actions]
    per_sample = rewards[:, None] * (onehot - probs[None, :])
    se = per_sample.std(axis=0, ddof=1) / np.sqrt(samples)
    analytic = np.array([probs[0] * (1 - probs[0]),
                         -probs[0] * (1 - probs[0])])
    return est, analytic, se


def check_bandit_estimator() -> CheckResult:
    est, analytic, se = bandit_gradient_report()
    devs = np.abs(est - analytic) / se
    ok = bool((devs <= 3.0).all())
    return CheckResult("policy-gradient estimator (softmax bandit)",
                       "PASS" if ok else "FAIL",
                       f"deviations = {devs[0]:.2f}, {devs[1]:.2f} standard "
                       f"errors (estimate {est}, analytic {analytic})")


def train_cycle_critic(gamma: float = 0.9, iterations: int = 4000,
                       lr: float = 0.05, batch: int = 64,
                       return_critic: bool = False):
    """Fit the critic on a deterministic 2-state cycle with rewards (1, 0).

    Returns (fitted values, analytic fixed point (I - gamma P)^-1 u), plus
    the critic itself when return_critic is set.
    """
    rng = substream(VERIFY_SEED, "critic-cycle")
    critic = CriticState(net=init_mlp((2, 210, 50, 1), rng), lr=lr, gamma=gamma)
    obs = np.eye(2)[np.arange(batch) % 2]
    rewards = np.where(np.arange(batch) % 2 == 0, 1.0, 0.0)
    next_obs = np.eye(2)[batch % 2]
    traj = Trajectory(observations=obs, actions=np.zeros(batch, dtype=int),
                      log_probs=np.zeros(batch), rewards=rewards,
                      entropies=np.zeros(batch), next_observation=next_obs)
    for _ in range(iterations):
        targets = bootstrap_targets(traj, critic, gamma)
        critic_update(critic, traj, targets)
    fitted, _ = forward(critic.net, np.eye(2))
    transition = np.array([[0.0, 1.0], [1.0, 0.0]])
    analytic = np.linalg.solve(np.eye(2) - gamma * transition,
                               np.array([1.0, 0.0]))
    if return_critic:
        return fitted[:, 0], analytic, critic
    return fitted[:, 0], analytic


def check_critic_fixed_point() -> CheckResult:
    fitted, analytic = train_cycle_critic()
    err = float(np.abs(fitted - analytic).max())
    ok = err <= 1e-2
    return CheckResult("critic fixed point (2-state cycle)",
                       "PASS" if ok else "FAIL",
                       f"max |V - V*| = {err:.4f} (V* = {analytic})")


def run_verify(level: str = "fast"):
    """Run the suite; returns (exit_ok, results). Level scales instance counts."""
    if level not in ("fast", "full"):
        raise ValueError("level must be fast or full")
    full = level == "full"
    started = time.time()
    results = [
        check_zero_sum(1000),
        check_potential_identity(1000 if not full else 3000),
        check_literal_residual(),
        check_equilibria(games=50 if full else 12),
        check_gradients(),
        check_bandit_estimator(),
        check_critic_fixed_point(),
    ]
    elapsed = time.time() - started
    ok = not any(r.failed for r in results)
    results.append(CheckResult("suite runtime", "INFO", f"{elapsed:.1f} s"))
    return ok, results
