"""Static per-slot contribution game: payoffs, redistribution, potentials,
and exact brute-force equilibrium oracles on a discretized action grid.

Organizations choose contribution fractions d_n in [0, 1]. An organization's
payoff is revenue from the shared model's precision, minus energy and
communication costs, plus a zero-sum redistribution transfer that rewards
contributing more than the others:

    u_n(d) = profit_rate_n * P(d)
             - unit_energy_cost_n * d_n * dataset_size_n
             - comm_overhead_n
             + alpha * sum_j (d_n - d_j)

``P`` is an arbitrary precision callable mapping a joint profile to [0, 1].
The game is a weighted potential game with weights w_n = profit_rate_n; see
:func:`potential_corrected` for the function whose unilateral differences
match payoff differences exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

PrecisionFn = Callable[[np.ndarray], float]

# Enumeration guard for brute-force oracles (grid_points ** num_orgs).
MAX_ENUMERATION = 10_000_000

# Strict-improvement tolerance for equilibrium checks on money-scale values.
IMPROVEMENT_TOL = 1e-12


@dataclass(frozen=True)
class OrgProfile:
    """One organization's private economics.

    comm_overhead is the current slot's value; the environment substitutes a
    freshly sampled one each slot.
    """

    profit_rate: float
    unit_energy_cost: float
    dataset_size: float
    comm_overhead: float

    def __post_init__(self):
        if not np.isfinite([self.profit_rate, self.unit_energy_cost,
                            self.dataset_size, self.comm_overhead]).all():
            raise ValueError("OrgProfile fields must be finite")
        if self.profit_rate < 0:
            raise ValueError("profit_rate must be >= 0")
        if self.unit_energy_cost < 0:
            raise ValueError("unit_energy_cost must be >= 0")
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be >= 1")
        if self.comm_overhead < 0:
            raise ValueError("comm_overhead must be >= 0")


@dataclass(frozen=True)
class ActionProfile:
    """Joint contribution vector, one fraction in [0, 1] per organization."""

    contributions: tuple

    @classmethod
    def of(cls, values: Sequence[float]) -> "ActionProfile":
        return cls(tuple(float(v) for v in values))

    def __post_init__(self):
        arr = np.asarray(self.contributions, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("profile must be a non-empty vector")
        if not np.isfinite(arr).all():
            raise ValueError("profile entries must be finite")
        if (arr < 0).any() or (arr > 1).any():
            raise ValueError("profile entries must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.contributions)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.contributions, dtype=float)

    def replace(self, n: int, value: float) -> "ActionProfile":
        vals = list(self.contributions)
        vals[n] = float(value)
        return ActionProfile(tuple(vals))


@dataclass(frozen=True)
class PayoffBreakdown:
    """Additive decomposition of one organization's slot payoff."""

    revenue: float
    energy_cost: float
    comm_cost: float
    redistribution: float
    total: float


@dataclass(frozen=True)
class GridSpec:
    """Evenly spaced grid of K points over [0, 1], endpoints included."""

    points: int = 21

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("grid needs at least 2 points")

    def values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points)


def _as_array(d) -> np.ndarray:
    if isinstance(d, ActionProfile):
        return d.array
    arr = np.asarray(d, dtype=float)
    if not np.isfinite(arr).all():
        raise ValueError("profile entries must be finite")
    return arr


def redistribution(n: int, d, alpha: float) -> float:
    """Transfer received by organization n: alpha * sum_j (d_n - d_j).

    Positive for above-average contributors, negative for the rest;
    sums to zero across organizations for any profile and alpha.
    """
    arr = _as_array(d)
    if not 0 <= n < arr.size:
        raise IndexError(f"org index {n} out of range for {arr.size} orgs")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return float(alpha * (arr.size * arr[n] - arr.sum()))


def payoff(n: int, d, precision_value: float, orgs: Sequence[OrgProfile],
           alpha: float) -> PayoffBreakdown:
    """Slot payoff of organization n at the given profile and precision."""
    arr = _as_array(d)
    if not 0 <= n < len(orgs):
        raise IndexError(f"org index {n} out of range for {len(orgs)} orgs")
    if arr.size != len(orgs):
        raise ValueError("profile length does not match number of orgs")
    if not np.isfinite(precision_value):
        raise ValueError("precision must be finite")
    org = orgs[n]
    revenue = org.profit_rate * precision_value
    energy = org.unit_energy_cost * arr[n] * org.dataset_size
    comm = org.comm_overhead
    redis = redistribution(n, arr, alpha)
    total = revenue - energy - comm + redis
    return PayoffBreakdown(revenue=float(revenue), energy_cost=float(energy),
                           comm_cost=float(comm), redistribution=redis,
                           total=float(total))


def _require_positive_profits(orgs: Sequence[OrgProfile]):
    for i, org in enumerate(orgs):
        if org.profit_rate <= 0:
            raise ValueError(f"potential requires profit_rate > 0 (org {i})")


def potential_literal(d, orgs: Sequence[OrgProfile], alpha: float,
                      precision_value: float) -> float:
    """Potential candidate with per-org pairwise redistribution cross terms.

    U = P - sum_n [ (v_n d_n |D_n| + C_n) / p_n - sum_{j != n} a (d_n - d_j) / p_n ]

    The cross terms cancel pairwise whenever profits are homogeneous and
    never reproduce the deviator's redistribution change, so for alpha > 0
    this function fails the weighted-potential identity; it is kept as a
    measurable reference. Use :func:`potential_corrected` for the identity.
    """
    arr = _as_array(d)
    _require_positive_profits(orgs)
    p = np.array([o.profit_rate for o in orgs])
    v = np.array([o.unit_energy_cost for o in orgs])
    sizes = np.array([o.dataset_size for o in orgs])
    comm = np.array([o.comm_overhead for o in orgs])
    n_orgs = arr.size
    cross = alpha * (n_orgs * arr - arr.sum())  # sum_{j != n} a (d_n - d_j)
    total = precision_value - np.sum((v * arr * sizes + comm) / p) + np.sum(cross / p)
    return float(total)


def potential_corrected(d, orgs: Sequence[OrgProfile], alpha: float,
                        precision_value: float) -> float:
    """Weighted potential for the game with weights w_n = profit_rate_n.

    U = P - sum_n (v_n d_n |D_n| + C_n) / p_n + (N - 1) a sum_n d_n / p_n

    Unilateral deviations satisfy p_n * [U(d') - U(d)] = u_n(d') - u_n(d)
    exactly, for arbitrary heterogeneous profits.
    """
    arr = _as_array(d)
    _require_positive_profits(orgs)
    p = np.array([o.profit_rate for o in orgs])
    v = np.array([o.unit_energy_cost for o in orgs])
    sizes = np.array([o.dataset_size for o in orgs])
    comm = np.array([o.comm_overhead for o in orgs])
    n_orgs = arr.size
    total = (precision_value - np.sum((v * arr * sizes + comm) / p)
             + (n_orgs - 1) * alpha * np.sum(arr / p))
    return float(total)


def check_weighted_potential(n: int, d, d_prime_n: float,
                             orgs: Sequence[OrgProfile], alpha: float,
                             precision_model: PrecisionFn,
                             potential=potential_corrected) -> float:
    """Residual |p_n (U(d') - U(d)) - (u_n(d') - u_n(d))| for a unilateral
    deviation of organization n to d_prime_n."""
    arr = _as_array(d)
    if not 0 <= n < arr.size:
        raise IndexError("org index out of range")
    d2 = arr.copy()
    d2[n] = float(d_prime_n)
    p_before = float(precision_model(arr))
    p_after = float(precision_model(d2))
    du = (payoff(n, d2, p_after, orgs, alpha).total
          - payoff(n, arr, p_before, orgs, alpha).total)
    dU = (potential(d2, orgs, alpha, p_after)
          - potential(arr, orgs, alpha, p_before))
    return float(abs(orgs[n].profit_rate * dU - du))


def best_response(n: int, d_minus_n, orgs: Sequence[OrgProfile], alpha: float,
                  precision_model: PrecisionFn, grid: GridSpec):
    """Grid point maximizing u_n against fixed opponent actions.

    Returns (d_n_star, payoff_at_star). Ties break toward the smaller d_n.
    """
    others = np.asarray(d_minus_n, dtype=float)
    if others.size != len(orgs) - 1:
        raise ValueError("d_minus_n must have length N - 1")
    best_d, best_u = 0.0, -np.inf
    for g in grid.values():
        full = np.insert(others, n, g)
        u = payoff(n, full, float(precision_model(full)), orgs, alpha).total
        if u > best_u + IMPROVEMENT_TOL:
            best_d, best_u = float(g), u
    return best_d, best_u


def _payoff_tensors(orgs: Sequence[OrgProfile], alpha: float,
                    precision_model: PrecisionFn, grid: GridSpec):
    """Precision and per-org payoff tensors over the full K^N profile grid."""
    n_orgs = len(orgs)
    k = grid.points
    if k ** n_orgs > MAX_ENUMERATION:
        raise ValueError(
            f"enumeration budget exceeded: {k}^{n_orgs} profiles; "
            "reduce grid points or the number of orgs")
    vals = grid.values()
    shape = (k,) * n_orgs
    precision = np.empty(shape)
    for idx in itertools.product(range(k), repeat=n_orgs):
        precision[idx] = precision_model(vals[list(idx)])
    payoffs = []
    total_d = sum(np.reshape(vals, (-1,) + (1,) * (n_orgs - 1 - ax)) * np.ones(shape)
                  for ax, _ in enumerate(orgs))
    for n, org in enumerate(orgs):
        own = np.reshape(vals, (-1,) + (1,) * (n_orgs - 1 - n))
        redis = alpha * (n_orgs * own - total_d)
        u = (org.profit_rate * precision
             - org.unit_energy_cost * own * org.dataset_size
             - org.comm_overhead + redis)
        payoffs.append(u)
    return precision, payoffs


def nash_brute_force(orgs: Sequence[OrgProfile], alpha: float,
                     precision_model: PrecisionFn,
                     grid: GridSpec) -> list[ActionProfile]:
    """All grid profiles where no unilateral grid deviation strictly improves
    any player's payoff (tolerance IMPROVEMENT_TOL), in lexicographic order."""
    _, payoffs = _payoff_tensors(orgs, alpha, precision_model, grid)
    mask = np.ones(payoffs[0].shape, dtype=bool)
    for n, u in enumerate(payoffs):
        best = u.max(axis=n, keepdims=True)
        mask &= u >= best - IMPROVEMENT_TOL
    vals = grid.values()
    return [ActionProfile.of(vals[list(idx)])
            for idx in sorted(zip(*np.nonzero(mask)))]


def _snap_to_grid(d: np.ndarray, grid: GridSpec) -> np.ndarray:
    vals = grid.values()
    idx = np.abs(vals[None, :] - d[:, None]).argmin(axis=1)
    return vals[idx]


def best_response_dynamics(initial, orgs: Sequence[OrgProfile], alpha: float,
                           precision_model: PrecisionFn, grid: GridSpec,
                           max_rounds: int) -> list[ActionProfile]:
    """Round-robin strict best responses on the grid.

    The start profile is snapped to the grid. A snapshot is appended after
    every accepted strictly improving move; the dynamics stop after a full
    round with no move (a grid Nash equilibrium) or after max_rounds rounds.
    The finite improvement property of the weighted potential guarantees
    termination on any finite grid.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    current = _snap_to_grid(_as_array(initial), grid)
    trajectory = [ActionProfile.of(current)]
    for _ in range(max_rounds):
        moved = False
        for n in range(len(orgs)):
            others = np.delete(current, n)
            d_star, u_star = best_response(n, others, orgs, alpha,
                                           precision_model, grid)
            u_now = payoff(n, current, float(precision_model(current)),
                           orgs, alpha).total
            if u_star > u_now + IMPROVEMENT_TOL:
                current = current.copy()
                current[n] = d_star
                trajectory.append(ActionProfile.of(current))
                moved = True
        if not moved:
            break
    return trajectory
