"""Precision models: the black box mapping joint data contribution to the
quality of the shared model.

Two analytic, stateless families (exponential and logarithmic saturation)
provide concave, monotone precision for verification work, and a miniature
federated-averaging simulation on synthetic two-Gaussian data provides a
stateful, realistic alternative.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


def _weighted_share(d, sizes) -> float:
    """Size-weighted mean contribution S = sum d_n |D_n| / sum |D_n|."""
    d = np.asarray(d, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    if d.shape != sizes.shape:
        raise ValueError("contribution and size vectors must match")
    return float(np.dot(d, sizes) / sizes.sum())


def _check_range(p_lo: float, p_hi: float, beta: float):
    if not 0.0 <= p_lo < p_hi <= 1.0:
        raise ValueError("require 0 <= p_lo < p_hi <= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")


@dataclass(frozen=True)
class ExpSaturation:
    """P = p_lo + (p_hi - p_lo) * (1 - exp(-beta * S)), concave in S."""

    p_lo: float = 0.1
    p_hi: float = 0.95
    beta: float = 3.0

    def __post_init__(self):
        _check_range(self.p_lo, self.p_hi, self.beta)

    def evaluate(self, d, sizes) -> float:
        s = _weighted_share(d, sizes)
        return self.p_lo + (self.p_hi - self.p_lo) * (1.0 - np.exp(-self.beta * s))


@dataclass(frozen=True)
class LogSaturation:
    """P = p_lo + (p_hi - p_lo) * log(1 + beta * S) / log(1 + beta)."""

    p_lo: float = 0.1
    p_hi: float = 0.95
    beta: float = 3.0

    def __post_init__(self):
        _check_range(self.p_lo, self.p_hi, self.beta)

    def evaluate(self, d, sizes) -> float:
        s = _weighted_share(d, sizes)
        return self.p_lo + (self.p_hi - self.p_lo) * (
            np.log1p(self.beta * s) / np.log1p(self.beta))


def eval_analytic(model, d, sizes) -> float:
    """Evaluate an analytic model at a joint profile; output lies in [0, 1]."""
    if not isinstance(model, (ExpSaturation, LogSaturation)):
        raise TypeError(f"not an analytic precision model: {type(model).__name__}")
    return float(model.evaluate(d, sizes))


# ---------------------------------------------------------------------------
# Miniature federated averaging on synthetic data


@dataclass(frozen=True)
class SyntheticFLTask:
    """Binary classification with two Gaussian class clouds.

    class_separation is the Euclidean distance between the class means;
    height 4 at feature_dim 10 makes the task comfortably learnable by a
    linear model while leaving measurable headroom between data budgets.
    """

    feature_dim: int = 10
    per_org_sizes: tuple = (2000, 2000, 2000, 2000)
    class_separation: float = 4.0
    test_set_size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim < 1 or self.test_set_size < 1:
            raise ValueError("feature_dim and test_set_size must be >= 1")
        if len(self.per_org_sizes) == 0 or any(s < 1 for s in self.per_org_sizes):
            raise ValueError("per_org_sizes must be positive")
        if self.class_separation <= 0:
            raise ValueError("class_separation must be > 0")


@dataclass(frozen=True)
class MicroFLState:
    """Frozen datasets plus the current global linear model (weights, bias)."""

    task: SyntheticFLTask
    org_features: tuple
    org_labels: tuple
    test_features: np.ndarray
    test_labels: np.ndarray
    weights: np.ndarray  # shape (feature_dim + 1,), last entry is the bias


def _draw_split(rng: np.random.Generator, count: int, dim: int,
                offset: np.ndarray):
    labels = rng.integers(0, 2, size=count)
    features = rng.normal(size=(count, dim))
    features += np.where(labels[:, None] == 1, offset, -offset)
    return features, labels


def microfl_reset(task: SyntheticFLTask) -> MicroFLState:
    """Generate per-org pools and a shared test set; zero-initialize the model.

    The same task (including seed) always yields bit-identical datasets. The
    test set is drawn after and independently of every training pool.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([task.seed, zlib.crc32(b"microfl")]))
    direction = rng.normal(size=task.feature_dim)
    direction /= np.linalg.norm(direction)
    offset = 0.5 * task.class_separation * direction
    feats, labs = [], []
    for size in task.per_org_sizes:
        x, y = _draw_split(rng, int(size), task.feature_dim, offset)
        feats.append(x)
        labs.append(y)
    test_x, test_y = _draw_split(rng, task.test_set_size, task.feature_dim, offset)
    return MicroFLState(task=task, org_features=tuple(feats),
                        org_labels=tuple(labs), test_features=test_x,
                        test_labels=test_y,
                        weights=np.zeros(task.feature_dim + 1))


def _logistic_grad(weights: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    margin = x @ weights[:-1] + weights[-1]
    prob = 1.0 / (1.0 + np.exp(-margin))
    err = prob - y
    return np.concatenate([x.T @ err, [err.sum()]]) / len(y)


def local_train(weights: np.ndarray, x: np.ndarray, y: np.ndarray,
                epochs: int, lr: float) -> np.ndarray:
    """Full-batch gradient descent on mean logistic loss from the given start."""
    w = weights.copy()
    for _ in range(epochs):
        w -= lr * _logistic_grad(w, x, y)
    return w


def model_accuracy(state: MicroFLState, weights: np.ndarray | None = None) -> float:
    w = state.weights if weights is None else weights
    pred = (state.test_features @ w[:-1] + w[-1]) > 0
    return float(np.mean(pred == state.test_labels))


def microfl_round(state: MicroFLState, d, local_epochs: int,
                  lr: float) -> tuple[MicroFLState, float]:
    """One federated round: prefix subsets, local training, size-weighted
    averaging, then test accuracy of the averaged model.

    Org n trains on the first round(d_n * |D_n|) samples of its fixed pool.
    Orgs contributing zero samples are excluded from the average; if all are
    zero the global model is unchanged.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (len(state.org_features),):
        raise ValueError("contribution vector length must match org count")
    counts = [int(round(dn * len(x))) for dn, x in zip(d, state.org_features)]
    updated, weights_of = [], []
    for n, count in enumerate(counts):
        if count == 0:
            continue
        x = state.org_features[n][:count]
        y = state.org_labels[n][:count]
        updated.append(local_train(state.weights, x, y, local_epochs, lr))
        weights_of.append(count)
    if updated:
        new_weights = np.average(np.stack(updated), axis=0, weights=weights_of)
    else:
        new_weights = state.weights
    new_state = replace(state, weights=new_weights)
    return new_state, model_accuracy(new_state)


# ---------------------------------------------------------------------------
# Uniform adapters used by the environment


class AnalyticPrecision:
    """Stateless per-slot precision source backed by an analytic model."""

    def __init__(self, model, sizes: Sequence[float]):
        self.model = model
        self.sizes = np.asarray(sizes, dtype=float)

    def reset(self):
        pass

    def observe(self, d) -> float:
        return eval_analytic(self.model, d, self.sizes)

    def peek(self, d) -> float:
        return self.observe(d)


class MicroFLPrecision:
    """Stateful precision source: each observed slot advances the global model."""

    def __init__(self, task: SyntheticFLTask, local_epochs: int = 5,
                 lr: float = 0.5):
        self.task = task
        self.local_epochs = int(local_epochs)
        self.lr = float(lr)
        self.state = microfl_reset(task)

    def reset(self):
        self.state = microfl_reset(self.task)

    def observe(self, d) -> float:
        self.state, p = microfl_round(self.state, d, self.local_epochs, self.lr)
        return p

    def peek(self, d) -> float:
        _, p = microfl_round(self.state, d, self.local_epochs, self.lr)
        return p
