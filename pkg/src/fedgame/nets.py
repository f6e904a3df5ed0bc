"""Minimal feed-forward networks with exact reverse-mode gradients.

Hidden layers use tanh, the output layer is affine. Parameters live in one
flat float64 vector laid out layer by layer as [W0, b0, W1, b1, ...] with
each W stored row-major as (fan_out, fan_in). The same layout is used by the
binary checkpoint format (see save_checkpoint).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


def parameter_count(sizes) -> int:
    return sum((fin + 1) * fout for fin, fout in zip(sizes[:-1], sizes[1:]))


class Mlp:
    """Value-object network: layer sizes plus one flat parameter vector."""

    def __init__(self, sizes, params: np.ndarray):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("need at least input and output sizes, all >= 1")
        params = np.asarray(params, dtype=float)
        if params.shape != (parameter_count(sizes),):
            raise ValueError(
                f"expected {parameter_count(sizes)} parameters, got {params.shape}")
        if not np.isfinite(params).all():
            raise ValueError("parameters must be finite")
        self.sizes = sizes
        self._params = params
        self._version = 0

    @property
    def params(self) -> np.ndarray:
        return self._params

    def set_params(self, params: np.ndarray):
        params = np.asarray(params, dtype=float)
        if params.shape != self._params.shape:
            raise ValueError("parameter vector shape mismatch")
        if not np.isfinite(params).all():
            raise ValueError("parameters must be finite")
        self._params = params
        self._version += 1

    def layers(self):
        """Yield (W, b) views into the flat parameter vector."""
        off = 0
        for fin, fout in zip(self.sizes[:-1], self.sizes[1:]):
            w = self._params[off:off + fin * fout].reshape(fout, fin)
            off += fin * fout
            b = self._params[off:off + fout]
            off += fout
            yield w, b

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self._params.copy())


def init_mlp(sizes, rng: np.random.Generator) -> Mlp:
    """Uniform(-a, a) init with a = 1 / sqrt(fan_in), per layer."""
    chunks = []
    for fin, fout in zip(sizes[:-1], sizes[1:]):
        a = 1.0 / np.sqrt(fin)
        chunks.append(rng.uniform(-a, a, size=fin * fout))
        chunks.append(rng.uniform(-a, a, size=fout))
    return Mlp(sizes, np.concatenate(chunks))


@dataclass
class GradientTape:
    """Per-layer inputs recorded by forward(), enough for one backward()."""

    net: Mlp
    version: int
    layer_inputs: list = field(default_factory=list)
    squeeze: bool = False


def forward(net: Mlp, x) -> tuple[np.ndarray, GradientTape]:
    """Affine-tanh stack; accepts a single vector or a (batch, in) matrix."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.sizes[0]:
        raise ValueError(f"input shape {x.shape} incompatible with {net.sizes}")
    tape = GradientTape(net=net, version=net._version, squeeze=squeeze)
    a = x
    last = len(net.sizes) - 2
    for i, (w, b) in enumerate(net.layers()):
        tape.layer_inputs.append(a)
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
    return (a[0] if squeeze else a), tape


def backward(tape: GradientTape, output_grad) -> np.ndarray:
    """Gradient of sum(output_grad * output) w.r.t. the flat parameters.

    Exact reverse mode; batch rows accumulate. layer_inputs[i] holds the
    (post-tanh) input of layer i, so the tanh derivative is 1 - a^2.
    """
    net = tape.net
    if tape.version != net._version:
        raise RuntimeError("stale tape: parameters changed since forward()")
    gy = np.asarray(output_grad, dtype=float)
    if tape.squeeze:
        gy = gy[None, :]
    acts = tape.layer_inputs
    if gy.shape != (acts[0].shape[0], net.sizes[-1]):
        raise ValueError("output gradient shape mismatch")
    weights = [w for w, _ in net.layers()]
    grads = [None] * len(weights)
    gz = gy
    for i in reversed(range(len(weights))):
        grads[i] = (gz.T @ acts[i], gz.sum(axis=0))
        if i > 0:
            ga = gz @ weights[i]
            gz = ga * (1.0 - acts[i] * acts[i])
    flat = []
    for gw, gb in grads:
        flat.append(gw.ravel())
        flat.append(gb)
    return np.concatenate(flat)


# ---------------------------------------------------------------------------
# Categorical policy head


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class PolicyDistribution:
    """Softmax distribution over K contribution bins; bin k maps to k/(K-1)."""

    logits: np.ndarray

    @property
    def log_probs(self) -> np.ndarray:
        return log_softmax(np.asarray(self.logits, dtype=float))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def entropy(self) -> float:
        lp = self.log_probs
        return float(-(np.exp(lp) * lp).sum())


def policy_sample(dist: PolicyDistribution, rng: np.random.Generator):
    """Draw a bin, returning (bin index, log probability of that bin)."""
    probs = dist.probs
    u = rng.random()
    idx = int(min(np.searchsorted(np.cumsum(probs), u, side="right"),
                  len(probs) - 1))
    return idx, float(dist.log_probs[idx])


def bin_to_action(idx: int, bins: int) -> float:
    return idx / (bins - 1)


# ---------------------------------------------------------------------------
# Optimizer step and checkpoints


def sgd_step(params: np.ndarray, grads: np.ndarray, lr: float,
             direction: str = "descend") -> np.ndarray:
    """params +/- lr * grads. Fails fast on non-finite gradients."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ValueError("params and grads must have matching shapes")
    if not np.isfinite(grads).all():
        raise ValueError("non-finite gradient")
    if direction == "descend":
        return params - lr * grads
    if direction == "ascend":
        return params + lr * grads
    raise ValueError(f"unknown direction {direction!r}")


def save_checkpoint(path, net: Mlp):
    """Write <u32 layer count><u32 sizes...><f64 params...>, little-endian."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(net.sizes)))
        fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        fh.write(struct.pack(f"<{net.params.size}d", *net.params))


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as fh:
        raw = fh.read()
    (n_sizes,) = struct.unpack_from("<I", raw, 0)
    sizes = struct.unpack_from(f"<{n_sizes}I", raw, 4)
    count = parameter_count(sizes)
    params = np.array(struct.unpack_from(f"<{count}d", raw, 4 + 4 * n_sizes))
    return Mlp(sizes, params)
