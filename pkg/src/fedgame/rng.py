"""Named, reproducible random substreams.

One master seed fans out into independent streams keyed by string labels,
so adding a new consumer never perturbs the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, *labels) -> np.random.Generator:
    """Generator for the substream named by ``labels`` under ``master_seed``."""
    entropy = [int(master_seed) & _U64]
    entropy.extend(_label_entropy(str(lab)) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(entropy))
