"""Train/test splitting of labeled subsequences for open-set evaluation.

Known classes are split per label with an independent seeded permutation
(seed mixed with a label digest), so the split of one class never depends on
another class's sample count or on global sample order. Every subsequence of
every unknown workload goes to the unknown test partition.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyClass, LabelOverlap


@dataclass(frozen=True)
class SplitSpec:
    known: tuple[str, ...]
    unknown: tuple[str, ...] = ()
    train_fraction: float = 2.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "known", tuple(self.known))
        object.__setattr__(self, "unknown", tuple(self.unknown))
        overlap = set(self.known) & set(self.unknown)
        if overlap:
            raise LabelOverlap(f"labels in both known and unknown: {sorted(overlap)}")
        if len(set(self.known)) != len(self.known) or len(set(self.unknown)) != len(self.unknown):
            raise LabelOverlap("duplicate labels within known or unknown list")
        if not self.known:
            raise ValueError("at least one known label required")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass
class SplitIndices:
    train: np.ndarray
    test_known: np.ndarray
    test_unknown: np.ndarray


def _label_rng(seed: int, label: str) -> np.random.Generator:
    digest = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, digest))))


def train_count(n: int, fraction: float) -> int:
    """Rounded n * fraction, clamped so both partitions stay non-empty."""
    return max(1, min(n - 1, int(np.floor(n * fraction + 0.5))))


def split(labels: Sequence[str], spec: SplitSpec) -> SplitIndices:
    """Split sample indices by label per the spec; deterministic given the seed."""
    labels = list(labels)
    by_label: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_label.setdefault(label, []).append(i)

    listed = set(spec.known) | set(spec.unknown)
    unlisted = set(by_label) - listed
    if unlisted:
        raise ValueError(f"labels not listed as known or unknown: {sorted(unlisted)}")

    train: list[int] = []
    test_known: list[int] = []
    for label in spec.known:
        idx = by_label.get(label, [])
        if len(idx) < 2:
            raise EmptyClass(f"known class {label!r} needs >= 2 subsequences, has {len(idx)}")
        perm = _label_rng(spec.seed, label).permutation(len(idx))
        n_train = train_count(len(idx), spec.train_fraction)
        chosen = {idx[j] for j in perm[:n_train]}
        train.extend(sorted(chosen))
        test_known.extend(sorted(set(idx) - chosen))

    test_unknown: list[int] = []
    for label in spec.unknown:
        idx = by_label.get(label, [])
        if not idx:
            raise EmptyClass(f"unknown class {label!r} has no subsequences")
        test_unknown.extend(idx)

    return SplitIndices(
        train=np.array(sorted(train), dtype=np.int64),
        test_known=np.array(sorted(test_known), dtype=np.int64),
        test_unknown=np.array(sorted(test_unknown), dtype=np.int64),
    )
