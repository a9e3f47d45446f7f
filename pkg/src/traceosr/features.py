"""Feature extraction: command n-gram counts, bank counts, address-block counts.

A subsequence is turned into one dense vector laid out as

    [ c_7 | c_11 | c_15 | bank counts | block counts ]

where c_n counts occurrences of the vocabulary n-grams in the command line,
the bank part counts records per flat bank index (all five command types),
and the block part counts resolved read/write cell accesses per coarse
(block_rows x block_cols) region, summed over banks. Reads/writes that have
no active row ("orphans") contribute nothing to the block counts but are
tallied separately so mass conservation stays checkable.

n-grams are packed into uint64 keys, 3 bits per command with the first
command in the highest field, so numeric key order equals lexicographic
order on command-code tuples.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyClass, TooFewSamples, VersionMismatch
from .trace import Command, DramGeometry, Subsequence, bank_linear_indices

logger = logging.getLogger(__name__)

_BITS = 3  # a command code (0..4) fits in 3 bits
VOCAB_FORMAT_VERSION = 1


def _as_codes(cmd_line) -> np.ndarray:
    if isinstance(cmd_line, np.ndarray):
        return cmd_line.astype(np.uint8, copy=False)
    return np.array([int(c) for c in cmd_line], dtype=np.uint8)


def _pack_keys(codes: np.ndarray, n: int) -> np.ndarray:
    """uint64 key per window of width n (empty when the line is shorter)."""
    length = codes.shape[0]
    if length < n:
        return np.empty(0, dtype=np.uint64)
    c = codes.astype(np.uint64)
    out = np.zeros(length - n + 1, dtype=np.uint64)
    for i in range(n):
        out |= c[i : length - n + 1 + i] << np.uint64(_BITS * (n - 1 - i))
    return out


def _unpack_key(key: int, n: int) -> tuple[Command, ...]:
    mask = (1 << _BITS) - 1
    return tuple(Command((key >> (_BITS * (n - 1 - i))) & mask) for i in range(n))


def pack_gram(gram: Sequence[int]) -> int:
    n = len(gram)
    key = 0
    for i, c in enumerate(gram):
        key |= int(c) << (_BITS * (n - 1 - i))
    return key


def count_ngrams(cmd_line, n: int) -> Counter:
    """Sliding-window (stride 1) n-gram counts of a command line."""
    if n < 1:
        raise ValueError("n must be >= 1")
    keys = _pack_keys(_as_codes(cmd_line), n)
    uniq, counts = np.unique(keys, return_counts=True)
    return Counter({_unpack_key(int(k), n): int(c) for k, c in zip(uniq, counts)})


@dataclass
class NgramVocabulary:
    """Ordered frequent n-gram sets, one per n; order fixes the vector layout."""

    n_values: tuple[int, ...]
    m: int
    grams: dict[int, list[tuple[Command, ...]]]
    _lookup: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.n_values = tuple(int(n) for n in self.n_values)
        for n in self.n_values:
            entries = self.grams.get(n, [])
            if len(set(entries)) != len(entries):
                raise ValueError(f"duplicate {n}-grams in vocabulary")
            for g in entries:
                if len(g) != n:
                    raise ValueError(f"{n}-gram of wrong length: {g!r}")
        self._rebuild_lookup()

    def _rebuild_lookup(self):
        self._lookup = {}
        for n in self.n_values:
            keys = np.array([pack_gram(g) for g in self.grams.get(n, [])], dtype=np.uint64)
            order = np.argsort(keys, kind="stable")
            self._lookup[n] = (keys[order], order.astype(np.int64))

    def size(self, n: int) -> int:
        return len(self.grams.get(n, []))

    @property
    def total_size(self) -> int:
        return sum(self.size(n) for n in self.n_values)

    def to_dict(self) -> dict:
        return {
            "format_version": VOCAB_FORMAT_VERSION,
            "n_values": list(self.n_values),
            "m": self.m,
            "grams": {str(n): [[c.name for c in g] for g in self.grams.get(n, [])] for n in self.n_values},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NgramVocabulary":
        version = data.get("format_version")
        if version != VOCAB_FORMAT_VERSION:
            raise VersionMismatch(f"vocabulary format {version!r}, expected {VOCAB_FORMAT_VERSION}")
        grams = {
            int(n): [tuple(Command[name] for name in g) for g in entries]
            for n, entries in data["grams"].items()
        }
        return cls(n_values=tuple(data["n_values"]), m=int(data["m"]), grams=grams)


def save_vocab(path: str | Path, vocab: NgramVocabulary) -> None:
    Path(path).write_text(json.dumps(vocab.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def load_vocab(path: str | Path) -> NgramVocabulary:
    return NgramVocabulary.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _cmd_of(item) -> np.ndarray:
    return item.cmd if hasattr(item, "cmd") else _as_codes(item)


def build_vocab(
    groups: Mapping[str, Sequence],
    n_values: Sequence[int] = (7, 11, 15),
    m: int = 25,
) -> NgramVocabulary:
    """Build the vocabulary from training subsequences grouped by class.

    For each class and each n, counts are pooled over all of the class's
    training subsequences and the top-m grams selected (ties broken by
    lexicographic order on command codes). A_n is the union over classes in
    sorted label order, each class contributing its grams in rank order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    labels = sorted(groups)
    per_class_top: dict[str, dict[int, list[int]]] = {}
    for label in labels:
        lines = list(groups[label])
        if not lines:
            raise EmptyClass(f"class {label!r} has no training subsequences")
        per_n: dict[int, list[int]] = {}
        for n in n_values:
            pooled: dict[int, int] = {}
            for item in lines:
                keys = _pack_keys(_cmd_of(item), n)
                uniq, counts = np.unique(keys, return_counts=True)
                for k, c in zip(uniq.tolist(), counts.tolist()):
                    pooled[k] = pooled.get(k, 0) + c
            ranked = sorted(pooled.items(), key=lambda kv: (-kv[1], kv[0]))
            per_n[n] = [k for k, _ in ranked[:m]]
        per_class_top[label] = per_n

    grams: dict[int, list[tuple[Command, ...]]] = {}
    for n in n_values:
        seen: set[int] = set()
        ordered: list[tuple[Command, ...]] = []
        for label in labels:
            for key in per_class_top[label][n]:
                if key not in seen:
                    seen.add(key)
                    ordered.append(_unpack_key(key, n))
        grams[int(n)] = ordered
    return NgramVocabulary(n_values=tuple(int(n) for n in n_values), m=m, grams=grams)


def cmd_vector(cmd_line, vocab: NgramVocabulary) -> np.ndarray:
    """Concatenated per-n vocabulary counts; grams outside the vocabulary are ignored."""
    codes = _as_codes(_cmd_of(cmd_line) if hasattr(cmd_line, "cmd") else cmd_line)
    out = np.zeros(vocab.total_size, dtype=np.float64)
    offset = 0
    for n in vocab.n_values:
        size = vocab.size(n)
        if size:
            sorted_keys, slots = vocab._lookup[n]
            keys = _pack_keys(codes, n)
            if keys.size:
                uniq, counts = np.unique(keys, return_counts=True)
                pos = np.searchsorted(sorted_keys, uniq)
                pos = np.minimum(pos, size - 1)
                hit = sorted_keys[pos] == uniq
                out[offset + slots[pos[hit]]] = counts[hit]
        offset += size
    return out


def bank_vector(subseq, geometry: DramGeometry) -> np.ndarray:
    """Per-bank record counts over all five command types; sums to len(subseq)."""
    flat = bank_linear_indices(subseq, geometry)
    return np.bincount(flat, minlength=geometry.bank_count).astype(np.float64)


def address_vector(subseq, geometry: DramGeometry) -> tuple[np.ndarray, int]:
    """Block-level access counts and the orphan read/write count.

    A per-bank state machine tracks the active row: ACT opens it, PRE closes
    the bank, PREA closes every bank of the record's rank. Each RDA/WRA with
    an active row r and column c lands in block (r // block_rows) * col_blocks
    + (c // block_cols); without an active row it is an orphan.
    """
    n_banks = geometry.banks_per_group
    n_groups = geometry.bank_groups_per_rank
    banks_per_rank = geometry.banks_per_rank
    g_r = geometry.block_rows
    g_c = geometry.block_cols
    col_blocks = geometry.col_blocks

    active: list[int] = [-1] * geometry.bank_count
    d = [0.0] * geometry.block_count
    orphans = 0

    cmds = subseq.cmd.tolist()
    ranks = subseq.rank.tolist()
    groups = subseq.bank_group.tolist()
    banks = subseq.bank.tolist()
    addrs = subseq.address.tolist()

    for i, c in enumerate(cmds):
        flat = (ranks[i] * n_groups + groups[i]) * n_banks + banks[i]
        if c == 0:  # ACT
            active[flat] = addrs[i]
        elif c <= 2:  # RDA/WRA
            row = active[flat]
            if row < 0:
                orphans += 1
            else:
                d[(row // g_r) * col_blocks + addrs[i] // g_c] += 1.0
        elif c == 3:  # PRE
            active[flat] = -1
        else:  # PREA
            start = ranks[i] * banks_per_rank
            active[start : start + banks_per_rank] = [-1] * banks_per_rank
    return np.asarray(d, dtype=np.float64), orphans


def feature_length(vocab: NgramVocabulary, geometry: DramGeometry) -> int:
    return vocab.total_size + geometry.bank_count + geometry.block_count


def featurize(subseq: Subsequence, vocab: NgramVocabulary, geometry: DramGeometry) -> np.ndarray:
    vec, _ = featurize_with_stats(subseq, vocab, geometry)
    return vec


def featurize_with_stats(
    subseq, vocab: NgramVocabulary, geometry: DramGeometry
) -> tuple[np.ndarray, int]:
    """Full feature vector plus the orphan read/write count for reporting."""
    c = cmd_vector(subseq.cmd, vocab)
    b = bank_vector(subseq, geometry)
    d, orphans = address_vector(subseq, geometry)
    return np.concatenate([c, b, d]), orphans


def featurize_many(
    subseqs: Iterable, vocab: NgramVocabulary, geometry: DramGeometry
) -> tuple[np.ndarray, list[str], list[int], int]:
    """Feature matrix for many subsequences: (X, labels, block indices, total orphans)."""
    rows = []
    labels = []
    blocks = []
    orphan_total = 0
    for sub in subseqs:
        vec, orphans = featurize_with_stats(sub, vocab, geometry)
        rows.append(vec)
        labels.append(sub.label)
        blocks.append(getattr(sub, "source_block", -1))
        orphan_total += orphans
    width = feature_length(vocab, geometry)
    X = np.array(rows, dtype=np.float64) if rows else np.empty((0, width))
    return X, labels, blocks, orphan_total


# ---------------------------------------------------------------------------
# Standardization


@dataclass
class Standardizer:
    """Per-dimension (x - mean) / std; zero-variance dimensions are only centered."""

    mean: np.ndarray
    scale: np.ndarray
    enabled: bool = True

    def apply(self, x: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.array(x, dtype=np.float64, copy=True)
        return (x - self.mean) / self.scale

    def inverse(self, x: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.array(x, dtype=np.float64, copy=True)
        return x * self.scale + self.mean


def fit_standardizer(X: np.ndarray, enabled: bool = True) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewSamples("standardizer needs at least 2 training vectors")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    return Standardizer(mean=mean, scale=scale, enabled=enabled)


# ---------------------------------------------------------------------------
# Layout identity


def layout_hash(vocab: NgramVocabulary, geometry: DramGeometry) -> str:
    """Hash of everything the feature layout depends on (vocab + geometry)."""
    payload = {"geometry": geometry.to_dict(), "vocab": vocab.to_dict()}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
