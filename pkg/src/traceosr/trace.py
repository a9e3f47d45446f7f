"""Workload trace data model: commands, DRAM geometry, ingestion, partitioning.

Trace file format (CSV, UTF-8, LF line endings, no header)::

    CMD,rank,bank_group,bank,address

CMD is one of ACT, RDA, WRA, PRE, PREA (uppercase). The address field holds a
row index for ACT, a column index for RDA/WRA, and 0 for PRE/PREA (the value
is ignored for precharge commands). Files whose name ends in ".gz" are read
and written gzip-compressed. Command codes are fixed by the file format:
ACT=0, RDA=1, WRA=2, PRE=3, PREA=4.
"""

from __future__ import annotations

import gzip
from array import array
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import MalformedLine, OutOfRange


class Command(IntEnum):
    ACT = 0
    RDA = 1
    WRA = 2
    PRE = 3
    PREA = 4


CMD_NAMES: tuple[str, ...] = tuple(c.name for c in Command)
_CMD_CODE = {c.name: c.value for c in Command}

_GEOMETRY_FIELDS = (
    "ranks",
    "bank_groups_per_rank",
    "banks_per_group",
    "rows_per_bank",
    "cols_per_bank",
    "block_rows",
    "block_cols",
)


@dataclass(frozen=True)
class DramGeometry:
    """DRAM organization: rank -> bank group -> bank, each bank a row×col array.

    block_rows/block_cols define the coarse block grid used by the address
    feature vector; they must divide rows_per_bank/cols_per_bank.
    """

    ranks: int = 2
    bank_groups_per_rank: int = 4
    banks_per_group: int = 4
    rows_per_bank: int = 2**17
    cols_per_bank: int = 2**10
    block_rows: int = 2**14
    block_cols: int = 8

    def __post_init__(self):
        for name in _GEOMETRY_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.rows_per_bank % self.block_rows:
            raise ValueError("block_rows must divide rows_per_bank")
        if self.cols_per_bank % self.block_cols:
            raise ValueError("block_cols must divide cols_per_bank")

    @property
    def bank_count(self) -> int:
        return self.ranks * self.bank_groups_per_rank * self.banks_per_group

    @property
    def banks_per_rank(self) -> int:
        return self.bank_groups_per_rank * self.banks_per_group

    @property
    def row_blocks(self) -> int:
        return self.rows_per_bank // self.block_rows

    @property
    def col_blocks(self) -> int:
        return self.cols_per_bank // self.block_cols

    @property
    def block_count(self) -> int:
        return self.row_blocks * self.col_blocks

    def to_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in _GEOMETRY_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "DramGeometry":
        unknown = set(data) - set(_GEOMETRY_FIELDS)
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in data.items()})


class TraceRecord(NamedTuple):
    cmd: Command
    rank: int
    bank_group: int
    bank: int
    address: int


def _as_column_arrays(cmd, rank, bank_group, bank, address):
    return (
        np.asarray(cmd, dtype=np.uint8),
        np.asarray(rank, dtype=np.uint16),
        np.asarray(bank_group, dtype=np.uint16),
        np.asarray(bank, dtype=np.uint16),
        np.asarray(address, dtype=np.uint32),
    )


@dataclass
class WorkloadSequence:
    """Column-wise store of one workload's trace records."""

    label: str
    cmd: np.ndarray
    rank: np.ndarray
    bank_group: np.ndarray
    bank: np.ndarray
    address: np.ndarray

    def __len__(self) -> int:
        return int(self.cmd.shape[0])

    def record(self, i: int) -> TraceRecord:
        return TraceRecord(
            Command(int(self.cmd[i])),
            int(self.rank[i]),
            int(self.bank_group[i]),
            int(self.bank[i]),
            int(self.address[i]),
        )

    def records(self) -> Iterator[TraceRecord]:
        for i in range(len(self)):
            yield self.record(i)

    @classmethod
    def from_records(cls, records: Iterable[TraceRecord], label: str) -> "WorkloadSequence":
        rows = list(records)
        cols = list(zip(*rows)) if rows else [[], [], [], [], []]
        return cls(label, *_as_column_arrays(*cols))


@dataclass
class Subsequence:
    """A contiguous, non-overlapping length-l_s slice of a workload sequence."""

    label: str
    cmd: np.ndarray
    rank: np.ndarray
    bank_group: np.ndarray
    bank: np.ndarray
    address: np.ndarray
    source_block: int

    def __len__(self) -> int:
        return int(self.cmd.shape[0])

    def record(self, i: int) -> TraceRecord:
        return WorkloadSequence.record(self, i)  # same column layout

    def records(self) -> Iterator[TraceRecord]:
        for i in range(len(self)):
            yield self.record(i)


def parse_trace(stream: Iterable[str | bytes], geometry: DramGeometry, label: str) -> WorkloadSequence:
    """Parse a line-oriented trace stream into a WorkloadSequence.

    Raises MalformedLine or OutOfRange with a 1-based line number. Empty
    lines are skipped. PRE/PREA addresses are normalized to 0.
    """
    cmd = array("B")
    rank = array("H")
    bank_group = array("H")
    bank = array("H")
    address = array("I")
    code_of = _CMD_CODE
    n_ranks = geometry.ranks
    n_groups = geometry.bank_groups_per_rank
    n_banks = geometry.banks_per_group
    n_rows = geometry.rows_per_bank
    n_cols = geometry.cols_per_bank

    for line_no, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise MalformedLine(line_no, f"expected 5 fields, got {len(parts)}")
        c = code_of.get(parts[0])
        if c is None:
            raise MalformedLine(line_no, f"unknown command {parts[0]!r}")
        try:
            r = int(parts[1])
            g = int(parts[2])
            b = int(parts[3])
            a = int(parts[4])
        except ValueError:
            raise MalformedLine(line_no, f"unparseable integer field in {line!r}") from None
        if not 0 <= r < n_ranks:
            raise OutOfRange(f"rank {r} outside [0, {n_ranks})", line_no)
        if not 0 <= g < n_groups:
            raise OutOfRange(f"bank_group {g} outside [0, {n_groups})", line_no)
        if not 0 <= b < n_banks:
            raise OutOfRange(f"bank {b} outside [0, {n_banks})", line_no)
        if c == 0:
            if not 0 <= a < n_rows:
                raise OutOfRange(f"row {a} outside [0, {n_rows})", line_no)
        elif c <= 2:
            if not 0 <= a < n_cols:
                raise OutOfRange(f"column {a} outside [0, {n_cols})", line_no)
        else:
            a = 0
        cmd.append(c)
        rank.append(r)
        bank_group.append(g)
        bank.append(b)
        address.append(a)

    def _np(arr, dtype):
        if not len(arr):
            return np.empty(0, dtype=dtype)
        return np.frombuffer(arr, dtype=dtype).copy()

    return WorkloadSequence(
        label=label,
        cmd=_np(cmd, np.uint8),
        rank=_np(rank, np.uint16),
        bank_group=_np(bank_group, np.uint16),
        bank=_np(bank, np.uint16),
        address=_np(address, np.uintc).astype(np.uint32, copy=False),
    )


def trace_label_from_path(path: str | Path) -> str:
    """Workload label for a trace file: the stem minus .csv/.gz suffixes."""
    name = Path(path).name
    for suffix in (".gz", ".csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def read_trace(path: str | Path, geometry: DramGeometry, label: str | None = None) -> WorkloadSequence:
    path = Path(path)
    if label is None:
        label = trace_label_from_path(path)
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return parse_trace(fh, geometry, label)


def serialize_trace(seq: WorkloadSequence | Subsequence, stream: IO[str]) -> None:
    """Write records as trace CSV lines (inverse of parse_trace)."""
    names = CMD_NAMES
    n = len(seq)
    chunk = 1 << 16
    cmd = seq.cmd
    rank = seq.rank
    group = seq.bank_group
    bank = seq.bank
    addr = seq.address
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        rows = zip(
            cmd[start:stop].tolist(),
            rank[start:stop].tolist(),
            group[start:stop].tolist(),
            bank[start:stop].tolist(),
            addr[start:stop].tolist(),
        )
        lines = [f"{names[c]},{r},{g},{b},{a if c < 3 else 0}\n" for c, r, g, b, a in rows]
        stream.write("".join(lines))


def write_trace(path: str | Path, seq: WorkloadSequence | Subsequence) -> None:
    path = Path(path)
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8", newline="\n") as fh:
        serialize_trace(seq, fh)


def partition(seq: WorkloadSequence, l_s: int) -> list[Subsequence]:
    """Split into floor(len/l_s) non-overlapping blocks; the remainder is dropped."""
    if l_s < 1:
        raise ValueError("l_s must be >= 1")
    n_blocks = len(seq) // l_s
    out = []
    for i in range(n_blocks):
        sl = slice(i * l_s, (i + 1) * l_s)
        out.append(
            Subsequence(
                label=seq.label,
                cmd=seq.cmd[sl],
                rank=seq.rank[sl],
                bank_group=seq.bank_group[sl],
                bank=seq.bank[sl],
                address=seq.address[sl],
                source_block=i,
            )
        )
    return out


def bank_linear_index(rank: int, bank_group: int, bank: int, geometry: DramGeometry) -> int:
    """Flat bank index, rank-major then bank group then bank."""
    if not 0 <= rank < geometry.ranks:
        raise OutOfRange(f"rank {rank} outside [0, {geometry.ranks})")
    if not 0 <= bank_group < geometry.bank_groups_per_rank:
        raise OutOfRange(f"bank_group {bank_group} outside [0, {geometry.bank_groups_per_rank})")
    if not 0 <= bank < geometry.banks_per_group:
        raise OutOfRange(f"bank {bank} outside [0, {geometry.banks_per_group})")
    return (rank * geometry.bank_groups_per_rank + bank_group) * geometry.banks_per_group + bank


def bank_linear_indices(seq: WorkloadSequence | Subsequence, geometry: DramGeometry) -> np.ndarray:
    """Vectorized bank_linear_index over all records (inputs assumed in range)."""
    r = seq.rank.astype(np.int64)
    g = seq.bank_group.astype(np.int64)
    b = seq.bank.astype(np.int64)
    return (r * geometry.bank_groups_per_rank + g) * geometry.banks_per_group + b
