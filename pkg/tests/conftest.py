from __future__ import annotations

import numpy as np
import pytest

from traceosr.synth import HotBlock, SequentialSweep, Strided, UniformRandom, WorkloadProfile, parse_motif
from traceosr.trace import Command, DramGeometry, TraceRecord, WorkloadSequence


@pytest.fixture(scope="session")
def default_geometry() -> DramGeometry:
    return DramGeometry()


@pytest.fixture(scope="session")
def small_geometry() -> DramGeometry:
    # 4 banks, 16 blocks of 16x4 cells: fast to exercise exhaustively.
    return DramGeometry(
        ranks=1,
        bank_groups_per_rank=2,
        banks_per_group=2,
        rows_per_bank=64,
        cols_per_bank=16,
        block_rows=16,
        block_cols=4,
    )


def make_seq(records, label="w") -> WorkloadSequence:
    return WorkloadSequence.from_records([TraceRecord(Command[c], r, g, b, a) for c, r, g, b, a in records], label)


def random_cmd_line(rng: np.random.Generator, length: int) -> np.ndarray:
    return rng.integers(0, 5, size=length).astype(np.uint8)


def mini_profiles(small: bool = True) -> tuple[list[WorkloadProfile], list[WorkloadProfile]]:
    """Three known + one unknown profile sized for the small geometry (4 banks)."""
    known = [
        WorkloadProfile(
            name="k-read",
            motif=parse_motif(["ACT", "RDA*3", "PRE"]),
            motif_noise=0.2,
            spatial=SequentialSweep(),
            bank_affinity=(1.0, 1.0, 1.0, 1.0),
            rng_seed=11,
        ),
        WorkloadProfile(
            name="k-write",
            motif=parse_motif(["ACT", "WRA*3", "PRE"]),
            motif_noise=0.2,
            spatial=UniformRandom(),
            bank_affinity=(1.0, 0.2, 1.0, 0.2),
            rng_seed=12,
        ),
        WorkloadProfile(
            name="k-mixed",
            motif=parse_motif(["ACT", "RDA", "WRA", "PRE"]),
            motif_noise=0.1,
            spatial=Strided(stride=5),
            bank_affinity=(0.2, 1.0, 0.2, 1.0),
            rng_seed=13,
        ),
    ]
    unknown = [
        WorkloadProfile(
            name="u-burst",
            motif=parse_motif(["ACT", "WRA*6", "PRE"]),
            motif_noise=0.1,
            spatial=HotBlock(blocks=(3, 12), heat=0.95),
            bank_affinity=(0.1, 0.1, 1.0, 1.0),
            rng_seed=21,
        ),
    ]
    return known, unknown
