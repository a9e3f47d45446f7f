from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from traceosr.errors import EmptyClass, TooFewSamples
from traceosr.features import (
    NgramVocabulary,
    address_vector,
    bank_vector,
    build_vocab,
    cmd_vector,
    count_ngrams,
    feature_length,
    featurize,
    featurize_with_stats,
    fit_standardizer,
    layout_hash,
    load_vocab,
    save_vocab,
)
from traceosr.synth import UniformRandom, WorkloadProfile, generate_workload, parse_motif
from traceosr.trace import Command, DramGeometry, partition

from .conftest import make_seq, random_cmd_line

A, R, W, P, PA = Command.ACT, Command.RDA, Command.WRA, Command.PRE, Command.PREA


def brute_force_ngrams(line, n):
    """Quadratic oracle: materialize every window as a tuple."""
    line = [Command(int(c)) for c in line]
    out = Counter()
    for i in range(len(line) - n + 1):
        out[tuple(line[i : i + n])] += 1
    return out


def synthetic_vocab(sizes: dict[int, int], m: int = 25) -> NgramVocabulary:
    """Distinct grams by base-5 expansion of consecutive integers."""
    grams = {}
    for n, size in sizes.items():
        entries = []
        for v in range(size):
            digits = []
            for _ in range(n):
                digits.append(Command(v % 5))
                v //= 5
            entries.append(tuple(digits))
        grams[n] = entries
    return NgramVocabulary(n_values=tuple(sizes), m=m, grams=grams)


class TestCountNgrams:
    def test_hand_case(self):
        counts = count_ngrams([A, R, A, R], 2)
        assert counts == {(A, R): 2, (R, A): 1}

    def test_window_longer_than_line(self):
        assert count_ngrams([A, R, A, R], 5) == Counter()

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            line = random_cmd_line(rng, int(rng.integers(1, 2001)))
            n = int(rng.choice([2, 3, 7, 11, 15]))
            assert count_ngrams(line, n) == brute_force_ngrams(line, n)

    @given(st.integers(0, 300), st.sampled_from([1, 2, 3, 7, 11, 15]))
    @settings(max_examples=60, deadline=None)
    def test_total_mass(self, length, n):
        line = random_cmd_line(np.random.default_rng(length + 31 * n), length)
        assert sum(count_ngrams(line, n).values()) == max(0, length - n + 1)


class TestBuildVocab:
    def test_pure_repetition_rotations(self):
        # ACT,WRA,PRE repeated 3 times: (A,W,P) x3, (W,P,A) x2, (P,A,W) x2;
        # the count-2 tie breaks lexicographically in favor of (W,P,A).
        line = np.array([A, W, P] * 3, dtype=np.uint8)
        vocab = build_vocab({"only": [line]}, n_values=(3,), m=2)
        assert vocab.grams[3] == [(A, W, P), (W, P, A)]

    def test_disjoint_classes_union(self):
        la = np.array([A, R] * 50, dtype=np.uint8)
        lb = np.array([W, P] * 50, dtype=np.uint8)
        vocab = build_vocab({"a": [la], "b": [lb]}, n_values=(2,), m=2)
        assert vocab.size(2) == 4

    def test_identical_classes_collapse(self):
        line = np.array([A, R] * 50, dtype=np.uint8)
        vocab = build_vocab({"a": [line], "b": [line.copy()]}, n_values=(2,), m=2)
        assert vocab.size(2) == 2

    def test_counts_pooled_within_class(self):
        # Separately each line favors its own gram; pooled, (R,R) dominates.
        l1 = np.array([R] * 30 + [A, W] * 5, dtype=np.uint8)
        l2 = np.array([R] * 30 + [W, A] * 5, dtype=np.uint8)
        vocab = build_vocab({"c": [l1, l2]}, n_values=(2,), m=1)
        assert vocab.grams[2] == [(R, R)]

    def test_empty_class_raises(self):
        with pytest.raises(EmptyClass):
            build_vocab({"a": []}, n_values=(2,), m=2)

    def test_class_order_fixes_layout(self):
        la = np.array([A, R] * 50, dtype=np.uint8)
        lb = np.array([W, P] * 50, dtype=np.uint8)
        vocab = build_vocab({"b": [lb], "a": [la]}, n_values=(2,), m=1)
        # sorted class order: "a" first
        assert vocab.grams[2][0] == (A, R)

    def test_vocab_file_round_trip(self, tmp_path):
        line = np.array([A, W, P] * 10, dtype=np.uint8)
        vocab = build_vocab({"k": [line]}, n_values=(2, 3), m=3)
        path = tmp_path / "vocab.json"
        save_vocab(path, vocab)
        again = load_vocab(path)
        assert again.n_values == vocab.n_values
        assert again.m == vocab.m
        assert again.grams == vocab.grams


class TestCmdVector:
    def test_no_vocabulary_hits(self):
        vocab = synthetic_vocab({2: 1})
        vocab.grams[2] = [(A, A)]
        vocab._rebuild_lookup()
        out = cmd_vector(np.array([R, W, R, W], np.uint8), vocab)
        assert np.array_equal(out, [0.0])

    def test_hand_counts_match(self):
        line = np.array([A, W, P] * 3, dtype=np.uint8)
        vocab = build_vocab({"only": [line]}, n_values=(3,), m=2)
        assert cmd_vector(line, vocab).tolist() == [3.0, 2.0]

    def test_vector_length_for_published_sizes(self):
        vocab = synthetic_vocab({7: 154, 11: 236, 15: 289})
        assert vocab.total_size == 679
        line = random_cmd_line(np.random.default_rng(0), 500)
        assert cmd_vector(line, vocab).shape == (679,)

    def test_restriction_of_full_multiset(self):
        rng = np.random.default_rng(5)
        grams = list(brute_force_ngrams(random_cmd_line(rng, 60), 3))[:10]
        vocab = NgramVocabulary(n_values=(3,), m=10, grams={3: grams})
        for _ in range(20):
            line = random_cmd_line(rng, int(rng.integers(3, 400)))
            full = brute_force_ngrams(line, 3)
            vec = cmd_vector(line, vocab)
            for slot, gram in enumerate(vocab.grams[3]):
                assert vec[slot] == full.get(gram, 0)


class TestBankVector:
    def test_single_bank(self, default_geometry):
        seq = make_seq([("PRE", 0, 0, 0, 0)] * 7)
        b = bank_vector(seq, default_geometry)
        assert b[0] == 7 and b.sum() == 7

    def test_length_32_for_defaults(self, default_geometry):
        seq = make_seq([("ACT", 1, 3, 3, 0)])
        assert bank_vector(seq, default_geometry).shape == (32,)

    def test_uniform_trace_within_5_percent(self, default_geometry):
        profile = WorkloadProfile(
            name="u",
            motif=parse_motif(["ACT", "RDA*2", "PRE"]),
            spatial=UniformRandom(),
            bank_affinity=None,
            rng_seed=1,
        )
        seq = generate_workload(profile, 100_000, default_geometry)
        b = bank_vector(seq, default_geometry)
        assert np.all(np.abs(b - len(seq) / 32) / (len(seq) / 32) < 0.05)

    def test_mass_equals_length(self, small_geometry):
        rng = np.random.default_rng(2)
        seq = make_seq(
            [
                ("PRE", 0, int(rng.integers(0, 2)), int(rng.integers(0, 2)), 0)
                for _ in range(123)
            ]
        )
        assert bank_vector(seq, small_geometry).sum() == 123


class TestAddressVector:
    def test_fig_scenario_block_zero(self, default_geometry):
        seq = make_seq([("ACT", 0, 1, 1, 2), ("WRA", 0, 1, 1, 3)])
        d, orphans = address_vector(seq, default_geometry)
        assert orphans == 0
        assert d[0] == 1 and d.sum() == 1

    def test_orphan_write(self, default_geometry):
        seq = make_seq([("WRA", 0, 0, 0, 0)])
        d, orphans = address_vector(seq, default_geometry)
        assert orphans == 1 and d.sum() == 0

    def test_last_block(self, default_geometry):
        seq = make_seq([("ACT", 0, 0, 0, 2**17 - 1), ("RDA", 0, 0, 0, 2**10 - 1)])
        d, orphans = address_vector(seq, default_geometry)
        assert orphans == 0
        assert d[1023] == 1
        # block arithmetic: floor(r/2^14)*128 + floor(c/8) = 7*128 + 127
        assert 7 * 128 + 127 == 1023

    def test_pre_closes_row(self, default_geometry):
        seq = make_seq(
            [("ACT", 0, 0, 0, 5), ("PRE", 0, 0, 0, 0), ("RDA", 0, 0, 0, 1)]
        )
        d, orphans = address_vector(seq, default_geometry)
        assert orphans == 1 and d.sum() == 0

    def test_prea_scoped_to_rank(self, default_geometry):
        seq = make_seq(
            [
                ("ACT", 0, 0, 0, 5),
                ("ACT", 1, 0, 0, 5),
                ("PREA", 0, 0, 0, 0),
                ("RDA", 1, 0, 0, 1),  # rank 1 untouched by rank-0 PREA
                ("RDA", 0, 0, 0, 1),  # orphan
            ]
        )
        d, orphans = address_vector(seq, default_geometry)
        assert orphans == 1 and d.sum() == 1

    def test_per_bank_independent_rows(self, small_geometry):
        seq = make_seq(
            [
                ("ACT", 0, 0, 0, 0),   # bank 0 row 0 -> block row 0
                ("ACT", 0, 1, 1, 63),  # bank 3 row 63 -> block row 3
                ("RDA", 0, 0, 0, 0),   # block 0
                ("RDA", 0, 1, 1, 15),  # block 3*4+3 = 15
            ]
        )
        d, orphans = address_vector(seq, small_geometry)
        assert orphans == 0
        assert d[0] == 1 and d[15] == 1

    def test_mass_conservation_random(self, small_geometry):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(1, 400))
            records = []
            for _ in range(n):
                c = ["ACT", "RDA", "WRA", "PRE", "PREA"][int(rng.integers(0, 5))]
                addr = int(rng.integers(0, 64 if c == "ACT" else 16)) if c in ("ACT", "RDA", "WRA") else 0
                records.append((c, 0, int(rng.integers(0, 2)), int(rng.integers(0, 2)), addr))
            seq = make_seq(records)
            d, orphans = address_vector(seq, small_geometry)
            n_rw = int(np.sum((seq.cmd == 1) | (seq.cmd == 2)))
            assert d.sum() + orphans == n_rw


class TestFeaturize:
    def test_total_length_sec_shape(self, default_geometry):
        vocab = synthetic_vocab({7: 154, 11: 236, 15: 289})
        assert feature_length(vocab, default_geometry) == 679 + 32 + 1024 == 1735

    def test_total_length_memtest_shape(self, default_geometry):
        vocab = synthetic_vocab({7: 132, 11: 196, 15: 215})
        assert feature_length(vocab, default_geometry) == 543 + 32 + 1024 == 1599

    def test_total_length_empty_vocab(self, default_geometry):
        vocab = NgramVocabulary(n_values=(7, 11, 15), m=25, grams={7: [], 11: [], 15: []})
        assert feature_length(vocab, default_geometry) == 1056

    def test_layout_and_determinism(self, small_geometry):
        rng = np.random.default_rng(3)
        line = np.array([A, R, R, P] * 100, dtype=np.uint8)
        vocab = build_vocab({"k": [line]}, n_values=(2, 4), m=3)
        profile = WorkloadProfile(
            name="k", motif=parse_motif(["ACT", "RDA*2", "PRE"]), spatial=UniformRandom(),
            bank_affinity=(1, 1, 1, 1), rng_seed=4,
        )
        sub = partition(generate_workload(profile, 800, small_geometry), 800)[0]
        v1, orphans = featurize_with_stats(sub, vocab, small_geometry)
        v2 = featurize(sub, vocab, small_geometry)
        assert np.array_equal(v1, v2)
        assert v1.shape == (vocab.total_size + 4 + 16,)
        # concatenation layout: cmd block, bank block, address block
        assert np.array_equal(v1[: vocab.total_size], cmd_vector(sub.cmd, vocab))
        assert np.array_equal(v1[vocab.total_size : vocab.total_size + 4], bank_vector(sub, small_geometry))
        d, o = address_vector(sub, small_geometry)
        assert np.array_equal(v1[vocab.total_size + 4 :], d)
        assert o == orphans

    def test_address_only_difference_keeps_cmd_block(self, small_geometry):
        base = [("ACT", 0, 0, 0, 3), ("RDA", 0, 0, 0, 1), ("PRE", 0, 0, 0, 0)] * 5
        moved = [(c, r, g, b, a + 16 if c == "ACT" else a) for (c, r, g, b, a) in base]
        vocab = build_vocab({"k": [make_seq(base).cmd]}, n_values=(2,), m=4)
        va = featurize(_sub(make_seq(base)), vocab, small_geometry)
        vb = featurize(_sub(make_seq(moved)), vocab, small_geometry)
        ncmd = vocab.total_size
        assert np.array_equal(va[:ncmd], vb[:ncmd])
        assert not np.array_equal(va[ncmd:], vb[ncmd:])

    def test_reordered_commands_keep_bank_block(self, small_geometry):
        seq_a = make_seq([("PRE", 0, 0, 0, 0), ("PRE", 0, 1, 1, 0), ("PRE", 0, 0, 1, 0)])
        seq_b = make_seq([("PRE", 0, 0, 1, 0), ("PRE", 0, 0, 0, 0), ("PRE", 0, 1, 1, 0)])
        assert np.array_equal(bank_vector(seq_a, small_geometry), bank_vector(seq_b, small_geometry))


def _sub(seq):
    return partition(seq, len(seq))[0]


class TestStandardizer:
    def test_constant_dataset_maps_to_zero(self):
        X = np.full((5, 3), 7.0)
        s = fit_standardizer(X)
        assert np.allclose(s.apply(X), 0.0)

    def test_two_point_example(self):
        s = fit_standardizer(np.array([[0.0], [2.0]]))
        assert s.mean[0] == 1.0 and s.scale[0] == 1.0  # population std of {0,2}
        assert s.apply(np.array([2.0]))[0] == 1.0

    def test_round_trip_identity(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 6)) * 10 + 3
        s = fit_standardizer(X)
        probe = rng.normal(size=(10, 6))
        assert np.allclose(s.inverse(s.apply(probe)), probe, atol=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            fit_standardizer(np.ones((1, 4)))

    def test_disabled_is_identity(self):
        X = np.arange(12.0).reshape(4, 3)
        s = fit_standardizer(X, enabled=False)
        assert np.array_equal(s.apply(X), X)


class TestLayoutHash:
    def test_sensitive_to_vocab_and_geometry(self, default_geometry, small_geometry):
        va = synthetic_vocab({2: 3})
        vb = synthetic_vocab({2: 4})
        assert layout_hash(va, default_geometry) != layout_hash(vb, default_geometry)
        assert layout_hash(va, default_geometry) != layout_hash(va, small_geometry)
        assert layout_hash(va, default_geometry) == layout_hash(va, DramGeometry())
