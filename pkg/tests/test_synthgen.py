# tests/test_synthgen.py
"""Tests for the synthetic multi-channel generator."""

import numpy as np
import pytest

from ccrec.config import GenConfig
from ccrec.dataset import PairPartition, Vocab, stats
from ccrec.exceptions import CcrecGenerationError, CcrecValidationError
from ccrec.synthgen import GroundTruth, generate, oracle_topk

from .conftest import OFF, ON


def _rank_correlation(a, b):
    ranks_a = np.argsort(np.argsort(a))
    ranks_b = np.argsort(np.argsort(b))
    return float(np.corrcoef(ranks_a, ranks_b)[0, 1])


def _mean_channel_agreement(truth):
    off = truth.affinity_matrix(OFF)
    on = truth.affinity_matrix(ON)
    return np.mean([_rank_correlation(off[u], on[u]) for u in range(truth.n_users)])


class TestGenerate:

    def test_counts_agree_with_store(self, synthetic):
        store, truth = synthetic
        report = stats(store)

        assert report.channels[OFF].interactions == truth.counts.interactions_off
        assert report.channels[ON].interactions == truth.counts.interactions_on
        assert store.partition_counts()[PairPartition.BOTH] == truth.counts.both_pairs
        assert len(store) == truth.counts.interactions_off + truth.counts.interactions_on

    def test_draw_counts_within_range(self, synthetic, small_gen_config):
        store, _ = synthetic
        low, high = small_gen_config.interactions_per_user_channel
        per_user = {}
        for it in store.interactions:
            per_user[(it.user, it.channel)] = per_user.get((it.user, it.channel), 0) + 1
        # Mirrored purchases can only add to a channel's own draws.
        assert all(count >= low for count in per_user.values())
        for (user, channel), count in per_user.items():
            if user not in store.overlapping_users:
                assert count <= high

    def test_overlap_shares(self):
        store, truth = generate(GenConfig(n_users=100, n_items=50, interactions_per_user_channel=(2, 4),
                                          overlap_user_frac=0.3, seed=1))
        assert len(store.overlapping_users) == 30
        assert truth.counts.user_overlap == 30
        assert len(store.users_off | store.users_on) == 100

    def test_no_overlapping_users(self):
        store, truth = generate(GenConfig(n_users=30, n_items=40, interactions_per_user_channel=(2, 5),
                                          overlap_user_frac=0.0, dup_prob=1.0, seed=2))
        assert not store.overlapping_users
        assert truth.counts.both_pairs == 0

    def test_full_mirroring_creates_both_pairs(self):
        store, _ = generate(GenConfig(n_users=20, n_items=30, interactions_per_user_channel=(3, 5),
                                      overlap_user_frac=1.0, overlap_item_frac=1.0, dup_prob=1.0, seed=0))
        counts = store.partition_counts()
        assert counts[PairPartition.OFF_ONLY] == 0
        assert counts[PairPartition.ON_ONLY] == 0
        assert counts[PairPartition.BOTH] > 0

    def test_same_seed_same_store(self, small_gen_config):
        a, truth_a = generate(small_gen_config)
        b, truth_b = generate(small_gen_config)

        assert a.interactions == b.interactions
        np.testing.assert_array_equal(truth_a.w, truth_b.w)

    def test_raw_ids(self, synthetic):
        store, truth = synthetic
        assert store.vocab.user_ids[:2] == ("u0", "u1")
        assert store.vocab == truth.vocab

    def test_infeasible_draw(self):
        config = GenConfig(n_users=5, n_items=10, interactions_per_user_channel=(10, 10), seed=0)
        with pytest.raises(CcrecGenerationError):
            generate(config)


class TestDivergence:
    """How gamma shapes the gap between the two channels."""

    def test_gamma_zero_gives_identical_channels(self):
        _, truth = generate(GenConfig(n_users=20, n_items=30, gamma=0.0, interactions_per_user_channel=(2, 4)))
        for user in range(truth.n_users):
            assert oracle_topk(truth, user, OFF, 10) == oracle_topk(truth, user, ON, 10)

    def test_larger_gamma_lowers_rank_agreement(self):
        base = dict(n_users=60, n_items=40, interactions_per_user_channel=(2, 4), seed=5)
        _, close = generate(GenConfig(gamma=0.5, **base))
        _, far = generate(GenConfig(gamma=3.0, **base))

        assert _mean_channel_agreement(far) < _mean_channel_agreement(close)


class TestGroundTruth:

    def _truth(self):
        return GroundTruth(
            z=np.array([[1.0, 0.0]]),
            delta_off=np.array([[0.0, 1.0]]),
            delta_on=np.array([[0.0, -1.0]]),
            w=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]),
            gamma=2.0,
            vocab=Vocab(("u0",), ("i0", "i1", "i2", "i3")),
        )

    def test_affinity(self):
        truth = self._truth()
        np.testing.assert_allclose(truth.affinity(0, OFF), [1.0, 2.0, 1.0, -2.0])
        np.testing.assert_allclose(truth.affinity(0, ON), [1.0, -2.0, 1.0, 2.0])
        np.testing.assert_allclose(truth.affinity_matrix(ON)[0], truth.affinity(0, ON))

    def test_oracle_ties_go_to_lower_index(self):
        truth = self._truth()
        assert oracle_topk(truth, 0, OFF, 3) == [1, 0, 2]
        assert oracle_topk(truth, 0, ON, 2) == [3, 0]
        assert oracle_topk(truth, 0, ON, 0) == []

    def test_affinity_checks_user(self):
        with pytest.raises(CcrecValidationError):
            self._truth().affinity(1, OFF)
