# tests/test_metrics.py
"""Tests for HR/NDCG, top-k selection and the evaluation protocol."""

import math

import numpy as np
import pytest

from ccrec.dataset import DatasetBundle, Vocab
from ccrec.exceptions import CcrecEvaluationError, CcrecValidationError
from ccrec.metrics import (
    CandidateMode,
    EvalProtocol,
    MetricReport,
    MetricRow,
    UserFilter,
    aggregate_reports,
    candidates,
    evaluate,
    evaluate_channels,
    evaluation_users,
    hr_at_k,
    ndcg_at_k,
    rank_items,
    top_k,
)

from .conftest import OFF, ON


def _bundle(n_items=6, test_off=None, test_on=None, train_items=None, overlapping=()):
    return DatasetBundle(
        train=(),
        val_off={},
        val_on={},
        test_off={u: frozenset(v) for u, v in (test_off or {}).items()},
        test_on={u: frozenset(v) for u, v in (test_on or {}).items()},
        train_items_per_user_channel={k: frozenset(v) for k, v in (train_items or {}).items()},
        vocab=Vocab(tuple(f"u{i}" for i in range(4)), tuple(f"i{j}" for j in range(n_items))),
        overlapping_users=frozenset(overlapping),
    )


def _index_scorer(user, items, channel):
    """Higher item index, higher score."""
    return np.asarray(items, dtype=np.float64)


class TestRankingMetrics:

    def test_worked_example(self):
        ranked = [2, 4, 7, 9, 1]
        gt = frozenset({2, 9, 5})

        assert hr_at_k(ranked, gt, 5) == pytest.approx(2 / 3)
        expected = (1 + 1 / math.log2(5)) / (1 + 1 / math.log2(3) + 1 / math.log2(4))
        assert ndcg_at_k(ranked, gt, 5) == pytest.approx(expected)
        assert ndcg_at_k(ranked, gt, 5) == pytest.approx(0.6714, abs=1e-4)

    def test_hr_normalises_by_smaller_side(self):
        assert hr_at_k([1, 2], frozenset(range(10)), 2) == 1.0
        assert hr_at_k([1, 2, 3], frozenset({3}), 3) == 1.0

    def test_perfect_ranking(self):
        gt = frozenset({3, 1})
        assert ndcg_at_k([1, 3, 0], gt, 3) == pytest.approx(1.0)
        assert ndcg_at_k([0, 1, 3], gt, 1) == 0.0

    def test_empty_ground_truth(self):
        with pytest.raises(CcrecEvaluationError):
            hr_at_k([1], frozenset(), 1)

    def test_bad_k(self):
        with pytest.raises(CcrecValidationError):
            ndcg_at_k([1], frozenset({1}), 0)

    def test_against_brute_force(self):
        """Random rankings checked against a direct position-by-position count."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            ranked = rng.permutation(n).tolist()
            gt = frozenset(rng.choice(n, size=int(rng.integers(1, min(n, 10) + 1)), replace=False).tolist())
            k = int(rng.integers(1, n + 3))

            hits = [1.0 if item in gt else 0.0 for item in ranked[:k]]
            dcg = sum(h / math.log2(i + 2) for i, h in enumerate(hits))
            idcg = sum(1 / math.log2(i + 2) for i in range(min(k, len(gt))))

            assert hr_at_k(ranked, gt, k) == pytest.approx(sum(hits) / min(k, len(gt)), rel=0, abs=1e-12)
            assert ndcg_at_k(ranked, gt, k) == pytest.approx(dcg / idcg, rel=0, abs=1e-12)
            assert 0.0 <= ndcg_at_k(ranked, gt, k) <= 1.0 + 1e-12


class TestTopK:

    def test_ties_go_to_lower_index(self):
        scores = np.array([1.0, 3.0, 3.0, 2.0, 3.0])
        items = np.arange(5)
        np.testing.assert_array_equal(top_k(scores, items, 2), [1, 2])
        np.testing.assert_array_equal(top_k(scores, items, 4), [1, 2, 4, 3])

    def test_matches_full_sort(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            scores = rng.integers(0, 5, size=n).astype(float)
            items = np.sort(rng.choice(100, size=n, replace=False))
            k = int(rng.integers(1, n + 5))
            full = sorted(zip(-scores, items))
            expected = [int(item) for _, item in full][:k]
            assert top_k(scores, items, k).tolist() == expected

    def test_non_finite_scores(self):
        with pytest.raises(CcrecEvaluationError):
            top_k(np.array([1.0, np.nan]), np.arange(2), 1)

    def test_shape_mismatch(self):
        with pytest.raises(CcrecValidationError):
            top_k(np.zeros(3), np.arange(2), 1)


class TestProtocol:

    def test_protocol_validation(self):
        with pytest.raises(CcrecValidationError):
            EvalProtocol(k_values=(10, 5))
        with pytest.raises(CcrecValidationError):
            EvalProtocol(k_values=())
        assert EvalProtocol(k_values=[1, 3]).max_k == 3

    def test_without_purchased_excludes_train_items(self):
        bundle = _bundle(test_off={0: {1}}, train_items={(0, OFF): {5, 4}, (0, ON): {0}})
        protocol = EvalProtocol((3,), CandidateMode.WITHOUT_PURCHASED, OFF)

        assert candidates(bundle, 0, protocol).tolist() == [0, 1, 2, 3]
        assert rank_items(_index_scorer, 0, protocol, bundle) == [3, 2, 1]

    def test_with_purchased_keeps_everything(self):
        bundle = _bundle(test_off={0: {1}}, train_items={(0, OFF): {5, 4}})
        protocol = EvalProtocol((3,), CandidateMode.WITH_PURCHASED, OFF)

        assert rank_items(_index_scorer, 0, protocol, bundle) == [5, 4, 3]

    def test_empty_candidate_set(self):
        bundle = _bundle(n_items=2, test_off={0: {1}}, train_items={(0, OFF): {0, 1}})
        with pytest.raises(CcrecEvaluationError):
            rank_items(_index_scorer, 0, EvalProtocol((1,), channel=OFF), bundle)

    def test_evaluation_users_filter(self):
        bundle = _bundle(test_on={0: {1}, 2: {3}, 3: {0}}, overlapping={2})
        assert evaluation_users(bundle, ON) == [0, 2, 3]
        assert evaluation_users(bundle, ON, UserFilter.OVERLAPPING_ONLY) == [2]
        assert evaluation_users(bundle, OFF) == []


class TestEvaluate:

    def test_perfect_scorer(self):
        test_off = {0: {1, 2}, 1: {5}, 3: {0, 3, 4}}
        bundle = _bundle(test_off=test_off)

        def oracle(user, items, channel):
            return np.array([1.0 if v in test_off[user] else 0.0 for v in items])

        report = evaluate(oracle, bundle, EvalProtocol((1, 3), channel=OFF))

        for row in report.rows:
            assert row.hr == pytest.approx(1.0)
            assert row.ndcg == pytest.approx(1.0)
            assert row.n_users == 3

    def test_averages_uniformly_over_users(self):
        # User 0 hits at rank 1, user 1 misses.
        bundle = _bundle(test_off={0: {5}, 1: {0}})
        report = evaluate(_index_scorer, bundle, EvalProtocol((1,), channel=OFF))
        assert report.get(OFF, 1).hr == pytest.approx(0.5)

    def test_no_users(self):
        with pytest.raises(CcrecEvaluationError):
            evaluate(_index_scorer, _bundle(test_off={0: {1}}), EvalProtocol(channel=ON))

    def test_thread_count_does_not_change_report(self, small_bundle):
        rng = np.random.default_rng(7)
        table = rng.normal(size=(small_bundle.n_users, small_bundle.n_items))

        def scorer(user, items, channel):
            return table[user, items] + (0.1 if channel is ON else 0.0)

        single = evaluate_channels(scorer, small_bundle, (5, 10), threads=1)
        pooled = evaluate_channels(scorer, small_bundle, (5, 10), threads=4)

        assert single.to_dict() == pooled.to_dict()

    def test_scorer_errors_propagate(self):
        def broken(user, items, channel):
            raise CcrecEvaluationError("scorer exploded")

        with pytest.raises(CcrecEvaluationError, match="scorer exploded"):
            evaluate(broken, _bundle(test_off={0: {1}, 1: {2}}), EvalProtocol(channel=OFF), threads=2)

    def test_evaluate_channels_merges_rows(self):
        bundle = _bundle(test_off={0: {1}}, test_on={1: {2}})
        report = evaluate_channels(_index_scorer, bundle, (1, 2))

        assert [(r.channel, r.k) for r in report.rows] == [(OFF, 1), (OFF, 2), (ON, 1), (ON, 2)]
        assert report.channels() == [OFF, ON]


class TestAggregate:

    def _report(self, hr, ndcg):
        return MetricReport([MetricRow(OFF, 10, hr, ndcg, 5)])

    def test_mean_and_population_std(self):
        aggregate = aggregate_reports([self._report(0.2, 0.1), self._report(0.4, 0.3)], seeds=[0, 1])
        row = aggregate.get(OFF, 10)

        assert row.hr == pytest.approx(0.3)
        assert row.hr_std == pytest.approx(0.1)
        assert row.ndcg_std == pytest.approx(0.1)
        assert aggregate.seeds == [0, 1]

    def test_mismatched_rows(self):
        other = MetricReport([MetricRow(ON, 10, 0.1, 0.1, 5)])
        with pytest.raises(CcrecEvaluationError):
            aggregate_reports([self._report(0.1, 0.1), other], seeds=[0, 1])

    def test_nothing_to_aggregate(self):
        with pytest.raises(CcrecEvaluationError):
            aggregate_reports([], seeds=[])

    def test_row_serialisation(self):
        data = aggregate_reports([self._report(0.2, 0.1)], seeds=[4]).to_dict()
        row = data["rows"][0]

        assert data["protocol"] == "without_purchased"
        assert row["channel"] == "off"
        assert row["seeds"] == [4]
        assert row["mean"] == {"hr": 0.2, "ndcg": 0.1}
        assert row["std"] == {"hr": 0.0, "ndcg": 0.0}

    def test_missing_row(self):
        with pytest.raises(KeyError):
            self._report(0.1, 0.1).get(ON, 10)
