# tests/test_acceptance.py
"""Directional checks on desk-scale synthetic data. Run with ``pytest -m slow``."""

from dataclasses import replace

import numpy as np
import pytest

from ccrec.baselines import BprRegime, probe_experiment, regime_scorer, run_bpr_regime, train_channel_models
from ccrec.config import BprConfig, GenConfig, ModelConfig, TrainConfig, Variant
from ccrec.dataset import PairPartition, sample_negatives, split
from ccrec.metrics import CandidateMode, EvalProtocol, aggregate_reports, rank_items
from ccrec.model import forward
from ccrec.persistence import dumps
from ccrec.synthgen import generate
from ccrec.training import evaluate_result, train

from .conftest import OFF, ON

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
DIVERGENT = dict(n_users=300, n_items=200, gamma=3.0, dup_prob=0.2, interactions_per_user_channel=(15, 30))
BPR = BprConfig(d=32, epochs=30, learning_rate=0.05)
MODEL = ModelConfig(d=32, d_prime=32, clf_hidden=32)
TRAINING = TrainConfig(epochs=40, patience=40)


@pytest.fixture(scope="module")
def divergent_comparison():
    """Mean test reports per model over ``SEEDS`` on strongly divergent channels."""
    collected = {name: [] for name in ("full", "no_attention", "bpr", "bpr_integration")}
    for seed in SEEDS:
        store, _ = generate(GenConfig(seed=seed, **DIVERGENT))
        plain = split(store, seed)
        bundle = sample_negatives(plain, store, 10, seed)
        train_cfg = replace(TRAINING, seed=seed)
        for name, variant in (("full", Variant.FULL), ("no_attention", Variant.NO_ATTENTION)):
            result = train(bundle, replace(MODEL, variant=variant), train_cfg)
            collected[name].append(evaluate_result(result, bundle))
        collected["bpr"].append(run_bpr_regime(plain, BprRegime.SELF_MATCH, bpr_cfg=BPR, seed=seed))
        collected["bpr_integration"].append(
            run_bpr_regime(plain, BprRegime.INTEGRATION, bpr_cfg=BPR, seed=seed)
        )
    return {name: aggregate_reports(reports, SEEDS) for name, reports in collected.items()}


@pytest.mark.parametrize("seed", SEEDS)
def test_self_match_beats_cross_match(seed):
    store, _ = generate(GenConfig(seed=seed, **DIVERGENT))
    bundle = split(store, seed)
    models = train_channel_models(bundle, BPR, seed)

    def regime_report(regime, mode=CandidateMode.WITHOUT_PURCHASED):
        return probe_experiment(store, bundle, regime, mode, d=BPR.d, seed=seed, bpr_cfg=BPR, models=models)

    self_match = regime_report(BprRegime.SELF_MATCH)
    cross_match = regime_report(BprRegime.CROSS_MATCH)
    for channel in (OFF, ON):
        assert self_match.get(channel, 5).ndcg > cross_match.get(channel, 5).ndcg

    with_purchased = regime_report(BprRegime.CROSS_MATCH, CandidateMode.WITH_PURCHASED)
    mean_with = np.mean([with_purchased.get(c, 5).hr for c in (OFF, ON)])
    mean_without = np.mean([cross_match.get(c, 5).hr for c in (OFF, ON)])
    assert mean_with <= mean_without


def test_model_beats_bpr_baselines(divergent_comparison):
    full = divergent_comparison["full"]
    bpr = divergent_comparison["bpr"]
    merged = divergent_comparison["bpr_integration"]

    for channel in (OFF, ON):
        for k in (5, 10):
            assert full.get(channel, k).ndcg > merged.get(channel, k).ndcg, (channel, k)
    assert any(full.get(c, k).ndcg > bpr.get(c, k).ndcg for c in (OFF, ON) for k in (5, 10))


def test_attention_beats_fixed_mixing(divergent_comparison):
    full = divergent_comparison["full"]
    fixed = divergent_comparison["no_attention"]

    for channel in (OFF, ON):
        assert full.get(channel, 5).ndcg > fixed.get(channel, 5).ndcg, channel


class TestIdenticalChannels:
    """With gamma = 0 both channels share one preference signal."""

    CONFIG = dict(DIVERGENT, gamma=0.0)

    def test_merged_bpr_matches_per_channel_bpr(self):
        per_channel, merged = [], []
        for seed in SEEDS:
            store, _ = generate(GenConfig(seed=seed, **self.CONFIG))
            bundle = split(store, seed)
            per_channel.append(run_bpr_regime(bundle, BprRegime.SELF_MATCH, bpr_cfg=BPR, seed=seed))
            merged.append(run_bpr_regime(bundle, BprRegime.INTEGRATION, bpr_cfg=BPR, seed=seed))
        per_channel = aggregate_reports(per_channel, SEEDS)
        merged = aggregate_reports(merged, SEEDS)

        for channel in (OFF, ON):
            a, b = per_channel.get(channel, 10).ndcg, merged.get(channel, 10).ndcg
            assert abs(a - b) <= 0.25 * max(a, b), channel

    def test_cross_match_ranks_source_purchases_first(self):
        """
        Cross-match stays behind self-match even without divergence: the
        source model ranks the user's own source-channel train purchases
        highest, and those pairs are never in the target channel's test set.
        """
        seed = 0
        store, _ = generate(GenConfig(seed=seed, **self.CONFIG))
        bundle = split(store, seed)
        models = train_channel_models(bundle, BPR, seed)

        def regime_report(regime):
            return probe_experiment(store, bundle, regime, d=BPR.d, seed=seed, bpr_cfg=BPR, models=models)

        self_match = regime_report(BprRegime.SELF_MATCH)
        cross_match = regime_report(BprRegime.CROSS_MATCH)
        for channel in (OFF, ON):
            assert self_match.get(channel, 10).ndcg > cross_match.get(channel, 10).ndcg, channel

        scorer = regime_scorer(BprRegime.CROSS_MATCH, models)
        for target in (OFF, ON):
            protocol = EvalProtocol(k_values=(10,), channel=target)
            test_truth = bundle.ground_truth("test", target)
            shares = []
            for user in sorted(store.overlapping_users & set(test_truth)):
                source_train = bundle.train_items(user, target.other)
                assert not source_train & test_truth[user]
                ranked = rank_items(scorer, user, protocol, bundle)
                shares.append(len(source_train.intersection(ranked)) / len(ranked))
            assert np.mean(shares) > 0.25, target


def test_attention_loss_pulls_specific_weight_up():
    store, _ = generate(GenConfig(seed=0, **DIVERGENT))
    bundle = sample_negatives(split(store, 0), store, 4, 0)
    model_cfg = ModelConfig(d=32, d_prime=32, clf_hidden=32, lambda_attn=0.5)
    result = train(bundle, model_cfg, TrainConfig(epochs=20, batch_size=512, learning_rate=5e-3, patience=20))

    positives = bundle.positives()
    users = np.array([e.user for e in positives])
    items = np.array([e.item for e in positives])
    exclusive = np.array([e.specificity == 1 for e in positives])
    cache = forward(result.best_params, model_cfg, users, items, with_classifier=False)
    a_sp = np.mean([cache.channels[c].a_sp for c in (OFF, ON)], axis=0)

    assert np.any(~exclusive)
    assert a_sp[exclusive].mean() > a_sp[~exclusive].mean()
    assert store.partition_counts()[PairPartition.BOTH] > 0


def test_pipeline_is_deterministic():
    def run():
        store, _ = generate(GenConfig(n_users=200, n_items=120, interactions_per_user_channel=(10, 20), seed=4))
        bundle = sample_negatives(split(store, 4), store, 10, 4)
        model_cfg = ModelConfig(d=16, d_prime=16, clf_hidden=16)
        result = train(bundle, model_cfg, TrainConfig(epochs=30, batch_size=512, patience=30, seed=4))
        return dumps(evaluate_result(result, bundle).to_dict())

    assert run() == run()
