# tests/test_model.py
"""Tests for the forward pass, the losses and the analytic gradients."""

import math

import numpy as np
import pytest

from ccrec.config import ModelConfig, Variant
from ccrec.dataset import ExampleBatch, PairPartition, TrainingExample
from ccrec.exceptions import CcrecValidationError
from ccrec.model import (
    ModelScorer,
    Parameters,
    attention_scores,
    backward,
    batch_losses,
    classify_interaction,
    forward,
    init_parameters,
    parameter_shapes,
    predict_preference,
    sigmoid,
)

from .conftest import OFF, ON

N_USERS, N_ITEMS = 5, 6
GRAD_CONFIG = dict(d=4, d_prime=2, clf_hidden=4, lambda_cls=0.3, lambda_attn=0.7)
STEP = 1e-5


def _grad_examples():
    return [
        TrainingExample.positive(0, 0, PairPartition.OFF_ONLY),
        TrainingExample.positive(1, 1, PairPartition.ON_ONLY),
        TrainingExample.positive(2, 2, PairPartition.BOTH),
        TrainingExample.positive(3, 3, PairPartition.OFF_ONLY),
        TrainingExample.positive(0, 4, PairPartition.BOTH),
        TrainingExample.negative(1, 5),
        TrainingExample.negative(4, 0),
        TrainingExample.negative(2, 3),
    ]


def _grad_batch():
    return ExampleBatch.from_examples(_grad_examples())


def _kink_free_params(config, batch):
    """Random parameters (biases included) whose ReLU inputs all sit clear of zero."""
    for seed in range(200):
        params = init_parameters(N_USERS, N_ITEMS, config, seed=seed)
        rng = np.random.default_rng(seed)
        for name, array in params.items():
            if name[0] in "bc":
                array[...] = rng.normal(0.0, 0.1, size=array.shape)
        _, cache = batch_losses(batch, params, config)
        if all(np.all(np.abs(z) > 1e-3) for z in cache.relu_inputs()):
            return params
    pytest.fail("no kink-free parameter draw found")


def _numeric_gradient(batch, params, config):
    numeric = params.zeros_like()
    for name, array in params.items():
        target = getattr(numeric, name)
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + STEP
            up = batch_losses(batch, params, config)[0].total
            array[index] = original - STEP
            down = batch_losses(batch, params, config)[0].total
            array[index] = original
            target[index] = (up - down) / (2 * STEP)
    return numeric


def _flat(params):
    return np.concatenate([array.ravel() for _, array in params.items()])


class TestGradients:
    """Analytic gradients against central finite differences."""

    @pytest.mark.parametrize("variant", list(Variant))
    def test_matches_finite_differences(self, variant):
        config = ModelConfig(variant=variant, **GRAD_CONFIG)
        batch = _grad_batch()
        params = _kink_free_params(config, batch)

        _, cache = batch_losses(batch, params, config)
        analytic = backward(batch, params, config, cache)
        numeric = _numeric_gradient(batch, params, config)

        for name, array in analytic.items():
            expected = getattr(numeric, name)
            scale = max(np.linalg.norm(array) + np.linalg.norm(expected), 1e-5)
            assert np.linalg.norm(array - expected) <= 1e-4 * scale, name

        ga, gn = _flat(analytic), _flat(numeric)
        assert np.linalg.norm(ga - gn) <= 1e-4 * max(np.linalg.norm(ga) + np.linalg.norm(gn), 1e-5)

        worst = np.max(np.abs(ga - gn) / np.maximum(np.abs(ga) + np.abs(gn), 1e-4))
        assert worst < 1e-4

    @pytest.mark.parametrize(
        "variant, unused",
        [
            (Variant.NO_CLASSIFICATION, ("C1", "c1", "C2", "c2", "C3", "c3")),
            (Variant.NO_ATTENTION, ("WQ_off", "bQ_off", "WK_off", "bK_off", "WQ_on", "bQ_on", "WK_on", "bK_on")),
            (Variant.NO_SEPARATION, ("w_sh", "b_sh")),
        ],
    )
    def test_unused_parameters_get_zero_gradient(self, variant, unused):
        config = ModelConfig(variant=variant, **GRAD_CONFIG)
        batch = _grad_batch()
        params = init_parameters(N_USERS, N_ITEMS, config, seed=1)

        _, cache = batch_losses(batch, params, config)
        grads = backward(batch, params, config, cache)

        for name in unused:
            assert np.all(getattr(grads, name) == 0.0), name

    def test_small_step_decreases_loss(self):
        config = ModelConfig(**GRAD_CONFIG)
        batch = _grad_batch()
        params = init_parameters(N_USERS, N_ITEMS, config, seed=3)

        before, cache = batch_losses(batch, params, config)
        grads = backward(batch, params, config, cache)
        for name, array in params.items():
            array -= 1e-3 * getattr(grads, name)
        after, _ = batch_losses(batch, params, config)

        assert after.total < before.total

    @pytest.mark.parametrize("partition", [PairPartition.OFF_ONLY, PairPartition.BOTH])
    def test_step_pulls_attention_towards_target(self, partition):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4, lambda_cls=0.3, lambda_attn=1000.0)
        batch = ExampleBatch.from_examples([TrainingExample.positive(2, 1, partition)])
        params = init_parameters(N_USERS, N_ITEMS, config, seed=3)

        before, cache = batch_losses(batch, params, config)
        grads = backward(batch, params, config, cache)
        for name, array in params.items():
            array -= 1e-4 * getattr(grads, name)
        after, _ = batch_losses(batch, params, config)

        assert after.l_attn < before.l_attn

    def test_untouched_rows_get_no_gradient(self):
        config = ModelConfig(**GRAD_CONFIG)
        batch = ExampleBatch.from_examples([TrainingExample.positive(1, 2, PairPartition.ON_ONLY)])
        params = init_parameters(N_USERS, N_ITEMS, config, seed=0)

        _, cache = batch_losses(batch, params, config)
        grads = backward(batch, params, config, cache)

        assert np.all(grads.X_sh[[0, 2, 3, 4]] == 0.0)
        assert np.all(grads.Y[[0, 1, 3, 4, 5]] == 0.0)


class TestLosses:
    """Loss values at hand-computable points."""

    def _zero_params(self, config):
        params = init_parameters(N_USERS, N_ITEMS, config, seed=0)
        return params.zeros_like()

    def test_zero_parameters(self):
        config = ModelConfig(**GRAD_CONFIG)
        batch = _grad_batch()

        losses, _ = batch_losses(batch, self._zero_params(config), config)

        assert losses.l_off == pytest.approx(math.log(2))
        assert losses.l_on == pytest.approx(math.log(2))
        assert losses.l_cls == pytest.approx(2 * math.log(2))
        assert losses.l_attn == pytest.approx(1.0)
        assert losses.total == pytest.approx(
            losses.l_off + losses.l_on + 0.3 * losses.l_cls + 0.7 * losses.l_attn
        )

    def test_dropped_terms_report_zero(self):
        config = ModelConfig(variant=Variant.NO_ATTENTION, **GRAD_CONFIG)
        losses, _ = batch_losses(_grad_batch(), self._zero_params(config), config)
        assert losses.l_attn == 0.0
        assert losses.total == pytest.approx(2 * math.log(2) + 0.3 * 2 * math.log(2))

    def test_head_bias_gradient(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4, lambda_cls=0.0, lambda_attn=0.0)
        batch = ExampleBatch.from_examples([TrainingExample.positive(0, 0, PairPartition.OFF_ONLY)])
        params = self._zero_params(config)

        _, cache = batch_losses(batch, params, config)
        grads = backward(batch, params, config, cache)

        assert grads.b_off[0] == pytest.approx(-0.5)
        assert grads.b_on[0] == pytest.approx(0.5)

    def test_no_positives_has_no_attention_loss(self):
        config = ModelConfig(**GRAD_CONFIG)
        batch = ExampleBatch.from_examples([TrainingExample.negative(0, 1), TrainingExample.negative(2, 3)])
        losses, _ = batch_losses(batch, init_parameters(N_USERS, N_ITEMS, config, seed=0), config)
        assert losses.l_attn == 0.0

    def test_empty_batch(self):
        config = ModelConfig(**GRAD_CONFIG)
        with pytest.raises(CcrecValidationError):
            batch_losses([], init_parameters(N_USERS, N_ITEMS, config, seed=0), config)

    def test_batch_order_does_not_change_losses(self):
        config = ModelConfig(**GRAD_CONFIG)
        params = init_parameters(N_USERS, N_ITEMS, config, seed=2)
        examples = _grad_examples()

        forward_order, _ = batch_losses(examples, params, config)
        for order in (examples[::-1], [examples[i] for i in np.random.default_rng(0).permutation(len(examples))]):
            shuffled, _ = batch_losses(order, params, config)
            for name, value in forward_order.to_dict().items():
                assert shuffled.to_dict()[name] == pytest.approx(value, rel=1e-12, abs=1e-15), name

    def test_to_dict(self):
        config = ModelConfig(**GRAD_CONFIG)
        losses, _ = batch_losses(_grad_batch(), self._zero_params(config), config)
        assert set(losses.to_dict()) == {"l_off", "l_on", "l_cls", "l_attn", "total"}


class TestAttention:

    def test_sigmoid_values(self):
        assert sigmoid(math.log(3)) == pytest.approx(0.75)
        assert sigmoid(0.0) == 0.5
        assert np.all(np.isfinite(sigmoid(np.array([-1e4, 1e4]))))

    def test_weights_from_constructed_parameters(self):
        config = ModelConfig(d=1, d_prime=1, clf_hidden=1)
        params = init_parameters(1, 1, config, seed=0).zeros_like()
        params.WQ_off[...] = 1.0
        params.WK_off[...] = 1.0
        params.Y[...] = 1.0
        params.X_sh[...] = math.log(3)

        a_sh, a_sp = attention_scores(0, 0, OFF, params, config)

        assert a_sh == pytest.approx(0.75)
        assert a_sp == pytest.approx(0.25)

    def test_weights_sum_to_one(self):
        config = ModelConfig(d=8, d_prime=4, clf_hidden=4)
        params = init_parameters(20, 30, config, seed=5)
        rng = np.random.default_rng(0)
        users = rng.integers(0, 20, size=10_000)
        items = rng.integers(0, 30, size=10_000)

        cache = forward(params, config, users, items, with_classifier=False)

        for channel in (OFF, ON):
            cc = cache.channels[channel]
            np.testing.assert_allclose(cc.a_sh + cc.a_sp, 1.0, atol=1e-12)
            assert np.all((cc.a_sh >= 0) & (cc.a_sh <= 1))

    def test_no_attention_is_uniform(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4, variant=Variant.NO_ATTENTION)
        params = init_parameters(3, 3, config, seed=0)
        assert attention_scores(1, 2, ON, params, config) == (0.5, 0.5)


class TestPrediction:

    def test_classifier_bias(self):
        config = ModelConfig(d=2, d_prime=2, clf_hidden=3)
        params = init_parameters(2, 2, config, seed=0)
        for name in ("C1", "c1", "C2", "c2", "C3"):
            getattr(params, name)[...] = 0.0
        params.c3[...] = [math.log(3), -math.log(3)]

        o_off, o_on = classify_interaction(1, 1, params)

        assert o_off == pytest.approx(0.75)
        assert o_on == pytest.approx(0.25)

    def test_predict_preference_matches_forward(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4)
        params = init_parameters(4, 5, config, seed=2)
        cache = forward(params, config, np.array([3]), np.array([1]))

        assert predict_preference(3, 1, ON, params, config) == pytest.approx(float(cache.channels[ON].p[0]))

    def test_predict_preference_uses_cache(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4)
        params = init_parameters(4, 5, config, seed=2)
        cache = forward(params, config, np.array([0, 3]), np.array([4, 1]))
        cache.channels[OFF].p[1] = 0.123

        assert predict_preference(3, 1, OFF, params, config, cache=cache) == 0.123

    @pytest.mark.parametrize("variant", list(Variant))
    def test_scorer_matches_forward_logits(self, variant):
        config = ModelConfig(d=6, d_prime=3, clf_hidden=4, variant=variant)
        params = init_parameters(7, 9, config, seed=4)
        scorer = ModelScorer(params, config)
        items = np.arange(9)

        for user in range(7):
            cache = forward(params, config, np.full(9, user), items, with_classifier=False)
            for channel in (OFF, ON):
                np.testing.assert_allclose(scorer(user, items, channel), cache.channels[channel].z, atol=1e-12)

    @pytest.mark.parametrize("user, item", [(4, 0), (0, 5), (-1, 0)])
    def test_out_of_range_ids(self, user, item):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=4)
        params = init_parameters(4, 5, config, seed=0)
        with pytest.raises(CcrecValidationError):
            predict_preference(user, item, OFF, params, config)


class TestParameters:

    def test_shapes(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=3)
        params = init_parameters(N_USERS, N_ITEMS, config, seed=0)

        for name, shape in parameter_shapes(N_USERS, N_ITEMS, config).items():
            assert getattr(params, name).shape == shape
        assert params.C1.shape == (8, 3)
        assert params.C3.shape == (3, 2)

    def test_biases_start_at_zero(self):
        params = init_parameters(N_USERS, N_ITEMS, ModelConfig(d=4, d_prime=2, clf_hidden=3), seed=0)
        for name, array in params.items():
            if name[0] in "bc":
                assert np.all(array == 0.0), name

    def test_embedding_bounds(self):
        params = init_parameters(50, 50, ModelConfig(d=16, d_prime=2, clf_hidden=3), seed=0)
        assert np.all(np.abs(params.Y) < 0.25)
        assert np.all(np.abs(params.X_sh) < 0.25)

    def test_same_seed_same_parameters(self):
        config = ModelConfig(d=4, d_prime=2, clf_hidden=3)
        a = init_parameters(N_USERS, N_ITEMS, config, seed=9)
        b = init_parameters(N_USERS, N_ITEMS, config, seed=9)
        np.testing.assert_array_equal(_flat(a), _flat(b))

    def test_from_dict_missing_tensor(self):
        params = init_parameters(N_USERS, N_ITEMS, ModelConfig(d=4, d_prime=2, clf_hidden=3), seed=0)
        arrays = params.as_dict()
        del arrays["C2"]
        with pytest.raises(CcrecValidationError):
            Parameters.from_dict(arrays)

    def test_copy_is_independent(self):
        params = init_parameters(N_USERS, N_ITEMS, ModelConfig(d=4, d_prime=2, clf_hidden=3), seed=0)
        clone = params.copy()
        clone.Y[0, 0] += 1.0
        assert clone.Y[0, 0] != params.Y[0, 0]
