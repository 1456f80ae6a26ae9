"""Cost accounting and top-1 evaluation."""

import numpy as np
import pytest

from linprune import (
    Activation,
    BatchNorm,
    CalibrationBatch,
    Conv2D,
    Dense,
    Flatten,
    Model,
    Pool,
    ValidationError,
    count_costs,
    evaluate_top1,
    reduction_ratios,
)
from fixtures import random_batch, small_classifier


class TestCountCosts:
    def test_dense_macs_and_params(self):
        m = Model((100, 1, 1), [Flatten(), Dense(np.zeros((10, 100)), np.zeros(10))])
        costs = count_costs(m)
        assert costs.total_macs == 1000
        assert costs.total_params == 1010

    def test_conv_macs_hand_computed(self):
        m = Model((3, 32, 32), [
            Conv2D(np.zeros((8, 3, 3, 3)), padding=1),
            Flatten(),
            Dense(np.zeros((2, 8 * 32 * 32))),
        ])
        costs = count_costs(m)
        assert costs.layers[0].macs == 8 * 3 * 9 * 1024  # 221,184

    def test_empty_model_zero(self):
        costs = count_costs(Model((3, 4, 4), []))
        assert costs.total_macs == 0
        assert costs.total_params == 0

    def test_bn_stored_params_no_macs(self):
        c = 7
        m = Model((c, 4, 4), [
            BatchNorm(np.ones(c), np.zeros(c), np.zeros(c), np.ones(c)),
            Flatten(),
            Dense(np.zeros((2, c * 16))),
        ])
        costs = count_costs(m)
        assert costs.layers[0].macs == 0
        assert costs.layers[0].params == 4 * c

    def test_pool_activation_zero_cost(self):
        m = Model((2, 8, 8), [
            Activation(),
            Pool("max", window=2, stride=2),
            Flatten(),
            Dense(np.zeros((2, 2 * 16))),
        ])
        costs = count_costs(m)
        assert costs.layers[0].macs == costs.layers[1].macs == 0
        assert costs.layers[0].params == costs.layers[1].params == 0

    def test_additive_over_layers(self):
        rng = np.random.default_rng(0)
        m = small_classifier(rng, with_bn=True, with_pool=True)
        costs = count_costs(m)
        assert costs.total_macs == sum(lc.macs for lc in costs.layers)
        assert costs.total_params == sum(lc.params for lc in costs.layers)

    def test_flops_convention_flag(self):
        rng = np.random.default_rng(1)
        costs = count_costs(small_classifier(rng))
        assert costs.flops_per_mac == 2
        assert costs.total_flops == 2 * costs.total_macs


class TestReductionRatios:
    def _model_with_channels(self, c):
        return Model((3, 8, 8), [
            Conv2D(np.zeros((c, 3, 3, 3)), np.zeros(c), padding=1),
            Flatten(),
            Dense(np.zeros((2, c * 64))),
        ])

    def test_no_change_is_zero(self):
        costs = count_costs(self._model_with_channels(8))
        assert reduction_ratios(costs, costs) == (0.0, 0.0)

    def test_half_costs(self):
        rng = np.random.default_rng(2)
        m = small_classifier(rng)
        before = count_costs(m)
        after = count_costs(m)
        after.total_macs = before.total_macs // 2
        after.total_params = before.total_params // 2
        flops, params = reduction_ratios(before, after)
        assert flops == 50.0
        assert params == 50.0

    def test_channel_prune_closed_form(self):
        before = count_costs(self._model_with_channels(64))
        after = count_costs(self._model_with_channels(48))
        _, params = reduction_ratios(before, after)
        # conv params scale with C, dense params with C*64
        p = lambda c: c * 3 * 9 + c + 2 * c * 64
        assert params == round(100.0 * (1 - p(48) / p(64)), 2)

    def test_zero_baseline_rejected(self):
        empty = count_costs(Model((3, 4, 4), []))
        with pytest.raises(ValidationError):
            reduction_ratios(empty, empty)


class TestEvaluateTop1:
    def _constant_logit_model(self, classes=3, features=4):
        # all-zero dense => identical logits; argmax tie-break picks class 0
        return Model((features, 1, 1), [Flatten(), Dense(np.zeros((classes, features)))])

    def test_tie_break_lowest_class(self):
        m = self._constant_logit_model()
        batch = CalibrationBatch(np.ones((5, 4, 1, 1), dtype=np.float32),
                                 labels=np.zeros(5, dtype=np.int64))
        assert evaluate_top1(m, batch) == 1.0
        batch1 = CalibrationBatch(np.ones((5, 4, 1, 1), dtype=np.float32),
                                  labels=np.ones(5, dtype=np.int64))
        assert evaluate_top1(m, batch1) == 0.0

    def test_perfect_one_hot(self):
        # dense picks feature i as logit i: images one-hot on the label
        classes = 4
        m = Model((classes, 1, 1), [Flatten(), Dense(np.eye(classes, dtype=np.float32))])
        images = np.zeros((classes, classes, 1, 1), dtype=np.float32)
        labels = np.arange(classes)
        for i in range(classes):
            images[i, i] = 1.0
        batch = CalibrationBatch(images, labels=labels)
        assert evaluate_top1(m, batch) == 1.0

    def test_random_logits_near_chance(self):
        rng = np.random.default_rng(3)
        classes, n = 10, 10_000
        m = Model((8, 1, 1), [Flatten(),
                              Dense(rng.standard_normal((classes, 8)).astype(np.float32))])
        batch = CalibrationBatch(
            rng.standard_normal((n, 8, 1, 1)).astype(np.float32),
            labels=rng.integers(0, classes, size=n),
        )
        acc = evaluate_top1(m, batch)
        assert 0.07 <= acc <= 0.13  # 3 sigma around Bernoulli(0.1)

    def test_missing_labels_rejected(self):
        rng = np.random.default_rng(4)
        m = small_classifier(rng)
        batch = random_batch(rng, m, size=3, labelled=False)
        with pytest.raises(ValidationError, match="label"):
            evaluate_top1(m, batch)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        m = small_classifier(rng)
        batch = random_batch(rng, m, size=20, labelled=True)
        assert evaluate_top1(m, batch) == evaluate_top1(m, batch)
