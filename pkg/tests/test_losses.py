import numpy as np
import pytest

from earlydet import losses, network
from earlydet.errors import InputError

from conftest import head_bias_params


def small_weighted_setup(head_biases):
    layout = network.small_layout(2, (3,), softmax_units=2)
    params = head_bias_params(layout, head_biases)
    return layout, params


class TestWeightedLoss:
    def test_hand_value_foreground_0p8(self):
        # single foreground example scored 0.8: total = -2 ln(0.8)
        _, params = small_weighted_setup([0.0, np.log(4.0)])
        x = np.array([[1.0, 0.0]])
        y = np.array([[0.0, 1.0]])
        report = losses.weighted_loss(
            x, y, np.array([True]), params, losses.WeightedLossConfig(2.0, 1.0, 0.0)
        )
        assert abs(report.total - 0.44629) < 1e-5
        assert abs(report.total - (-2.0 * np.log(0.8))) < 1e-12

    def test_perfect_predictions_zero_loss(self):
        _, params = small_weighted_setup([-40.0, 40.0])
        x = np.zeros((3, 2))
        y = np.tile([0.0, 1.0], (3, 1))
        report = losses.weighted_loss(
            x, y, np.ones(3, dtype=bool), params, losses.WeightedLossConfig(2.0, 1.0, 0.0)
        )
        assert abs(report.total) < 1e-12

    def test_default_weights_penalize_fg_twice(self):
        cfg = losses.WeightedLossConfig()
        assert (cfg.fg_weight, cfg.bg_weight, cfg.reg_weight) == (2.0, 1.0, 1e-3)

    def test_decomposition(self, rng):
        params = network.init_params(network.small_layout(4, (5, 4), softmax_units=2), 1)
        cfg = losses.WeightedLossConfig(1.7, 0.9, 2e-3)
        x = rng.standard_normal((8, 4))
        labels = rng.integers(0, 2, 8)
        report = losses.weighted_loss(x, np.eye(2)[labels], labels == 1, params, cfg)
        recomposed = (
            cfg.fg_weight * report.components["fg"]
            + cfg.bg_weight * report.components["bg"]
            + report.components["regularizer"]
        )
        assert abs(report.total - recomposed) <= 1e-10

    def test_monotone_in_fg_weight(self, rng):
        params = network.init_params(network.small_layout(4, (5,), softmax_units=2), 2)
        x = rng.standard_normal((10, 4))
        labels = rng.integers(0, 2, 10)
        y, fg = np.eye(2)[labels], labels == 1
        totals = [
            losses.weighted_loss(x, y, fg, params, losses.WeightedLossConfig(w, 1.0, 0.0)).total
            for w in (1.0, 2.0, 4.0, 8.0)
        ]
        assert all(b >= a for a, b in zip(totals, totals[1:]))

    def test_components_nonnegative(self, rng):
        for seed in range(5):
            params = network.init_params(network.small_layout(3, (4,), softmax_units=2), seed)
            x = rng.standard_normal((6, 3))
            labels = rng.integers(0, 2, 6)
            report = losses.weighted_loss(
                x, np.eye(2)[labels], labels == 1, params, losses.WeightedLossConfig()
            )
            assert all(v >= 0 for v in report.components.values())
            assert report.total >= 0

    def test_log_guard_never_nan(self):
        # saturated head drives the losing class probability to exactly 0
        _, params = small_weighted_setup([800.0, -800.0])
        x = np.array([[1.0, 1.0]])
        y = np.array([[0.0, 1.0]])
        report = losses.weighted_loss(
            x, y, np.array([True]), params, losses.WeightedLossConfig()
        )
        assert np.isfinite(report.total)
        assert all(np.all(np.isfinite(g.weights)) for g in report.gradients)

    def test_empty_batch_rejected(self):
        _, params = small_weighted_setup([0.0, 0.0])
        with pytest.raises(InputError):
            losses.weighted_loss(
                np.empty((0, 2)), np.empty((0, 2)), np.empty(0, dtype=bool),
                params, losses.WeightedLossConfig(),
            )


class TestIoUTerms:
    def test_worked_example(self):
        i, u = losses.iou_terms([0.2, 0.4], [0.1, 0.5])
        assert abs(i - 0.5) < 1e-12
        assert abs(u - 0.7) < 1e-12

    def test_identity_case(self):
        i, u = losses.iou_terms([0.3, 0.6], [0.3, 0.6])
        assert i == u

    def test_zero_overlap(self):
        i, u = losses.iou_terms([0.0, 0.0], [0.3, 0.3])
        assert i == 0.0
        assert abs(u - 0.6) < 1e-12

    def test_negative_rejected(self):
        with pytest.raises(InputError):
            losses.iou_terms([-0.1, 0.2], [0.1, 0.2])


class TestMultitaskLoss:
    def multitask_params(self, yhat, dhat):
        layout = network.small_layout(2, (3,), softmax_units=len(yhat), sigmoid_units=2)
        logits = list(np.log(yhat)) + [np.log(d / (1.0 - d)) for d in dhat]
        return head_bias_params(layout, logits)

    def test_worked_example(self):
        params = self.multitask_params([0.6, 0.4], [0.1, 0.5])
        x = np.array([[0.0, 0.0]])
        y = np.array([[1.0, 0.0]])
        d = np.array([[0.2, 0.4]])
        report = losses.multitask_loss(
            x, y, d, params, losses.MultitaskLossConfig(1.0, 2.0, 1.0, 0.0)
        )
        assert abs(report.components["class"] - 0.51083) < 1e-5
        assert abs(report.components["dist"] - 0.02) < 1e-5
        assert abs(report.components["conf"] - 20.0 / 49.0) < 1e-5
        assert abs(report.total - 0.95899) < 1e-5

    def test_iou_ratio_in_worked_example(self):
        i, u = losses.iou_terms([0.2, 0.4], [0.1, 0.5])
        assert abs(i / u - 5.0 / 7.0) < 1e-12

    def test_perfect_prediction_zero_components(self):
        params = self.multitask_params([1.0 - 1e-30, 1e-30], [0.5, 0.5])
        # saturate the class head properly
        params.layers[-1].biases[:2] = [40.0, -40.0]
        x = np.zeros((1, 2))
        y = np.array([[1.0, 0.0]])
        d = np.array([[0.5, 0.5]])
        report = losses.multitask_loss(
            x, y, d, params, losses.MultitaskLossConfig(1.0, 2.0, 1.0, 0.0)
        )
        assert report.components["class"] < 1e-12
        assert report.components["dist"] < 1e-12
        assert report.components["conf"] < 1e-12

    def test_default_weights(self):
        cfg = losses.MultitaskLossConfig()
        assert (cfg.class_weight, cfg.dist_weight, cfg.conf_weight) == (1.0, 2.0, 1.0)
        assert cfg.reg_weight == 1e-3

    def test_decomposition(self, rng):
        params = network.init_params(
            network.small_layout(4, (5, 4), softmax_units=3, sigmoid_units=2), 3
        )
        cfg = losses.MultitaskLossConfig(0.7, 2.2, 1.4, 1e-3)
        x = rng.standard_normal((6, 4))
        y = np.eye(3)[rng.integers(0, 3, 6)]
        d = rng.uniform(0, 1, (6, 2))
        report = losses.multitask_loss(x, y, d, params, cfg)
        recomposed = (
            cfg.class_weight * report.components["class"]
            + cfg.dist_weight * report.components["dist"]
            + cfg.conf_weight * report.components["conf"]
            + report.components["regularizer"]
        )
        assert abs(report.total - recomposed) <= 1e-10

    def test_components_nonnegative(self, rng):
        for seed in range(5):
            params = network.init_params(
                network.small_layout(3, (4,), softmax_units=3, sigmoid_units=2), seed
            )
            x = rng.standard_normal((5, 3))
            y = np.eye(3)[rng.integers(0, 3, 5)]
            d = rng.uniform(0, 1, (5, 2))
            report = losses.multitask_loss(x, y, d, params, losses.MultitaskLossConfig())
            assert all(v >= 0 for v in report.components.values())

    def test_negative_distance_rejected(self, rng):
        params = network.init_params(
            network.small_layout(3, (4,), softmax_units=2, sigmoid_units=2), 0
        )
        with pytest.raises(InputError):
            losses.multitask_loss(
                rng.standard_normal((1, 3)), np.array([[1.0, 0.0]]),
                np.array([[-0.1, 0.2]]), params, losses.MultitaskLossConfig(),
            )
