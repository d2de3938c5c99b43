"""Synthetic task: data generation, gradients, training, evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.errors import ConfigError
from fedsim.task import (
    LocalDataset,
    SyntheticTask,
    TrainConfig,
    default_task,
    dataset_loss,
    evaluate,
    generate_dataset,
    local_train,
    loss_and_gradient,
    param_length,
    predict,
    unpack_params,
    zero_params,
)


def reference_loss(w, x, y, w_anchor, mu):
    """Independent loss: explicit per-sample log-softmax plus proximal term."""
    n_classes = w.size // (x.shape[1] + 1)
    W = w[: x.shape[1] * n_classes].reshape(n_classes, x.shape[1])
    b = w[x.shape[1] * n_classes:]
    total = 0.0
    for xi, yi in zip(x, y):
        scores = W @ xi + b
        scores = scores - scores.max()
        log_probs = scores - np.log(np.exp(scores).sum())
        total -= log_probs[yi]
    diff = w - w_anchor
    return total / len(y) + 0.5 * mu * float(diff @ diff)


class TestParams:
    def test_length_and_unpack(self):
        assert param_length(16, 8) == 16 * 8 + 8
        w = np.arange(param_length(3, 2), dtype=float)
        W, b = unpack_params(w, 3, 2)
        assert W.shape == (2, 3)
        assert np.array_equal(W[0], [0, 1, 2])
        assert np.array_equal(b, [6, 7])

    def test_unpack_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            unpack_params(np.zeros(5), 3, 2)

    def test_zero_params(self):
        assert np.all(zero_params(16, 8) == 0)


class TestTaskConstruction:
    def test_default_task_deterministic(self):
        a = default_task()
        b = default_task()
        assert np.array_equal(a.class_means, b.class_means)

    def test_scenario_shifts_have_reference(self):
        task = default_task(scenario_tags=("day", "night"))
        assert set(task.scenario_shifts) == {"reference", "day", "night"}
        assert np.all(task.scenario_shifts["reference"] == 0)
        assert np.any(task.scenario_shifts["day"] != 0)
        assert not np.array_equal(
            task.scenario_shifts["day"], task.scenario_shifts["night"]
        )

    def test_shift_scale_is_multiplicative(self):
        small = default_task(scenario_tags=("day",), shift_scale=1.0)
        big = default_task(scenario_tags=("day",), shift_scale=3.0)
        assert np.allclose(3.0 * small.scenario_shifts["day"], big.scenario_shifts["day"])

    def test_rejects_nonzero_reference_shift(self):
        with pytest.raises(ConfigError):
            SyntheticTask(
                n_classes=2, n_features=2, class_means=np.zeros((2, 2)),
                noise_sigma=1.0, scenario_shifts={"reference": np.ones(2)},
            )

    def test_rejects_bad_means_shape(self):
        with pytest.raises(ConfigError):
            SyntheticTask(
                n_classes=2, n_features=3, class_means=np.zeros((2, 2)), noise_sigma=1.0
            )

    def test_with_noise_scale(self):
        task = default_task(noise_sigma=2.0)
        assert task.with_noise_scale(0.67).noise_sigma == pytest.approx(1.34)


class TestGenerateDataset:
    def test_exact_class_counts(self):
        task = default_task(n_classes=4, n_features=8)
        data = generate_dataset(task, (5, 0, 13, 2), None, 42, "C1")
        assert len(data) == 20
        assert list(data.class_counts(4)) == [5, 0, 13, 2]

    def test_deterministic_in_seed(self):
        task = default_task()
        a = generate_dataset(task, [3] * 8, None, 7, "C1")
        b = generate_dataset(task, [3] * 8, None, 7, "C1")
        c = generate_dataset(task, [3] * 8, None, 8, "C1")
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.features, c.features)

    def test_scenario_mix_exact_split(self):
        task = default_task(scenario_tags=("day", "night"))
        data = generate_dataset(
            task, [10] * 8, {"day": 0.7, "night": 0.3}, 0, "C1"
        )
        assert data.scenarios.count("day") == 56
        assert data.scenarios.count("night") == 24

    def test_scenario_shift_moves_features(self):
        task = default_task(n_classes=2, n_features=4, noise_sigma=0.0,
                            scenario_tags=("far",), shift_scale=5.0)
        ref = generate_dataset(task, (100, 0), {"reference": 1.0}, 0, "C1")
        far = generate_dataset(task, (100, 0), {"far": 1.0}, 0, "C1")
        assert np.allclose(
            far.features.mean(axis=0) - ref.features.mean(axis=0),
            task.scenario_shifts["far"],
        )

    def test_unknown_tag_rejected(self):
        task = default_task()
        with pytest.raises(ConfigError):
            generate_dataset(task, [1] * 8, {"fog": 1.0}, 0, "C1")

    def test_mix_must_sum_to_one(self):
        task = default_task(scenario_tags=("day",))
        with pytest.raises(ConfigError):
            generate_dataset(task, [1] * 8, {"day": 0.6}, 0, "C1")

    def test_row_length_checked(self):
        with pytest.raises(ConfigError):
            generate_dataset(default_task(), [1] * 7, None, 0, "C1")

    def test_concat(self):
        task = default_task()
        a = generate_dataset(task, [2] * 8, None, 1, "p1")
        b = generate_dataset(task, [3] * 8, None, 2, "p2")
        both = LocalDataset.concat("C1", [a, b])
        assert len(both) == len(a) + len(b)
        assert np.array_equal(both.features[: len(a)], a.features)


class TestGradient:
    def test_against_central_finite_differences(self):
        rng = np.random.default_rng(0)
        task = default_task(n_classes=3, n_features=5)
        data = generate_dataset(task, (4, 3, 5), None, 11, "C1")
        eps = 1e-6
        for mu in (0.0, 0.01, 1.0):
            w = rng.standard_normal(param_length(5, 3))
            anchor = rng.standard_normal(param_length(5, 3))
            loss, grad = loss_and_gradient(w, data, np.arange(len(data)), anchor, mu)
            assert loss == pytest.approx(
                reference_loss(w, data.features, data.labels, anchor, mu), rel=1e-12
            )
            for j in range(w.size):
                wp, wm = w.copy(), w.copy()
                wp[j] += eps
                wm[j] -= eps
                fd = (
                    reference_loss(wp, data.features, data.labels, anchor, mu)
                    - reference_loss(wm, data.features, data.labels, anchor, mu)
                ) / (2 * eps)
                assert grad[j] == pytest.approx(fd, abs=1e-5)

    def test_empty_batch_rejected(self):
        task = default_task()
        data = generate_dataset(task, [2] * 8, None, 0, "C1")
        w = zero_params(16, 8)
        with pytest.raises(ValueError):
            loss_and_gradient(w, data, [], w, 0.0)

    def test_anchor_shape_checked(self):
        task = default_task()
        data = generate_dataset(task, [2] * 8, None, 0, "C1")
        w = zero_params(16, 8)
        with pytest.raises(ValueError):
            loss_and_gradient(w, data, [0], np.zeros(3), 0.0)

    @given(mu=st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    @settings(max_examples=25)
    def test_proximal_term_vanishes_at_anchor(self, mu):
        task = default_task(n_classes=3, n_features=4)
        data = generate_dataset(task, (3, 3, 3), None, 5, "C1")
        w = np.random.default_rng(1).standard_normal(param_length(4, 3))
        base, _ = loss_and_gradient(w, data, np.arange(9), w, 0.0)
        prox, _ = loss_and_gradient(w, data, np.arange(9), w, mu)
        assert prox == pytest.approx(base)


class TestLocalTrain:
    def test_matches_plain_sgd_reference(self):
        task = default_task(n_classes=4, n_features=6)
        data = generate_dataset(task, (9, 4, 7, 11), None, 3, "C1")
        cfg = TrainConfig(local_epochs=2, batch_size=8, learning_rate=0.1, seed=17)
        got, n, _ = local_train(zero_params(6, 4), data, cfg)

        # straightforward re-implementation of the documented procedure
        w = zero_params(6, 4)
        anchor = w.copy()
        for epoch in range(2):
            perm = np.random.default_rng(
                np.random.SeedSequence([17, epoch])
            ).permutation(len(data))
            for start in range(0, len(data), 8):
                batch = perm[start : start + 8]
                _, grad = loss_and_gradient(w, data, batch, anchor, 0.0)
                w = w - 0.1 * grad
        assert n == len(data)
        assert np.allclose(got, w, rtol=0, atol=1e-12)

    def test_proximal_pull_shrinks_step(self):
        task = default_task(n_classes=4, n_features=6)
        data = generate_dataset(task, [20] * 4, None, 9, "C1")
        w0 = zero_params(6, 4)
        free, _, _ = local_train(w0, data, TrainConfig(learning_rate=0.1, seed=1))
        tied, _, _ = local_train(
            w0, data, TrainConfig(learning_rate=0.1, prox_mu=10.0, seed=1)
        )
        assert np.linalg.norm(tied - w0) < np.linalg.norm(free - w0)

    def test_training_reduces_loss(self):
        task = default_task(n_classes=4, n_features=6)
        data = generate_dataset(task, [25] * 4, None, 2, "C1")
        w0 = zero_params(6, 4)
        w1, _, final_loss = local_train(w0, data, TrainConfig(seed=0))
        assert final_loss < dataset_loss(w0, data)

    def test_empty_dataset_rejected(self):
        empty = LocalDataset("C1", np.zeros((0, 16)), np.zeros(0, dtype=np.int64), ())
        with pytest.raises(ValueError):
            local_train(zero_params(16, 8), empty, TrainConfig())

    def test_deterministic(self):
        task = default_task()
        data = generate_dataset(task, [10] * 8, None, 0, "C1")
        a, _, _ = local_train(zero_params(16, 8), data, TrainConfig(seed=5))
        b, _, _ = local_train(zero_params(16, 8), data, TrainConfig(seed=5))
        assert np.array_equal(a, b)


class TestEvaluate:
    def test_recount_oracle(self):
        task = default_task(n_classes=3, n_features=5)
        data = generate_dataset(task, (40, 40, 40), None, 21, "eval")
        w = np.random.default_rng(4).standard_normal(param_length(5, 3))
        acc = evaluate(w, data)
        W, b = unpack_params(w, 5, 3)
        hits = 0
        for xi, yi in zip(data.features, data.labels):
            if int(np.argmax(W @ xi + b)) == yi:
                hits += 1
        assert acc == pytest.approx(hits / len(data))

    def test_argmax_tie_breaks_low(self):
        # all-zero weights score every class identically -> class 0 predicted
        preds = predict(zero_params(4, 3), np.ones((5, 4)), 3)
        assert np.all(preds == 0)

    def test_perfect_separation(self):
        task = default_task(n_classes=2, n_features=4, noise_sigma=0.01)
        data = generate_dataset(task, (50, 50), None, 0, "eval")
        w, _, _ = local_train(
            zero_params(4, 2), data, TrainConfig(local_epochs=20, learning_rate=0.5)
        )
        assert evaluate(w, data) == 1.0

    def test_empty_rejected(self):
        empty = LocalDataset("e", np.zeros((0, 4)), np.zeros(0, dtype=np.int64), ())
        with pytest.raises(ValueError):
            evaluate(zero_params(4, 2), empty)


class TestTrainConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(local_epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-0.1)
        with pytest.raises(ConfigError):
            TrainConfig(prox_mu=-1.0)
