import math

import numpy as np
import pytest

from fedgame.precision import (AnalyticPrecision, ExpSaturation,
                               LogSaturation, MicroFLPrecision,
                               SyntheticFLTask, eval_analytic, local_train,
                               microfl_reset, microfl_round, model_accuracy)

SIZES = [2000.0, 2000.0, 2000.0, 2000.0]


class TestAnalytic:
    def test_zero_contribution_hits_floor(self):
        for model in (ExpSaturation(), LogSaturation()):
            assert eval_analytic(model, [0, 0, 0, 0], SIZES) == pytest.approx(0.1)

    def test_full_contribution_exp_value(self):
        expected = 0.1 + 0.85 * (1.0 - math.exp(-3.0))
        got = eval_analytic(ExpSaturation(), [1, 1, 1, 1], SIZES)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_full_contribution_log_value(self):
        expected = 0.1 + 0.85 * math.log(4.0) / math.log(4.0)
        got = eval_analytic(LogSaturation(), [1, 1, 1, 1], SIZES)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_each_coordinate(self):
        rng = np.random.default_rng(2)
        step = 1e-4
        for model in (ExpSaturation(), LogSaturation()):
            for _ in range(100):
                d = rng.uniform(0, 1 - step, 4)
                n = int(rng.integers(4))
                up = d.copy()
                up[n] += step
                diff = (eval_analytic(model, up, SIZES)
                        - eval_analytic(model, d, SIZES))
                assert diff >= -1e-8

    def test_diminishing_returns_in_share(self):
        model = ExpSaturation()
        h = 0.05
        for s in np.linspace(0.0, 1.0 - 2 * h, 20):
            f0 = eval_analytic(model, [s] * 4, SIZES)
            f1 = eval_analytic(model, [s + h] * 4, SIZES)
            f2 = eval_analytic(model, [s + 2 * h] * 4, SIZES)
            assert f2 - 2 * f1 + f0 <= 1e-8

    def test_outputs_within_unit_interval(self):
        rng = np.random.default_rng(4)
        for model in (ExpSaturation(), LogSaturation(0.0, 1.0, 9.0)):
            for _ in range(200):
                p = eval_analytic(model, rng.uniform(0, 1, 4), SIZES)
                assert 0.0 <= p <= 1.0

    def test_weighting_by_dataset_size(self):
        model = ExpSaturation()
        # one org holding all the data dominates the share
        p_big = eval_analytic(model, [1, 0], [3000, 1])
        p_small = eval_analytic(model, [0, 1], [3000, 1])
        assert p_big > p_small

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ExpSaturation(p_lo=0.5, p_hi=0.4)
        with pytest.raises(ValueError):
            ExpSaturation(beta=0.0)
        with pytest.raises(ValueError):
            LogSaturation(p_lo=-0.1)
        with pytest.raises(TypeError):
            eval_analytic(object(), [0.5], [10.0])


class TestMicroFL:
    def test_zero_model_is_a_coin_flip(self):
        state = microfl_reset(SyntheticFLTask(seed=1))
        assert abs(model_accuracy(state) - 0.5) < 0.05

    def test_same_seed_bit_identical(self):
        a = microfl_reset(SyntheticFLTask(seed=9))
        b = microfl_reset(SyntheticFLTask(seed=9))
        assert all(np.array_equal(x, y)
                   for x, y in zip(a.org_features, b.org_features))
        assert np.array_equal(a.test_features, b.test_features)
        assert np.array_equal(a.test_labels, b.test_labels)

    def test_centrally_trained_model_is_accurate(self):
        # independent oracle: scikit-learn logistic regression on pooled data
        from sklearn.linear_model import LogisticRegression
        state = microfl_reset(SyntheticFLTask(seed=3))
        x = np.concatenate(state.org_features)
        y = np.concatenate(state.org_labels)
        clf = LogisticRegression(max_iter=2000).fit(x, y)
        acc = clf.score(state.test_features, state.test_labels)
        assert acc >= 0.95

    def test_all_zero_round_is_a_no_op(self):
        state = microfl_reset(SyntheticFLTask(seed=5))
        before = model_accuracy(state)
        new_state, p = microfl_round(state, [0, 0, 0, 0], 5, 0.5)
        assert np.array_equal(new_state.weights, state.weights)
        assert p == before

    def test_single_org_equals_centralized_descent(self):
        task = SyntheticFLTask(per_org_sizes=(500,), seed=7)
        state = microfl_reset(task)
        new_state, _ = microfl_round(state, [1.0], 10, 0.5)
        # hand-rolled gradient descent on the same subsample
        x = state.org_features[0]
        y = state.org_labels[0]
        w = np.zeros(task.feature_dim + 1)
        for _ in range(10):
            margin = x @ w[:-1] + w[-1]
            prob = 1.0 / (1.0 + np.exp(-margin))
            grad = np.concatenate([x.T @ (prob - y), [(prob - y).sum()]]) / len(y)
            w = w - 0.5 * grad
        assert np.allclose(new_state.weights, w, atol=1e-12)

    def test_round_uses_prefix_counts(self):
        task = SyntheticFLTask(per_org_sizes=(100, 100), seed=11)
        state = microfl_reset(task)
        # d = 0.5 trains on exactly the first 50 samples of each pool
        direct = [local_train(state.weights, state.org_features[i][:50],
                              state.org_labels[i][:50], 3, 0.5)
                  for i in range(2)]
        expected = np.average(np.stack(direct), axis=0, weights=[50, 50])
        new_state, _ = microfl_round(state, [0.5, 0.5], 3, 0.5)
        assert np.allclose(new_state.weights, expected, atol=1e-12)

    def test_more_data_beats_less_over_seeds(self):
        # twenty rounds at full contribution vs a tenth, five seeds
        finals = {1.0: [], 0.1: []}
        for seed in range(5):
            for d in (1.0, 0.1):
                src = MicroFLPrecision(SyntheticFLTask(seed=seed),
                                       local_epochs=5, lr=0.5)
                p = 0.0
                for _ in range(20):
                    p = src.observe([d] * 4)
                finals[d].append(p)
        assert np.mean(finals[1.0]) > np.mean(finals[0.1])

    def test_peek_does_not_advance_state(self):
        src = MicroFLPrecision(SyntheticFLTask(seed=13))
        before = src.state.weights.copy()
        src.peek([0.5] * 4)
        assert np.array_equal(src.state.weights, before)
        src.observe([0.5] * 4)
        assert not np.array_equal(src.state.weights, before)

    def test_task_validation(self):
        with pytest.raises(ValueError):
            SyntheticFLTask(per_org_sizes=(0, 10))
        with pytest.raises(ValueError):
            SyntheticFLTask(class_separation=0.0)


class TestAdapters:
    def test_analytic_adapter_matches_eval(self):
        adapter = AnalyticPrecision(ExpSaturation(), SIZES)
        d = [0.2, 0.4, 0.6, 0.8]
        assert adapter.observe(d) == eval_analytic(ExpSaturation(), d, SIZES)
        assert adapter.peek(d) == adapter.observe(d)

    def test_microfl_determinism_across_instances(self):
        seqs = []
        for _ in range(2):
            src = MicroFLPrecision(SyntheticFLTask(seed=21), local_epochs=2,
                                   lr=0.3)
            seqs.append([src.observe([0.5, 1.0, 0.2, 0.7]) for _ in range(5)])
        assert seqs[0] == seqs[1]
