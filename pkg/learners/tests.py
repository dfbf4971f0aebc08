import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from .base import Dataset, LearnerError, ModelNotFitted
from .linear import LinearSvmCam, LogisticRegressionCam
from .neural import MlpCam
from .registry import LEARNERS, fit, load_model, predict_proba, save_model
from .trees import (
    DecisionTreeCam, GradientBoostedCam, best_split, gini, logistic_grad_hess, logistic_loss,
)

FAST = {
    'rf': {'n_estimators': 15},
    'gbt': {'n_estimators': 15},
    'lr': {'max_iter': 500},
    'svm_linear': {'max_iter': 200},
    'mlp': {'epochs': 40},
}


def xor_dataset(copies=25):
    """o and r constant, s3 pure noise, y = s1 xor s2; every cell equally common."""
    rows = [([5, 2, a, b, c], a ^ b) for a, b, c in itertools.product((0, 1), repeat=3)]
    return Dataset.from_rows(rows * copies)


def cam_like_dataset(seed, n=150, k=3):
    rng = np.random.default_rng(seed)
    o = rng.integers(0, 40, n)
    r = rng.integers(0, 8, n)
    y = rng.integers(0, 2, n)
    answers = np.where(rng.random((n, k)) < 0.75, y[:, None], 1 - y[:, None])
    return Dataset(np.column_stack([o, r, answers]), y)


class GiniTests(SimpleTestCase):
    def test_values(self):
        self.assertEqual(gini(5, 5), 0.5)
        self.assertEqual(gini(4, 0), 0.0)
        self.assertAlmostEqual(gini(3, 1), 0.375)

    def test_empty(self):
        with self.assertRaises(LearnerError):
            gini(0, 0)


class BestSplitTests(SimpleTestCase):
    def test_label_equals_binary_feature(self):
        rng = np.random.default_rng(0)
        X = rng.integers(0, 5, size=(40, 5)).astype(float)
        X[:, 3] = np.arange(40) % 2
        y = X[:, 3].astype(int)
        feature, threshold, decrease = best_split(X, y)
        self.assertEqual((feature, threshold), (3, 0.5))
        self.assertAlmostEqual(decrease, gini(20, 20))

    def test_identical_rows(self):
        X = np.ones((6, 3))
        self.assertIsNone(best_split(X, np.array([0, 1, 0, 1, 0, 1])))

    def test_pure_node(self):
        self.assertIsNone(best_split(np.arange(8.0).reshape(4, 2), np.ones(4)))

    def test_tie_goes_to_lower_feature(self):
        y = np.array([0, 1, 0, 1])
        X = np.column_stack([np.zeros(4), y, y * 3])
        self.assertEqual(best_split(X, y)[:2], (1, 0.5))

    def test_zero_gain_split_is_returned(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        split = best_split(X, np.array([0, 1, 1, 0]))
        self.assertEqual(split[:2], (0, 0.5))
        self.assertAlmostEqual(split[2], 0.0)


class DecisionTreeTests(SimpleTestCase):
    def test_consistent_data_is_memorized(self):
        rng = np.random.default_rng(1)
        for trial in range(100):
            n = int(rng.integers(2, 201))
            X = rng.integers(0, 4, size=(n, 4)).astype(float)
            lookup = {}
            y = np.array([lookup.setdefault(tuple(row), int(rng.integers(0, 2))) for row in X])
            model = DecisionTreeCam().fit(X, y)
            self.assertEqual(np.mean(model.predict(X) == y), 1.0, f"trial {trial}")

    def test_depth_limit(self):
        ds = xor_dataset()
        model = DecisionTreeCam(max_depth=1).fit(ds.X, ds.y)
        self.assertLessEqual(model.tree_.depth, 1)

    def test_export_of_constant_model(self):
        model = DecisionTreeCam().fit(np.zeros((3, 2)), [1, 1, 1])
        self.assertTrue(model.export_tree().is_leaf)


class NonLinearityTests(SimpleTestCase):
    def test_trees_learn_xor(self):
        ds = xor_dataset()
        for algo in ('dt', 'gbt'):
            model = fit(algo, ds, seed=0)
            self.assertGreaterEqual(np.mean(model.predict(ds.X) == ds.y), 0.99, algo)

    def test_rbf_svm_learns_xor(self):
        ds = xor_dataset()
        model = fit('svm_rbf', ds, seed=0)
        self.assertGreaterEqual(np.mean(model.predict(ds.X) == ds.y), 0.99)

    def test_linear_models_cannot(self):
        ds = xor_dataset()
        for algo in ('lr', 'svm_linear'):
            model = fit(algo, ds, FAST.get(algo), seed=0)
            self.assertLessEqual(np.mean(model.predict(ds.X) == ds.y), 0.78, algo)


class GradientCheckTests(SimpleTestCase):
    eps = 1e-6

    def test_logistic_regression(self):
        model = LogisticRegressionCam(l2=0.1)
        rng = np.random.default_rng(2)
        for _ in range(20):
            X = rng.normal(size=(12, 4))
            y = rng.integers(0, 2, 12).astype(float)
            params = rng.normal(size=5)
            _, grad = model._loss_and_grad(params, X, y)
            numeric = np.zeros_like(params)
            for i in range(len(params)):
                step = np.zeros_like(params)
                step[i] = self.eps
                numeric[i] = (model._loss_and_grad(params + step, X, y)[0]
                              - model._loss_and_grad(params - step, X, y)[0]) / (2 * self.eps)
            assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)

    def test_mlp(self):
        model = MlpCam()
        rng = np.random.default_rng(3)
        for _ in range(20):
            X = rng.normal(size=(8, 5))
            y = rng.integers(0, 2, 8).astype(float)
            params = model.init_params(5, rng)
            _, grads = model.loss_and_grads(params, X, y)
            for name, value in params.items():
                numeric = np.zeros_like(value)
                for idx in np.ndindex(value.shape):
                    original = value[idx]
                    value[idx] = original + self.eps
                    up = model.loss_and_grads(params, X, y)[0]
                    value[idx] = original - self.eps
                    down = model.loss_and_grads(params, X, y)[0]
                    value[idx] = original
                    numeric[idx] = (up - down) / (2 * self.eps)
                assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-7, err_msg=name)

    def test_boosting_gradient_and_hessian(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            y = rng.integers(0, 2, 10).astype(float)
            raw = rng.normal(scale=2.0, size=10)
            grad, hess = logistic_grad_hess(y, raw)
            num_grad = np.zeros(10)
            num_hess = np.zeros(10)
            for i in range(10):
                step = np.zeros(10)
                step[i] = self.eps
                num_grad[i] = (logistic_loss(y, raw + step)
                               - logistic_loss(y, raw - step)) / (2 * self.eps)
                num_hess[i] = (logistic_grad_hess(y, raw + step)[0][i]
                               - logistic_grad_hess(y, raw - step)[0][i]) / (2 * self.eps)
            assert_allclose(grad, num_grad, rtol=1e-4, atol=1e-7)
            assert_allclose(hess, num_hess, rtol=1e-4, atol=1e-7)


class ContractTests(SimpleTestCase):
    def test_one_class_gives_constant_model(self):
        ds = Dataset(np.random.default_rng(5).integers(0, 3, (20, 4)), np.ones(20, dtype=int))
        for algo in LEARNERS:
            model = fit(algo, ds, FAST.get(algo))
            assert_array_equal(model.predict(ds.X), np.ones(20))
            assert_array_equal(predict_proba(model, ds.X), np.ones(20))

    def test_one_class_svm_margins(self):
        X = np.random.default_rng(8).integers(0, 3, (10, 4))
        for algo in ('svm_linear', 'svm_rbf'):
            ones = fit(algo, Dataset(X, np.ones(10, dtype=int)), FAST.get(algo))
            assert_array_equal(ones.decision_function(X), np.ones(10))
            zeros = fit(algo, Dataset(X, np.zeros(10, dtype=int)), FAST.get(algo))
            assert_array_equal(zeros.decision_function(X[:3]), -np.ones(3))

    def test_constant_zero_scores_zero(self):
        model = fit('dt', Dataset(np.eye(3), [0, 0, 0]))
        assert_array_equal(predict_proba(model, np.random.default_rng(0).normal(size=(5, 3))),
                           np.zeros(5))

    def test_gbt_without_rounds_is_base_rate(self):
        ds = cam_like_dataset(6)
        model = fit('gbt', ds, {'n_estimators': 0})
        assert_allclose(predict_proba(model, ds.X), np.full(len(ds), ds.y.mean()))

    def test_mlp_scores_stay_open_interval(self):
        ds = cam_like_dataset(7)
        model = fit('mlp', ds, FAST['mlp'])
        scores = predict_proba(model, ds.X * 100)
        self.assertTrue(((scores >= 0) & (scores <= 1)).all())
        scores = predict_proba(model, ds.X)
        self.assertTrue(((scores > 0) & (scores < 1)).all())

    def test_deterministic_and_serializable(self):
        ds = cam_like_dataset(8)
        held_out = cam_like_dataset(9).X
        with tempfile.TemporaryDirectory() as tmp:
            for algo in LEARNERS:
                first = fit(algo, ds, FAST.get(algo), seed=3)
                second = fit(algo, ds, FAST.get(algo), seed=3)
                assert_array_equal(first.predict(held_out), second.predict(held_out), err_msg=algo)
                restored = load_model(save_model(first, Path(tmp) / f'{algo}.json'))
                assert_allclose(restored.predict_proba(held_out), first.predict_proba(held_out),
                                err_msg=algo)

    def test_arity_is_checked(self):
        model = fit('lr', cam_like_dataset(1), FAST['lr'])
        with self.assertRaises(LearnerError):
            model.predict(np.zeros((2, 3)))

    def test_unfitted(self):
        with self.assertRaises(ModelNotFitted):
            DecisionTreeCam().predict(np.zeros((1, 3)))

    def test_bad_datasets(self):
        with self.assertRaises(LearnerError):
            Dataset.from_rows([])
        with self.assertRaises(LearnerError):
            Dataset(np.zeros((2, 2)), [0, 2])
        with self.assertRaises(LearnerError):
            Dataset.from_rows([([0, 1], 1), ([0, 1, 1], 0)])
        with self.assertRaises(LearnerError):
            fit('knn', cam_like_dataset(0))

    def test_forest_threads_match_serial(self):
        ds = cam_like_dataset(10)
        serial = fit('rf', ds, {'n_estimators': 12, 'n_jobs': 1}, seed=4)
        threaded = fit('rf', ds, {'n_estimators': 12, 'n_jobs': 4}, seed=4)
        assert_array_equal(serial.predict_proba(ds.X), threaded.predict_proba(ds.X))


class InversionInvarianceTests(SimpleTestCase):
    """Retraining with one agent's answers inverted must not change predictions."""

    def _check(self, algo, hyper):
        for seed in range(3):
            ds = cam_like_dataset(20 + seed)
            for column in (2, 3, 4):
                flipped = ds.X.copy()
                flipped[:, column] = 1 - flipped[:, column]
                original = fit(algo, ds, hyper, seed=seed)
                retrained = fit(algo, Dataset(flipped, ds.y), hyper, seed=seed)
                assert_array_equal(original.predict(ds.X), retrained.predict(flipped),
                                   err_msg=f"{algo} column {column}")

    def test_decision_tree(self):
        self._check('dt', None)

    def test_random_forest(self):
        self._check('rf', {'n_estimators': 25})

    def test_boosting(self):
        self._check('gbt', {'n_estimators': 20})
