import logging
import math

import numpy as np
from scipy.special import expit

from .base import ScaledCamModel, check_fitted

logger = logging.getLogger(__name__)


class LogisticRegressionCam(ScaledCamModel):
    """L2-regularized logistic regression trained by full-batch gradient descent."""
    algo = 'lr'

    def __init__(self, learning_rate=0.5, max_iter=5000, tol=1e-6, l2=1e-4, random_state=0):
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.l2 = l2
        self.random_state = random_state

    def _loss_and_grad(self, params, X, y):
        """Mean log loss plus ``l2/2 |w|^2``; ``params`` is ``[w..., b]``."""
        w, b = params[:-1], params[-1]
        raw = X @ w + b
        loss = np.mean(np.logaddexp(0.0, raw) - y * raw) + 0.5 * self.l2 * (w @ w)
        residual = (expit(raw) - y) / len(y)
        grad = np.append(X.T @ residual + self.l2 * w, residual.sum())
        return float(loss), grad

    def _fit_scaled(self, X, y):
        params = np.zeros(X.shape[1] + 1)
        y = y.astype(float)
        for it in range(1, self.max_iter + 1):
            _, grad = self._loss_and_grad(params, X, y)
            if np.max(np.abs(grad)) < self.tol:
                break
            params -= self.learning_rate * grad
        self.n_iter_ = it
        self.coef_, self.intercept_ = params[:-1], float(params[-1])

    def _score_scaled(self, X):
        return expit(X @ self.coef_ + self.intercept_)

    def _scaled_state(self):
        return {'coef': self.coef_.tolist(), 'intercept': self.intercept_}

    def _load_scaled_state(self, state):
        self.coef_ = np.array(state['coef'])
        self.intercept_ = state['intercept']


class LinearSvmCam(ScaledCamModel):
    """
    Hinge loss + L2 by subgradient descent with step ``eta0 / sqrt(t)``.
    The iterate with the lowest objective is kept.
    """
    algo = 'svm_linear'

    def __init__(self, l2=1e-2, learning_rate=0.1, max_iter=1000, random_state=0):
        self.l2 = l2
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.random_state = random_state

    def _objective(self, w, b, X, s):
        margins = s * (X @ w + b)
        return 0.5 * self.l2 * (w @ w) + np.mean(np.maximum(0.0, 1.0 - margins))

    def _fit_scaled(self, X, y):
        s = np.where(y == 1, 1.0, -1.0)
        n, d = X.shape
        w, b = np.zeros(d), 0.0
        best = (self._objective(w, b, X, s), w.copy(), b)
        for t in range(1, self.max_iter + 1):
            active = s * (X @ w + b) < 1.0
            grad_w = self.l2 * w - (s[active] @ X[active]) / n
            grad_b = -s[active].sum() / n
            step = self.learning_rate / math.sqrt(t)
            w = w - step * grad_w
            b = b - step * grad_b
            objective = self._objective(w, b, X, s)
            if objective < best[0]:
                best = (objective, w.copy(), b)
        self.objective_, self.coef_, self.intercept_ = best[0], best[1], float(best[2])

    def decision_function(self, X):
        check_fitted(self)
        X = self._check_X(X)
        if self.constant_ is not None:
            return np.full(len(X), 1.0 if self.constant_ else -1.0)
        return self.scaler_.transform(X) @ self.coef_ + self.intercept_

    def _score_scaled(self, X):
        return expit(X @ self.coef_ + self.intercept_)

    def _scaled_state(self):
        return {'coef': self.coef_.tolist(), 'intercept': self.intercept_}

    def _load_scaled_state(self, state):
        self.coef_ = np.array(state['coef'])
        self.intercept_ = state['intercept']
