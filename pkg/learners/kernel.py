import logging

import numpy as np
from scipy.special import expit

from .base import ScaledCamModel, check_fitted

logger = logging.getLogger(__name__)


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, np.newaxis] + (B * B).sum(axis=1)[np.newaxis, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class RbfSvmCam(ScaledCamModel):
    """
    Kernel SVM solved with sequential minimal optimization. The partner of
    each KKT-violating multiplier is the one maximizing ``|E_i - E_j|`` from
    the error cache; no randomness is involved.
    """
    algo = 'svm_rbf'

    def __init__(self, C=1.0, tol=1e-3, max_passes=5, max_iter=2000, random_state=0):
        self.C = C
        self.tol = tol
        self.max_passes = max_passes
        self.max_iter = max_iter
        self.random_state = random_state

    def _take_step(self, i, j, K, s, alpha, errors):
        if i == j:
            return False
        C = self.C
        ai, aj = alpha[i], alpha[j]
        if s[i] != s[j]:
            low, high = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            low, high = max(0.0, ai + aj - C), min(C, ai + aj)
        if low >= high:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            return False
        aj_new = np.clip(aj - s[j] * (errors[i] - errors[j]) / eta, low, high)
        if abs(aj_new - aj) < 1e-8:
            return False
        ai_new = ai + s[i] * s[j] * (aj - aj_new)

        b1 = self.b_ - errors[i] - s[i] * (ai_new - ai) * K[i, i] - s[j] * (aj_new - aj) * K[i, j]
        b2 = self.b_ - errors[j] - s[i] * (ai_new - ai) * K[i, j] - s[j] * (aj_new - aj) * K[j, j]
        if 0 < ai_new < C:
            b_new = b1
        elif 0 < aj_new < C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0

        errors += s[i] * (ai_new - ai) * K[:, i] + s[j] * (aj_new - aj) * K[:, j] + (b_new - self.b_)
        alpha[i], alpha[j] = ai_new, aj_new
        self.b_ = b_new
        return True

    def _fit_scaled(self, X, y):
        n, d = X.shape
        variance = float(X.var())
        self.gamma_ = 1.0 / (d * variance) if variance > 0 else 1.0
        K = rbf_kernel(X, X, self.gamma_)
        s = np.where(y == 1, 1.0, -1.0)
        alpha = np.zeros(n)
        self.b_ = 0.0
        errors = -s.copy()

        passes = iterations = 0
        while passes < self.max_passes and iterations < self.max_iter:
            changed = 0
            for i in range(n):
                r = errors[i] * s[i]
                if (r < -self.tol and alpha[i] < self.C) or (r > self.tol and alpha[i] > 0):
                    j = int(np.argmax(np.abs(errors[i] - errors)))
                    if self._take_step(i, j, K, s, alpha, errors):
                        changed += 1
            iterations += 1
            passes = passes + 1 if changed == 0 else 0
        logger.debug("smo: %d sweeps, %d support vectors", iterations, int((alpha > 0).sum()))

        support = alpha > 1e-8
        self.support_vectors_ = X[support]
        self.dual_coef_ = alpha[support] * s[support]

    def _decision_scaled(self, X):
        if len(self.dual_coef_) == 0:
            return np.full(len(X), self.b_)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.b_

    def decision_function(self, X):
        """Signed margin; a one-class model sits at +1 or -1."""
        check_fitted(self)
        X = self._check_X(X)
        if self.constant_ is not None:
            return np.full(len(X), 1.0 if self.constant_ else -1.0)
        return self._decision_scaled(self.scaler_.transform(X))

    def _score_scaled(self, X):
        return expit(self._decision_scaled(X))

    def _scaled_state(self):
        return {
            'gamma': self.gamma_,
            'b': self.b_,
            'support_vectors': self.support_vectors_.tolist(),
            'dual_coef': self.dual_coef_.tolist(),
        }

    def _load_scaled_state(self, state):
        self.gamma_ = state['gamma']
        self.b_ = state['b']
        self.dual_coef_ = np.array(state['dual_coef'])
        self.support_vectors_ = np.array(state['support_vectors']).reshape(
            len(self.dual_coef_), self.n_features_in_)
