import logging
from typing import Dict, Tuple

import numpy as np
from scipy.special import expit

from .base import ScaledCamModel

logger = logging.getLogger(__name__)

HIDDEN_LAYERS = (16, 8)


class MlpCam(ScaledCamModel):
    """d -> 16 -> 8 -> 1 network, ReLU hidden units, sigmoid output, plain SGD on BCE."""
    algo = 'mlp'

    def __init__(self, learning_rate=0.05, epochs=500, batch_size=32, random_state=0):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def init_params(self, d: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        sizes = (d, *HIDDEN_LAYERS, 1)
        params = {}
        for layer, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:]), start=1):
            params[f'W{layer}'] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            params[f'b{layer}'] = np.zeros(fan_out)
        return params

    @staticmethod
    def forward(params, X) -> Tuple[np.ndarray, dict]:
        z1 = X @ params['W1'] + params['b1']
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ params['W2'] + params['b2']
        a2 = np.maximum(z2, 0.0)
        raw = (a2 @ params['W3'] + params['b3'])[:, 0]
        return raw, {'z1': z1, 'a1': a1, 'z2': z2, 'a2': a2}

    def loss_and_grads(self, params, X, y) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean binary cross-entropy and its gradient for every parameter."""
        raw, cache = self.forward(params, X)
        n = len(y)
        loss = float(np.mean(np.logaddexp(0.0, raw) - y * raw))

        d_raw = ((expit(raw) - y) / n)[:, np.newaxis]
        grads = {'W3': cache['a2'].T @ d_raw, 'b3': d_raw.sum(axis=0)}
        d_z2 = (d_raw @ params['W3'].T) * (cache['z2'] > 0)
        grads['W2'] = cache['a1'].T @ d_z2
        grads['b2'] = d_z2.sum(axis=0)
        d_z1 = (d_z2 @ params['W2'].T) * (cache['z1'] > 0)
        grads['W1'] = X.T @ d_z1
        grads['b1'] = d_z1.sum(axis=0)
        return loss, grads

    def _fit_scaled(self, X, y):
        rng = np.random.default_rng(self.random_state)
        params = self.init_params(X.shape[1], rng)
        y = y.astype(float)
        n = len(y)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                _, grads = self.loss_and_grads(params, X[batch], y[batch])
                for name, grad in grads.items():
                    params[name] -= self.learning_rate * grad
        self.params_ = params
        logger.debug("mlp: trained %d epochs, loss %.6f", self.epochs,
                     self.loss_and_grads(params, X, y)[0])

    def _score_scaled(self, X):
        return expit(self.forward(self.params_, X)[0])

    def _scaled_state(self):
        return {'params': {name: value.tolist() for name, value in self.params_.items()}}

    def _load_scaled_state(self, state):
        self.params_ = {name: np.array(value) for name, value in state['params'].items()}
