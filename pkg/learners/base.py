import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)


class LearnerError(ValueError):
    pass


class ModelNotFitted(LearnerError):
    pass


@dataclass
class Dataset:
    """Featurized rows ``[o, r, s_1 .. s_K]`` and their ground-truth labels."""
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or len(self.X) == 0:
            raise LearnerError("empty dataset")
        if len(self.X) != len(self.y):
            raise LearnerError(f"{len(self.X)} rows but {len(self.y)} labels")
        if not np.isin(self.y, (0, 1)).all():
            raise LearnerError("labels must be 0/1")

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[Sequence[float], int]]) -> 'Dataset':
        rows = list(rows)
        if not rows:
            raise LearnerError("empty dataset")
        widths = {len(x) for x, _ in rows}
        if len(widths) != 1:
            raise LearnerError(f"rows of mixed arity {sorted(widths)}")
        return cls(np.array([x for x, _ in rows], dtype=float), np.array([y for _, y in rows]))

    def __len__(self):
        return len(self.y)

    @property
    def arity(self) -> int:
        return self.X.shape[1]

    def drop_column(self, index: int) -> 'Dataset':
        return Dataset(np.delete(self.X, index, axis=1), self.y)


def check_fitted(model) -> None:
    try:
        check_is_fitted(model, 'n_features_in_')
    except NotFittedError as exc:
        raise ModelNotFitted(str(exc)) from None


def scaler_to_dict(scaler: StandardScaler) -> dict:
    return {'mean': scaler.mean_.tolist(), 'scale': scaler.scale_.tolist()}


def scaler_from_dict(state: dict) -> StandardScaler:
    scaler = StandardScaler()
    scaler.mean_ = np.array(state['mean'])
    scaler.scale_ = np.array(state['scale'])
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = len(scaler.mean_)
    return scaler


class CamModel(ClassifierMixin, BaseEstimator):
    """
    Common plumbing for the CAM classifiers: input checks, the one-class
    constant model, n x 2 probabilities and JSON state. Subclasses fill in
    ``_fit``/``_score`` and ``_state``/``_load_state``.
    """
    algo: Optional[str] = None
    # tree votes and leaf majorities break 0.5 ties toward 0
    strict_majority = False

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[np.newaxis, :]
        if hasattr(self, 'n_features_in_') and X.shape[1] != self.n_features_in_:
            raise LearnerError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def fit(self, X, y):
        ds = Dataset(X, y)
        self.n_features_in_ = ds.arity
        self.classes_ = np.array([0, 1])
        labels = np.unique(ds.y)
        if len(labels) == 1:
            self.constant_ = float(labels[0])
            logger.debug("%s: one-class training set, constant %d model", self.algo, labels[0])
        else:
            self.constant_ = None
            self._fit(ds.X, ds.y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self)
        X = self._check_X(X)
        if self.constant_ is not None:
            p = np.full(len(X), self.constant_)
        else:
            p = np.clip(self._score(X), 0.0, 1.0)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)[:, 1]
        return (p > 0.5 if self.strict_majority else p >= 0.5).astype(int)

    def _fit(self, X: np.ndarray, y: np.ndarray) -> None:
        raise NotImplementedError

    def _score(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    def _load_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        check_fitted(self)
        return {
            'algo': self.algo,
            'params': self.get_params(),
            'n_features_in': int(self.n_features_in_),
            'constant': self.constant_,
            'state': None if self.constant_ is not None else self._state(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'CamModel':
        model = cls(**payload['params'])
        model.n_features_in_ = payload['n_features_in']
        model.classes_ = np.array([0, 1])
        model.constant_ = payload['constant']
        if model.constant_ is None:
            model._load_state(payload['state'])
        return model


class ScaledCamModel(CamModel):
    """Standardizes inputs before the margin or network sees them."""

    def _fit(self, X, y):
        self.scaler_ = StandardScaler().fit(X)
        self._fit_scaled(self.scaler_.transform(X), y)

    def _score(self, X):
        return self._score_scaled(self.scaler_.transform(X))

    def _state(self):
        return {'scaler': scaler_to_dict(self.scaler_), **self._scaled_state()}

    def _load_state(self, state):
        self.scaler_ = scaler_from_dict(state['scaler'])
        self._load_scaled_state(state)
