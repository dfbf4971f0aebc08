import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.inspection import permutation_importance
from sklearn.metrics import accuracy_score

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


def _binary_pair(a, b, what):
    a, b = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
    if len(a) == 0 or len(b) == 0:
        raise MetricError(f"{what} of empty vectors")
    if len(a) != len(b):
        raise MetricError(f"{what}: length mismatch {len(a)} != {len(b)}")
    return a, b


def accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    preds, labels = _binary_pair(preds, labels, 'accuracy')
    return float(accuracy_score(labels, preds))


def agreement(s_k: Sequence[int], finals: Sequence[int]) -> float:
    """Share of queries on which one agent's answer matches the aggregate."""
    s_k, finals = _binary_pair(s_k, finals, 'agreement')
    return float(np.mean(s_k == finals))


def _importances(model, val, repeats, seed):
    if repeats < 1:
        raise MetricError("repeats must be at least 1")
    result = permutation_importance(model, val.X, val.y, scoring='accuracy',
                                    n_repeats=repeats, random_state=seed)
    return result.importances


def pfi(model, val, i: int, repeats: int = 5, seed: int = 0) -> float:
    """``|a_val - mean permuted a_val|`` for feature column ``i``."""
    if not 0 <= i < val.arity:
        raise MetricError(f"feature index {i} out of range for arity {val.arity}")
    return float(abs(_importances(model, val, repeats, seed)[i].mean()))


@dataclass
class PfiReport:
    table: pd.DataFrame
    base_accuracy: float
    repeats: int
    seed: int

    @property
    def values(self) -> np.ndarray:
        return self.table['pfi_mean'].to_numpy()

    def value(self, feature_name: str) -> float:
        return float(self.table.set_index('feature_name').at[feature_name, 'pfi_mean'])

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(path, index=False, float_format='%.6f')
        return path


def pfi_report(model, val, feature_names: Optional[Sequence[str]] = None, repeats: int = 5,
               seed: int = 0) -> PfiReport:
    if feature_names is None:
        feature_names = [f'f{i}' for i in range(val.arity)]
    if len(feature_names) != val.arity:
        raise MetricError(f"{len(feature_names)} names for {val.arity} features")
    raw = _importances(model, val, repeats, seed)
    table = pd.DataFrame({
        'feature_name': list(feature_names),
        'pfi_mean': np.abs(raw.mean(axis=1)),
        'pfi_std': np.abs(raw).std(axis=1),
    })
    base = accuracy(model.predict(val.X), val.y)
    return PfiReport(table=table, base_accuracy=base, repeats=repeats, seed=seed)
