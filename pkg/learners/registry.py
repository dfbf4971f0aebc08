import json
import logging
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from django.conf import settings

from .base import CamModel, Dataset, LearnerError
from .kernel import RbfSvmCam
from .linear import LinearSvmCam, LogisticRegressionCam
from .neural import MlpCam
from .trees import DecisionTreeCam, GradientBoostedCam, RandomForestCam

logger = logging.getLogger(__name__)

LEARNERS = {
    cls.algo: cls
    for cls in (DecisionTreeCam, RandomForestCam, GradientBoostedCam, LogisticRegressionCam,
                LinearSvmCam, RbfSvmCam, MlpCam)
}


def default_hyperparams(algo: str) -> dict:
    return dict(settings.MELE_LAB['CAM']['HYPERPARAMS'].get(algo, {}))


def build(algo: str, hyper: Optional[Mapping] = None, seed: int = 0) -> CamModel:
    if algo not in LEARNERS:
        raise LearnerError(f"unknown CAM algorithm '{algo}', expected one of {', '.join(LEARNERS)}")
    params = default_hyperparams(algo)
    params.update(hyper or {})
    params['random_state'] = seed
    try:
        return LEARNERS[algo](**params)
    except TypeError as exc:
        raise LearnerError(f"bad hyperparameters for {algo}: {exc}") from None


def fit(algo: str, ds: Dataset, hyper: Optional[Mapping] = None, seed: int = 0) -> CamModel:
    """Train one CAM; settings defaults are overridden by ``hyper``."""
    model = build(algo, hyper, seed)
    model.fit(ds.X, ds.y)
    logger.debug("fitted %s on %d rows x %d features", algo, len(ds), ds.arity)
    return model


def predict_proba(model: CamModel, x) -> np.ndarray:
    """Positive-class scores for a row or a matrix."""
    scores = model.predict_proba(x)[:, 1]
    return scores


def model_from_dict(payload: Mapping) -> CamModel:
    algo = payload.get('algo')
    if algo not in LEARNERS:
        raise LearnerError(f"unknown CAM algorithm '{algo}' in model file")
    return LEARNERS[algo].from_dict(payload)


def save_model(model: CamModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True) + '\n', encoding='utf-8')
    return path


def load_model(path) -> CamModel:
    with open(path, encoding='utf-8') as fh:
        return model_from_dict(json.load(fh))
