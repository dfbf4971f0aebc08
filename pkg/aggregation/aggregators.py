import logging
from typing import Optional, Sequence

import numpy as np

from environment.house_utils import HouseGraph
from learners.base import check_fitted

logger = logging.getLogger(__name__)


class AggregationError(ValueError):
    pass


class WrongArity(AggregationError):
    pass


def majority_vote(answers: Sequence[int], tie_break: int = 0) -> int:
    """Strict majority of 0/1 answers; an even split returns ``tie_break``."""
    if len(answers) == 0:
        raise AggregationError("majority vote over no answers")
    ones = int(np.sum(answers))
    zeros = len(answers) - ones
    if ones == zeros:
        return tie_break
    return 1 if ones > zeros else 0


def featurize(q, answers: Sequence[int], k: Optional[int] = None,
              house: Optional[HouseGraph] = None) -> np.ndarray:
    """``[o, r, s_1 .. s_K]`` as a float row."""
    if k is not None and len(answers) != k:
        raise WrongArity(f"expected {k} agent answers, got {len(answers)}")
    if house is not None:
        if q.o not in house.object_catalog:
            raise AggregationError(f"object id {q.o} not in catalog")
        if q.r not in house.rooms:
            raise AggregationError(f"room id {q.r} not in catalog")
    if any(a not in (0, 1) for a in answers):
        raise AggregationError(f"answers must be 0/1, got {list(answers)}")
    return np.array([q.o, q.r, *answers], dtype=float)


def feature_matrix(queries, answer_matrix: np.ndarray) -> np.ndarray:
    """Stack featurized rows; ``answer_matrix`` is queries x agents."""
    answer_matrix = np.asarray(answer_matrix, dtype=float)
    objects = np.array([q.o for q in queries], dtype=float)
    rooms = np.array([q.r for q in queries], dtype=float)
    return np.column_stack([objects, rooms, answer_matrix])


def cam_infer(model, q, answers: Sequence[int]) -> int:
    """
    Single-query CAM prediction. The model fixes K: its feature count less
    the object and room columns.
    """
    check_fitted(model)
    x = featurize(q, answers, k=model.n_features_in_ - 2)
    return int(model.predict(x[np.newaxis, :])[0])
