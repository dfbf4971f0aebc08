import logging
from dataclasses import dataclass
from typing import Set, Tuple

import numpy as np
from django.conf import settings

from .house_utils import HouseGraph, UnknownNodeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseParams:
    """Detector model: per-object hit rate and per-foreign-object false alarm rate."""
    p_detect: float = 0.9
    p_false: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ('p_detect', 'p_false'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} = {value} is outside [0, 1]")

    @classmethod
    def from_settings(cls, **overrides) -> 'NoiseParams':
        defaults = settings.MELE_LAB['NOISE']
        values = {
            'p_detect': defaults['P_DETECT'],
            'p_false': defaults['P_FALSE'],
            'seed': defaults['SEED'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def noiseless(cls, seed: int = 0) -> 'NoiseParams':
        return cls(p_detect=1.0, p_false=0.0, seed=seed)


def detect_at_node(house: HouseGraph, node: int, params: NoiseParams,
                   step: int) -> Set[Tuple[int, int]]:
    """
    Noisy object detection at ``node``. Every detection is tagged with the
    node's room; true objects survive with ``p_detect`` and every other
    catalog object shows up with ``p_false``.
    """
    if node not in house.node_room:
        raise UnknownNodeError(f"unknown node {node}")
    room = house.node_room[node]
    present = house.placements.get(room, frozenset())

    # one stream per (seed, node, step) so visit order never shifts other draws
    rng = np.random.default_rng([params.seed, node, step])
    draws = rng.random(len(house.object_catalog))

    detections = set()
    for draw, oid in zip(draws, house.object_catalog):
        threshold = params.p_detect if oid in present else params.p_false
        if draw < threshold:
            detections.add((room, oid))
    return detections
