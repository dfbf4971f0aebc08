import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from environment.house_utils import HouseGraph, containing_rooms

from .serializers import QueryLineSerializer, SplitSerializer

logger = logging.getLogger(__name__)


class QueryGenerationError(ValueError):
    def __init__(self, message, objects=()):
        super().__init__(message)
        self.objects = list(objects)


class QuerySetError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    o: int
    r: int
    y: int


@dataclass(frozen=True)
class Split:
    train: Tuple[int, ...]
    test: Tuple[int, ...]
    seed: int


@dataclass
class QuerySet:
    queries: List[Query] = field(default_factory=list)
    split: Optional[Split] = None

    def __len__(self):
        return len(self.queries)

    def __iter__(self) -> Iterator[Query]:
        return iter(self.queries)

    def __getitem__(self, index) -> Query:
        return self.queries[index]

    @property
    def labels(self) -> np.ndarray:
        return np.array([q.y for q in self.queries], dtype=int)

    @property
    def positives(self) -> int:
        return sum(q.y for q in self.queries)

    @property
    def negatives(self) -> int:
        return len(self.queries) - self.positives

    def is_balanced(self) -> bool:
        return self.positives == self.negatives

    def _require_split(self) -> Split:
        if self.split is None:
            raise QuerySetError("query set has no train/test split")
        return self.split

    @property
    def train_indices(self) -> Tuple[int, ...]:
        return self._require_split().train

    @property
    def test_indices(self) -> Tuple[int, ...]:
        return self._require_split().test


def generate_queries(house: HouseGraph, seed: int, skip_saturated: bool = False) -> QuerySet:
    """
    One positive query per ground-truth placement, each paired with a negative
    for the same object in a random room that does not contain it.
    """
    rooms = sorted(house.rooms)
    if len(rooms) < 2:
        raise QueryGenerationError("query generation needs at least two rooms")
    if house.num_placements == 0:
        raise QueryGenerationError("house has no object placements")

    placed = sorted({oid for objs in house.placements.values() for oid in objs})
    saturated = [oid for oid in placed if len(containing_rooms(house, oid)) == len(rooms)]
    if saturated:
        names = [house.object_catalog[oid] for oid in saturated]
        if not skip_saturated:
            raise QueryGenerationError(
                "no negative room for objects present in every room: " + ', '.join(names),
                objects=names)
        logger.warning("dropping objects present in every room: %s", ', '.join(names))
    if len(saturated) == len(placed):
        raise QueryGenerationError("every placed object is in every room")

    rng = np.random.default_rng(seed)
    queries: List[Query] = []
    skipped = 0
    for oid in placed:
        if oid in saturated:
            continue
        holders = containing_rooms(house, oid)
        candidates = [r for r in rooms if r not in holders]
        used = set()
        for room in sorted(holders):
            negative = None
            for _ in range(len(rooms)):
                draw = candidates[int(rng.integers(len(candidates)))]
                if draw not in used:
                    negative = draw
                    break
            if negative is None:
                skipped += 1
                continue
            used.add(negative)
            queries.append(Query(oid, room, 1))
            queries.append(Query(oid, negative, 0))
    if skipped:
        logger.warning("skipped %d placements whose negative room collided %d times",
                       skipped, len(rooms))
    logger.debug("generated %d queries (seed %s)", len(queries), seed)
    return QuerySet(queries)


def train_test_split(qs: QuerySet, test_fraction: float, seed: int) -> QuerySet:
    n = len(qs)
    if n == 0:
        raise QuerySetError("empty query set")
    if n < 2:
        raise QuerySetError("need at least two queries to split")
    if not 0.0 < test_fraction < 1.0:
        raise QuerySetError(f"test_fraction {test_fraction} must lie strictly between 0 and 1")

    order = np.random.default_rng(seed).permutation(n)
    n_test = min(n - 1, max(1, round(test_fraction * n)))
    split = Split(
        train=tuple(sorted(int(i) for i in order[n_test:])),
        test=tuple(sorted(int(i) for i in order[:n_test])),
        seed=seed,
    )
    return replace(qs, split=split)


def filter_by_room(qs: QuerySet, room: int) -> QuerySet:
    return QuerySet([q for q in qs if q.r == room])


def save_queries(qs: QuerySet, house: HouseGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        for q in qs:
            line = {'object': house.object_catalog[q.o], 'room': house.room_name(q.r), 'label': q.y}
            fh.write(json.dumps(line, sort_keys=True) + '\n')
    return path


def load_queries(path, house: HouseGraph) -> QuerySet:
    queries = []
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            serializer = QueryLineSerializer(data=json.loads(raw))
            if not serializer.is_valid():
                raise QuerySetError(f"{path}:{lineno}: {dict(serializer.errors)}")
            data = serializer.validated_data
            queries.append(Query(house.object_id(data['object']), house.room_id(data['room']),
                                 data['label']))
    return QuerySet(queries)


def save_split(split: Split, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {'seed': split.seed, 'test_indices': list(split.test)}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    return path


def load_split(path, qs: QuerySet) -> QuerySet:
    with open(path, encoding='utf-8') as fh:
        serializer = SplitSerializer(data=json.load(fh), context={'size': len(qs)})
    if not serializer.is_valid():
        raise QuerySetError(f"malformed split file {path}: {dict(serializer.errors)}")
    test = sorted(set(serializer.validated_data['test_indices']))
    train = [i for i in range(len(qs)) if i not in set(test)]
    split = Split(train=tuple(train), test=tuple(test), seed=serializer.validated_data['seed'])
    return replace(qs, split=split)


def rows_for(indices: Sequence[int], qs: QuerySet) -> List[Query]:
    return [qs[i] for i in indices]
