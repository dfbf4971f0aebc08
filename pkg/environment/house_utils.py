import json
import logging
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from django.conf import settings

logger = logging.getLogger(__name__)


# Object label encodings used as the CAM object feature.
OBJECT_LABELS = (
    'appliance', 'armchair', 'bathtub', 'bed', 'board', 'bookcase', 'books',
    'cabinet', 'chair', 'clothes', 'counter', 'curtain', 'cushion', 'desk',
    'dresser', 'dumbells', 'hairbrush', 'headphones', 'jumprope', 'mirror',
    'mug', 'nightstand', 'phone', 'picture', 'plant', 'playing cards',
    'refrigerator', 'sink', 'sofa', 'table', 'television', 'toilet',
    'toothbrush', 'towel', 'tv remote', 'wallet', 'water bottle', 'whiteboard',
    'window', 'wristwatch',
)

ROOM_TYPES = (
    'kitchen', 'dining room', 'living room', 'bedroom', 'bathroom', 'office',
    'hallway',
)

# Common-sense placement probabilities; unlisted pairs are 0.
_ROOM_PRIORS = {
    'kitchen': {
        'appliance': 0.9, 'cabinet': 0.9, 'counter': 0.9, 'refrigerator': 0.85,
        'sink': 0.9, 'mug': 0.7, 'table': 0.5, 'chair': 0.5, 'window': 0.6,
        'water bottle': 0.4, 'towel': 0.3, 'plant': 0.2, 'picture': 0.2,
        'phone': 0.1, 'board': 0.1,
    },
    'dining room': {
        'table': 0.9, 'chair': 0.9, 'picture': 0.6, 'window': 0.6,
        'cabinet': 0.4, 'plant': 0.4, 'curtain': 0.4, 'mug': 0.3,
        'water bottle': 0.2, 'mirror': 0.2, 'playing cards': 0.15,
        'appliance': 0.1,
    },
    'living room': {
        'sofa': 0.9, 'cushion': 0.8, 'television': 0.8, 'tv remote': 0.7,
        'picture': 0.7, 'window': 0.7, 'armchair': 0.6, 'table': 0.6,
        'curtain': 0.6, 'plant': 0.5, 'bookcase': 0.4, 'books': 0.4,
        'chair': 0.3, 'playing cards': 0.2, 'phone': 0.2, 'headphones': 0.1,
    },
    'bedroom': {
        'bed': 0.95, 'nightstand': 0.8, 'clothes': 0.7, 'window': 0.7,
        'dresser': 0.6, 'curtain': 0.6, 'mirror': 0.5, 'cushion': 0.5,
        'picture': 0.4, 'wristwatch': 0.3, 'wallet': 0.3, 'phone': 0.3,
        'hairbrush': 0.3, 'books': 0.3, 'water bottle': 0.3,
        'television': 0.2, 'chair': 0.2, 'headphones': 0.2, 'dumbells': 0.1,
        'jumprope': 0.05,
    },
    'bathroom': {
        'toilet': 0.95, 'sink': 0.9, 'towel': 0.85, 'mirror': 0.85,
        'toothbrush': 0.8, 'bathtub': 0.6, 'cabinet': 0.5, 'hairbrush': 0.4,
        'window': 0.3, 'plant': 0.1,
    },
    'office': {
        'desk': 0.9, 'chair': 0.9, 'books': 0.7, 'bookcase': 0.6,
        'window': 0.6, 'phone': 0.5, 'whiteboard': 0.4, 'headphones': 0.4,
        'mug': 0.4, 'water bottle': 0.4, 'plant': 0.4, 'cabinet': 0.4,
        'board': 0.3, 'picture': 0.3, 'wallet': 0.1, 'wristwatch': 0.1,
        'dumbells': 0.05, 'jumprope': 0.05,
    },
    'hallway': {
        'picture': 0.5, 'mirror': 0.3, 'plant': 0.3, 'window': 0.3,
        'cabinet': 0.2, 'clothes': 0.2, 'board': 0.1, 'wallet': 0.1,
        'dumbells': 0.1, 'jumprope': 0.1,
    },
}

DEFAULT_PRIOR_TABLE = {
    (room_type, obj): p
    for room_type, priors in _ROOM_PRIORS.items()
    for obj, p in priors.items()
}


class HouseValidationError(ValueError):
    """A house (generated, loaded or imported) breaks a graph invariant."""


class GenConfigError(ValueError):
    pass


class UnknownNodeError(KeyError):
    pass


class UnknownObjectError(KeyError):
    pass


@dataclass(frozen=True)
class RoomInfo:
    name: str
    type_label: str


@dataclass(frozen=True)
class HouseGraph:
    """
    Topological household: nodes grouped into rooms, plus the ground-truth
    object placements the queries are built from. Immutable once built.
    """
    nodes: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]
    node_room: Mapping[int, int]
    rooms: Mapping[int, RoomInfo]
    placements: Mapping[int, FrozenSet[int]]
    object_catalog: Mapping[int, str]
    seed: Optional[int] = None

    @cached_property
    def adjacency(self) -> Dict[int, Tuple[int, ...]]:
        adj: Dict[int, Set[int]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {n: tuple(sorted(nbrs)) for n, nbrs in adj.items()}

    @cached_property
    def room_catalog(self) -> Dict[int, str]:
        return {rid: info.name for rid, info in self.rooms.items()}

    @cached_property
    def _object_ids(self) -> Dict[str, int]:
        return {name: oid for oid, name in self.object_catalog.items()}

    @cached_property
    def _room_ids(self) -> Dict[str, int]:
        return {info.name: rid for rid, info in self.rooms.items()}

    def neighbors(self, node: int) -> Tuple[int, ...]:
        if node not in self.adjacency:
            raise UnknownNodeError(f"unknown node {node}")
        return self.adjacency[node]

    def room_of(self, node: int) -> int:
        try:
            return self.node_room[node]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node}") from None

    def room_type(self, room: int) -> str:
        return self.rooms[room].type_label

    def room_name(self, room: int) -> str:
        return self.rooms[room].name

    def nodes_in_room(self, room: int) -> List[int]:
        return [n for n in self.nodes if self.node_room[n] == room]

    def object_id(self, name: str) -> int:
        try:
            return self._object_ids[name]
        except KeyError:
            raise UnknownObjectError(f"unknown object '{name}'") from None

    def room_id(self, name: str) -> int:
        try:
            return self._room_ids[name]
        except KeyError:
            raise HouseValidationError(f"unknown room '{name}'") from None

    @property
    def num_placements(self) -> int:
        return sum(len(objs) for objs in self.placements.values())


@dataclass
class GenConfig:
    num_rooms: int = 8
    nodes_per_room: Tuple[int, int] = (2, 4)
    room_type_mix: Sequence[str] = ROOM_TYPES
    prior_table: Optional[Mapping[Tuple[str, str], float]] = None
    seed: int = 0
    objects: Optional[Sequence[str]] = None
    extra_edge_prob: float = 0.3
    default_prior: float = 0.0
    num_objects: Optional[int] = None

    @classmethod
    def from_settings(cls, **overrides) -> 'GenConfig':
        defaults = settings.MELE_LAB['HOUSE']
        values = {
            'num_rooms': defaults['NUM_ROOMS'],
            'nodes_per_room': tuple(defaults['NODES_PER_ROOM']),
            'room_type_mix': tuple(defaults['ROOM_TYPE_MIX']),
            'extra_edge_prob': defaults['EXTRA_EDGE_PROB'],
            'seed': defaults['SEED'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_payload(cls, data: Mapping) -> 'GenConfig':
        """Build from GenConfigSerializer data; ``uniform_prior`` replaces the table."""
        data = dict(data)
        uniform = data.pop('uniform_prior', None)
        if uniform is not None:
            data['prior_table'] = {}
            data['default_prior'] = uniform
        if 'nodes_per_room' in data:
            data['nodes_per_room'] = tuple(data['nodes_per_room'])
        if 'room_type_mix' in data:
            data['room_type_mix'] = tuple(data['room_type_mix'])
        return cls.from_settings(**data)

    @property
    def priors(self) -> Mapping[Tuple[str, str], float]:
        return DEFAULT_PRIOR_TABLE if self.prior_table is None else self.prior_table

    def prior(self, room_type: str, obj: str) -> float:
        return self.priors.get((room_type, obj), self.default_prior)

    def validate(self) -> None:
        if self.num_rooms < 1:
            raise GenConfigError("num_rooms must be at least 1")
        lo, hi = self.nodes_per_room
        if lo < 1 or hi < lo:
            raise GenConfigError(f"invalid nodes_per_room range {self.nodes_per_room}")
        if not self.room_type_mix:
            raise GenConfigError("room_type_mix is empty")
        if self.num_objects is not None and self.num_objects < 1:
            raise GenConfigError("num_objects must be at least 1")
        for key, p in self.priors.items():
            if not 0.0 <= p <= 1.0:
                raise GenConfigError(f"prior {key} = {p} is outside [0, 1]")
        for name, p in (('default_prior', self.default_prior),
                        ('extra_edge_prob', self.extra_edge_prob)):
            if not 0.0 <= p <= 1.0:
                raise GenConfigError(f"{name} = {p} is outside [0, 1]")


def build_object_catalog(names) -> Dict[int, str]:
    """Known labels keep their table encoding; anything else gets ids from 40 up."""
    names = set(names)
    catalog = {OBJECT_LABELS.index(n): n for n in names if n in OBJECT_LABELS}
    next_id = len(OBJECT_LABELS)
    for name in sorted(names - set(OBJECT_LABELS)):
        catalog[next_id] = name
        next_id += 1
    return dict(sorted(catalog.items()))


def numbered_labels(n: int) -> List[str]:
    """The first ``n`` table labels, padded with ``item NNN`` past the table."""
    return list(OBJECT_LABELS[:n]) + [f"item {i:03d}" for i in range(len(OBJECT_LABELS), n)]


def _room_names(type_sequence: Sequence[str]) -> List[Tuple[str, str]]:
    seen = Counter()
    named = []
    for room_type in type_sequence:
        seen[room_type] += 1
        name = room_type if seen[room_type] == 1 else f"{room_type} {seen[room_type]}"
        named.append((name, room_type))
    # RoomId is the position in sorted room-name order
    return sorted(named)


def generate_house(cfg: GenConfig) -> HouseGraph:
    """Build a connected synthetic house; a pure function of ``cfg``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    if cfg.objects is not None:
        object_names = set(cfg.objects)
    elif cfg.num_objects is not None:
        object_names = set(numbered_labels(cfg.num_objects))
    else:
        object_names = set(OBJECT_LABELS) | {obj for _, obj in cfg.priors}
    catalog = build_object_catalog(object_names)

    types = [cfg.room_type_mix[i % len(cfg.room_type_mix)] for i in range(cfg.num_rooms)]
    rooms = {rid: RoomInfo(name, t) for rid, (name, t) in enumerate(_room_names(types))}

    lo, hi = cfg.nodes_per_room
    node_room: Dict[int, int] = {}
    room_nodes: Dict[int, List[int]] = {}
    next_node = 0
    for rid in rooms:
        count = int(rng.integers(lo, hi + 1))
        room_nodes[rid] = list(range(next_node, next_node + count))
        for node in room_nodes[rid]:
            node_room[node] = rid
        next_node += count

    edges = set()
    for rid, members in room_nodes.items():
        for a, b in zip(members, members[1:]):
            edges.add((a, b))
        for i, a in enumerate(members):
            for b in members[i + 2:]:
                if rng.random() < cfg.extra_edge_prob:
                    edges.add((a, b))

    # random spanning tree over rooms keeps the graph connected
    order = rng.permutation(len(rooms))
    for idx in range(1, len(order)):
        child = int(order[idx])
        parent = int(order[int(rng.integers(idx))])
        a = int(rng.choice(room_nodes[child]))
        b = int(rng.choice(room_nodes[parent]))
        edges.add((min(a, b), max(a, b)))

    placements = {}
    for rid, info in rooms.items():
        placed = set()
        for oid, name in catalog.items():
            if rng.random() < cfg.prior(info.type_label, name):
                placed.add(oid)
        placements[rid] = frozenset(placed)

    house = HouseGraph(
        nodes=tuple(range(next_node)),
        edges=tuple(sorted(edges)),
        node_room=node_room,
        rooms=rooms,
        placements=placements,
        object_catalog=catalog,
        seed=cfg.seed,
    )
    validate_house(house)
    logger.debug("generated house seed=%s rooms=%d nodes=%d placements=%d",
                 cfg.seed, len(rooms), next_node, house.num_placements)
    return house


def containing_rooms(house: HouseGraph, o: int) -> Set[int]:
    """Rooms whose ground-truth placements include object ``o``."""
    if o not in house.object_catalog:
        raise UnknownObjectError(f"unknown object id {o}")
    return {rid for rid, objs in house.placements.items() if o in objs}


def validate_house(house: HouseGraph) -> None:
    """Raise HouseValidationError naming the first offending entity."""
    if not house.nodes:
        raise HouseValidationError("house has no nodes")
    if len(set(house.nodes)) != len(house.nodes):
        raise HouseValidationError("duplicate node ids")
    node_set = set(house.nodes)

    for node in house.nodes:
        if node not in house.node_room:
            raise HouseValidationError(f"node {node} has no room")
    for node, rid in house.node_room.items():
        if node not in node_set:
            raise HouseValidationError(f"dangling node id {node} in node_room")
        if rid not in house.rooms:
            raise HouseValidationError(f"dangling room id {rid} on node {node}")
    for a, b in house.edges:
        if a not in node_set or b not in node_set:
            raise HouseValidationError(f"dangling node id in edge ({a}, {b})")

    occupied = set(house.node_room.values())
    for rid, info in house.rooms.items():
        if rid not in occupied:
            raise HouseValidationError(f"room has no nodes: '{info.name}' (id {rid})")

    room_names = Counter(info.name for info in house.rooms.values())
    duplicated = sorted(name for name, count in room_names.items() if count > 1)
    if duplicated:
        raise HouseValidationError(f"catalog not bijective: duplicate room name '{duplicated[0]}'")
    object_names = Counter(house.object_catalog.values())
    duplicated = sorted(name for name, count in object_names.items() if count > 1)
    if duplicated:
        raise HouseValidationError(f"catalog not bijective: duplicate object name '{duplicated[0]}'")

    for rid, objs in house.placements.items():
        if rid not in house.rooms:
            raise HouseValidationError(f"dangling room id {rid} in placements")
        for oid in objs:
            if oid not in house.object_catalog:
                raise HouseValidationError(f"dangling object id {oid} in room {rid}")

    start = house.nodes[0]
    reached = {start}
    frontier = deque([start])
    while frontier:
        for nbr in house.adjacency[frontier.popleft()]:
            if nbr not in reached:
                reached.add(nbr)
                frontier.append(nbr)
    if reached != node_set:
        missing = sorted(node_set - reached)
        raise HouseValidationError(f"graph is disconnected: unreachable nodes {missing[:10]}")


# Persistence

class _DuplicateKeys(dict):
    """JSON object that contained repeated keys."""

    def __init__(self, pairs):
        super().__init__(pairs)
        counts = Counter(k for k, _ in pairs)
        self.duplicates = sorted(k for k, c in counts.items() if c > 1)


def _object_pairs(pairs):
    keys = [k for k, _ in pairs]
    if len(keys) != len(set(keys)):
        return _DuplicateKeys(pairs)
    return dict(pairs)


def house_to_dict(house: HouseGraph) -> dict:
    return {
        'nodes': list(house.nodes),
        'edges': [list(edge) for edge in house.edges],
        'node_room': {str(n): rid for n, rid in house.node_room.items()},
        'rooms': {
            str(rid): {'name': info.name, 'type': info.type_label}
            for rid, info in house.rooms.items()
        },
        'placements': {
            str(rid): [house.object_catalog[oid] for oid in sorted(objs)]
            for rid, objs in house.placements.items()
        },
        'object_catalog': {name: oid for oid, name in house.object_catalog.items()},
        'seed': house.seed,
    }


def dumps_house(house: HouseGraph) -> str:
    return json.dumps(house_to_dict(house), sort_keys=True, indent=2)


def save_house(house: HouseGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_house(house) + '\n', encoding='utf-8')
    return path


def _int_keys(mapping, what):
    try:
        return {int(k): v for k, v in mapping.items()}
    except ValueError:
        raise HouseValidationError(f"malformed house file: non-integer key in {what}") from None


def house_from_dict(payload) -> HouseGraph:
    from .serializers import HouseFileSerializer

    if not isinstance(payload, dict):
        raise HouseValidationError("malformed house file: top level must be an object")
    catalog_raw = payload.get('object_catalog')
    if isinstance(catalog_raw, _DuplicateKeys):
        raise HouseValidationError(
            f"catalog not bijective: duplicate object name '{catalog_raw.duplicates[0]}'")
    for key, value in payload.items():
        if isinstance(value, _DuplicateKeys):
            raise HouseValidationError(
                f"malformed house file: duplicate key '{value.duplicates[0]}' in {key}")

    serializer = HouseFileSerializer(data=payload)
    if not serializer.is_valid():
        raise HouseValidationError(f"malformed house file: {dict(serializer.errors)}")
    data = serializer.validated_data

    catalog = {oid: name for name, oid in data['object_catalog'].items()}
    if len(catalog) != len(data['object_catalog']):
        raise HouseValidationError("catalog not bijective: duplicate object id")
    name_to_id = data['object_catalog']

    rooms = {
        rid: RoomInfo(info['name'], info['type'])
        for rid, info in sorted(_int_keys(data['rooms'], 'rooms').items())
    }
    placements = {rid: frozenset() for rid in rooms}
    for rid, names in _int_keys(data['placements'], 'placements').items():
        unknown = [n for n in names if n not in name_to_id]
        if unknown:
            raise HouseValidationError(f"dangling object id '{unknown[0]}' in room {rid}")
        placements[rid] = frozenset(name_to_id[n] for n in names)

    house = HouseGraph(
        nodes=tuple(data['nodes']),
        edges=tuple(sorted((min(a, b), max(a, b)) for a, b in data['edges'])),
        node_room=_int_keys(data['node_room'], 'node_room'),
        rooms=rooms,
        placements=placements,
        object_catalog=dict(sorted(catalog.items())),
        seed=data.get('seed'),
    )
    validate_house(house)
    return house


def load_house(path) -> HouseGraph:
    try:
        with open(path, encoding='utf-8') as fh:
            payload = json.load(fh, object_pairs_hook=_object_pairs)
    except json.JSONDecodeError as exc:
        raise HouseValidationError(f"malformed house file {path}: {exc}") from exc
    return house_from_dict(payload)


def _base_room_type(room_name: str) -> str:
    return re.sub(r'\s*\d+$', '', room_name.strip())


def import_observations(path) -> HouseGraph:
    """
    Build a house from pre-extracted per-node observations, i.e. a list of
    ``{room name: [item names]}`` records (one per node), optionally wrapped
    as ``{"nodes": [...], "edges": [[a, b], ...]}``. The union of items seen
    in a room becomes its ground truth.
    """
    with open(path, encoding='utf-8') as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        records, edges = payload.get('nodes'), payload.get('edges')
    else:
        records, edges = payload, None
    if not isinstance(records, list) or not records:
        raise HouseValidationError(f"malformed observation file {path}: no node records")

    node_rooms: List[str] = []
    items_by_room: Dict[str, Set[str]] = {}
    for idx, record in enumerate(records):
        if not isinstance(record, dict) or len(record) != 1:
            raise HouseValidationError(f"node record {idx} must map exactly one room to its items")
        (room_name, items), = record.items()
        node_rooms.append(room_name)
        items_by_room.setdefault(room_name, set()).update(items)

    room_ids = {name: rid for rid, name in enumerate(sorted(items_by_room))}
    rooms = {rid: RoomInfo(name, _base_room_type(name)) for name, rid in room_ids.items()}
    catalog = build_object_catalog(set().union(*items_by_room.values()))
    name_to_id = {name: oid for oid, name in catalog.items()}
    node_room = {idx: room_ids[name] for idx, name in enumerate(node_rooms)}

    if edges is None:
        edge_set = set()
        firsts = []
        for rid in sorted(rooms):
            members = [n for n, r in node_room.items() if r == rid]
            edge_set.update(zip(members, members[1:]))
            firsts.append(members[0])
        edge_set.update((min(a, b), max(a, b)) for a, b in zip(firsts, firsts[1:]))
        edges = sorted(edge_set)

    house = HouseGraph(
        nodes=tuple(range(len(records))),
        edges=tuple(sorted((min(a, b), max(a, b)) for a, b in edges)),
        node_room=node_room,
        rooms=rooms,
        placements={
            room_ids[name]: frozenset(name_to_id[i] for i in items)
            for name, items in items_by_room.items()
        },
        object_catalog=catalog,
        seed=None,
    )
    validate_house(house)
    logger.info("imported %d nodes in %d rooms from %s", len(records), len(rooms), path)
    return house
