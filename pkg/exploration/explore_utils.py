import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from answering.llm_client import LLMBackendError
from environment.house_utils import HouseGraph, UnknownNodeError
from environment.perception import NoiseParams, detect_at_node
from melelab import prompts

logger = logging.getLogger(__name__)

POLICY_KINDS = ('random_walk', 'greedy_novelty', 'llm_guided', 'scripted')


class ExplorationError(RuntimeError):
    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript or []


@dataclass
class ObservationDict:
    """One agent's memory: items seen per room and the visit order."""
    room_items: Dict[int, Set[int]] = field(default_factory=dict)
    trajectory: List[Tuple[int, int]] = field(default_factory=list)
    transcript: List[dict] = field(default_factory=list)

    def merge(self, detections: Iterable[Tuple[int, int]]) -> None:
        for room, oid in detections:
            self.room_items.setdefault(room, set()).add(oid)

    def items_in(self, room: int) -> Set[int]:
        return self.room_items.get(room, set())

    def seen(self, room: int, oid: int) -> bool:
        return oid in self.room_items.get(room, ())

    def named(self, house: HouseGraph) -> Dict[str, List[str]]:
        """The ``{ROOM NAME: [ITEMS]}`` dictionary the prompts are built from."""
        return {
            house.room_name(room): sorted(house.object_catalog[oid] for oid in items)
            for room, items in sorted(self.room_items.items())
        }

    def prompt_text(self, house: HouseGraph) -> str:
        return json.dumps(self.named(house))

    def to_dict(self, house: HouseGraph) -> dict:
        return {
            'observations': self.named(house),
            'trajectory': [[step, node] for step, node in self.trajectory],
        }

    @classmethod
    def from_dict(cls, payload: Mapping, house: HouseGraph) -> 'ObservationDict':
        if 'observations' in payload:
            named, trajectory = payload['observations'], payload.get('trajectory', [])
        else:
            named, trajectory = payload, []
        obs = cls(trajectory=[(int(step), int(node)) for step, node in trajectory])
        for room_name, items in named.items():
            room = house.room_id(room_name)
            obs.room_items[room] = {house.object_id(name) for name in items}
        obs.check(house)
        return obs

    def check(self, house: HouseGraph) -> None:
        for room, items in self.room_items.items():
            if room not in house.rooms:
                raise ExplorationError(f"observation names unknown room id {room}")
            unknown = sorted(items - set(house.object_catalog))
            if unknown:
                raise ExplorationError(f"observation names unknown object id {unknown[0]}")
        for idx, (step, node) in enumerate(self.trajectory):
            if step != idx:
                raise ExplorationError(f"trajectory step {step} out of order at position {idx}")
            if node not in house.node_room:
                raise ExplorationError(f"trajectory visits unknown node {node}")
        for (_, a), (_, b) in zip(self.trajectory, self.trajectory[1:]):
            if a != b and b not in house.neighbors(a):
                raise ExplorationError(f"trajectory moves between non-adjacent nodes {a} and {b}")


def save_observations(obs: ObservationDict, house: HouseGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obs.to_dict(house), sort_keys=True, indent=2) + '\n',
                    encoding='utf-8')
    return path


def load_observations(path, house: HouseGraph) -> ObservationDict:
    with open(path, encoding='utf-8') as fh:
        return ObservationDict.from_dict(json.load(fh), house)


@dataclass(frozen=True)
class Policy:
    kind: str = 'greedy_novelty'
    params: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ExplorationError(
                f"unknown policy '{self.kind}', expected one of {', '.join(POLICY_KINDS)}")
        if self.kind == 'scripted' and not self.params.get('nodes'):
            raise ExplorationError("scripted policy needs params['nodes']")


def _novelty_score(house, node, visited, visited_per_room):
    room = house.room_of(node)
    unvisited_in_room = len(house.nodes_in_room(room)) - visited_per_room.get(room, 0)
    return (unvisited_in_room, 0 if node in visited else 1)


def _greedy_choice(house, candidates, visited, visited_per_room):
    # max score; lowest node id on ties since candidates are sorted
    best, best_score = None, None
    for nbr in candidates:
        score = _novelty_score(house, nbr, visited, visited_per_room)
        if best_score is None or score > best_score:
            best, best_score = nbr, score
    return best


def _parse_room_choice(reply: str, choices: Sequence[str]) -> Optional[str]:
    text = reply.lower()
    hits = []
    for name in choices:
        match = re.search(r'\b' + re.escape(name.lower()) + r'\b', text)
        if match:
            hits.append((match.start(), -len(name), name))
    return min(hits)[2] if hits else None


class _Walker:
    def __init__(self, house, start, policy, noise, client):
        self.house = house
        self.policy = policy
        self.noise = noise
        self.client = client
        self.rng = np.random.default_rng([policy.seed, start])
        self.obs = ObservationDict()
        self.visited: Set[int] = set()
        self.visited_per_room: Dict[int, int] = {}

    def visit(self, step, node):
        self.obs.trajectory.append((step, node))
        if node not in self.visited:
            self.visited.add(node)
            room = self.house.room_of(node)
            self.visited_per_room[room] = self.visited_per_room.get(room, 0) + 1
        self.obs.merge(detect_at_node(self.house, node, self.noise, step))

    def next_node(self, step, current):
        neighbors = self.house.neighbors(current)
        if not neighbors:
            return current
        kind = self.policy.kind
        if kind == 'random_walk':
            return int(self.rng.choice(neighbors))
        if kind == 'greedy_novelty':
            return _greedy_choice(self.house, neighbors, self.visited, self.visited_per_room)
        if kind == 'llm_guided':
            return self._ask_llm(current, neighbors)
        return self.policy.params['nodes'][step]

    def _ask_llm(self, current, neighbors):
        house = self.house
        by_room: Dict[str, List[int]] = {}
        for nbr in neighbors:
            by_room.setdefault(house.room_name(house.room_of(nbr)), []).append(nbr)
        choices = sorted(by_room)
        messages = [
            {'role': 'system', 'content': prompts.EXPLORATION_SYSTEM_PROMPT},
            {'role': 'user', 'content': prompts.EXPLORATION_USER_TEMPLATE.format(
                current_room=house.room_name(house.room_of(current)),
                observations=self.obs.prompt_text(house),
                choices=', '.join(choices),
            )},
        ]
        for attempt in range(2):
            try:
                reply = self.client.chat(messages)
            except LLMBackendError as exc:
                raise ExplorationError(f"chat backend failed during exploration: {exc}",
                                       transcript=self.obs.transcript + messages) from exc
            messages = messages + [{'role': 'assistant', 'content': reply}]
            picked = _parse_room_choice(reply, choices)
            if picked is not None:
                self.obs.transcript.extend(messages)
                return _greedy_choice(house, by_room[picked], self.visited, self.visited_per_room)
            if attempt == 0:
                messages.append({'role': 'user', 'content': prompts.EXPLORATION_REPROMPT.format(
                    choices=', '.join(choices))})
        self.obs.transcript.extend(messages)
        logger.warning("exploration reply named no neighbouring room at node %s; "
                       "falling back to greedy novelty", current)
        return _greedy_choice(house, neighbors, self.visited, self.visited_per_room)


def _check_script(house, start, nodes, steps):
    if nodes[0] != start:
        raise ExplorationError(f"scripted trajectory starts at {nodes[0]}, not at start node {start}")
    if steps > len(nodes) - 1:
        raise ExplorationError(f"scripted trajectory has {len(nodes) - 1} moves, {steps} requested")
    for a, b in zip(nodes, nodes[1:steps + 1]):
        if b not in house.node_room:
            raise ExplorationError(f"scripted trajectory visits unknown node {b}")
        if a != b and b not in house.neighbors(a):
            raise ExplorationError(f"scripted trajectory not graph-valid: {a} -> {b}")


def explore_run(house: HouseGraph, start: int, policy: Policy, steps: int,
                noise: NoiseParams, client=None) -> ObservationDict:
    """Walk ``steps`` moves from ``start`` and collect detections at every visited node."""
    if start not in house.node_room:
        raise UnknownNodeError(f"unknown start node {start}")
    if steps < 0:
        raise ExplorationError("steps must be non-negative")
    if policy.kind == 'scripted':
        _check_script(house, start, list(policy.params['nodes']), steps)
    if policy.kind == 'llm_guided' and client is None:
        raise ExplorationError("llm_guided exploration needs a chat client")

    walker = _Walker(house, start, policy, noise, client)
    current = start
    walker.visit(0, current)
    for step in range(1, steps + 1):
        current = walker.next_node(step, current)
        walker.visit(step, current)
    logger.debug("explored %d steps from node %s with %s: %d rooms seen",
                 steps, start, policy.kind, len(walker.obs.room_items))
    return walker.obs


def oracle_observations(house: HouseGraph, rooms: Iterable[int]) -> ObservationDict:
    """Perfect knowledge of the given rooms and nothing else."""
    obs = ObservationDict()
    for room in sorted(set(rooms)):
        if room not in house.rooms:
            raise ExplorationError(f"unknown room id {room}")
        obs.room_items[room] = set(house.placements.get(room, ()))
    return obs
