import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from answering.llm_client import LLMBackendError
from environment.house_utils import GenConfig, UnknownNodeError, generate_house
from environment.perception import NoiseParams
from environment.tests import make_house
from melelab import prompts

from .explore_utils import (
    ExplorationError, ObservationDict, Policy, explore_run, load_observations,
    oracle_observations, save_observations,
)

NOISELESS = NoiseParams.noiseless()


class ScriptedClient:
    """Stands in for ChatClient: replays canned replies and records requests."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def chat(self, messages):
        self.requests.append(list(messages))
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def path_house(length=10):
    names = tuple(f'room {i:02d}' for i in range(length))
    return make_house({0: ['mug'], length - 1: ['sofa']}, room_names=names)


class ExploreRunTests(SimpleTestCase):
    def test_zero_steps_only_sees_start(self):
        house = path_house()
        obs = explore_run(house, 0, Policy('greedy_novelty'), 0, NOISELESS)
        self.assertEqual(obs.trajectory, [(0, 0)])
        self.assertEqual(obs.room_items, {0: {house.object_id('mug')}})

    def test_greedy_walks_a_path_in_order(self):
        house = path_house()
        obs = explore_run(house, 0, Policy('greedy_novelty'), 9, NOISELESS)
        self.assertEqual([node for _, node in obs.trajectory], list(range(10)))

    def test_greedy_prefers_rooms_with_unvisited_nodes(self):
        # node 0 (room a) touches node 1 (room b, one node) and node 2 (room c, two nodes)
        house = make_house({}, room_names=('a', 'b', 'c'), nodes_per_room=1)
        house = house.__class__(
            nodes=(0, 1, 2, 3), edges=((0, 1), (0, 2), (2, 3)),
            node_room={0: 0, 1: 1, 2: 2, 3: 2}, rooms=house.rooms,
            placements=house.placements, object_catalog=house.object_catalog,
        )
        obs = explore_run(house, 0, Policy('greedy_novelty'), 1, NOISELESS)
        self.assertEqual(obs.trajectory[1], (1, 2))

    def test_stationary_script(self):
        house = make_house({0: ['bed', 'lamp'], 1: ['mug']})
        obs = explore_run(house, 0, Policy('scripted', {'nodes': [0, 0, 0]}), 2, NOISELESS)
        self.assertEqual(obs.named(house), {'bedroom': ['bed', 'lamp']})

    def test_script_must_follow_edges(self):
        house = path_house()
        with self.assertRaises(ExplorationError):
            explore_run(house, 0, Policy('scripted', {'nodes': [0, 2]}), 1, NOISELESS)
        with self.assertRaises(ExplorationError):
            explore_run(house, 0, Policy('scripted', {'nodes': [1, 2]}), 1, NOISELESS)
        with self.assertRaises(ExplorationError):
            explore_run(house, 0, Policy('scripted', {'nodes': [0, 1]}), 3, NOISELESS)

    def test_unknown_start(self):
        with self.assertRaises(UnknownNodeError):
            explore_run(path_house(), 99, Policy(), 3, NOISELESS)

    def test_random_walk_is_reproducible_and_graph_valid(self):
        house = generate_house(GenConfig(seed=3))
        noise = NoiseParams(0.7, 0.05, 2)
        a = explore_run(house, 0, Policy('random_walk', seed=5), 25, noise)
        b = explore_run(house, 0, Policy('random_walk', seed=5), 25, noise)
        self.assertEqual(a, b)
        self.assertEqual(len(a.trajectory), 26)
        a.check(house)

    def test_monotone_and_sound_without_noise(self):
        house = generate_house(GenConfig(seed=8))
        previous = {}
        for steps in range(12):
            obs = explore_run(house, 1, Policy('random_walk', seed=1), steps, NOISELESS)
            for room, items in previous.items():
                self.assertTrue(items <= obs.items_in(room))
            for room, items in obs.room_items.items():
                self.assertTrue(items <= house.placements[room])
            previous = {r: set(i) for r, i in obs.room_items.items()}


class LlmGuidedTests(SimpleTestCase):
    def setUp(self):
        self.house = make_house({}, room_names=('bedroom', 'kitchen', 'office'))
        # chain: bedroom(0) - kitchen(1) - office(2)

    def test_reply_picks_the_named_room(self):
        client = ScriptedClient(['I would head to the kitchen.', 'Office, please.'])
        obs = explore_run(self.house, 0, Policy('llm_guided'), 2, NOISELESS, client=client)
        self.assertEqual([n for _, n in obs.trajectory], [0, 1, 2])
        system = client.requests[0][0]
        self.assertEqual(system, {'role': 'system', 'content': prompts.EXPLORATION_SYSTEM_PROMPT})

    def test_unusable_reply_reprompts_then_falls_back(self):
        client = ScriptedClient(['The attic.', 'Still the attic.'])
        with self.assertLogs('exploration.explore_utils', level='WARNING'):
            obs = explore_run(self.house, 0, Policy('llm_guided'), 1, NOISELESS, client=client)
        self.assertEqual(obs.trajectory[1], (1, 1))
        self.assertEqual(len(client.requests), 2)
        self.assertIn('kitchen', client.requests[1][-1]['content'])

    def test_backend_failure_carries_transcript(self):
        client = ScriptedClient([LLMBackendError('boom')])
        with self.assertRaises(ExplorationError) as ctx:
            explore_run(self.house, 0, Policy('llm_guided'), 1, NOISELESS, client=client)
        self.assertTrue(ctx.exception.transcript)

    def test_needs_a_client(self):
        with self.assertRaises(ExplorationError):
            explore_run(self.house, 0, Policy('llm_guided'), 1, NOISELESS)


class ObservationFileTests(SimpleTestCase):
    def test_save_and_load(self):
        house = generate_house(GenConfig(seed=2))
        obs = explore_run(house, 0, Policy(), 10, NoiseParams(0.9, 0.02, 4))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_observations(obs, house, Path(tmp) / 'obs.json')
            loaded = load_observations(path, house)
        self.assertEqual(loaded.room_items, {r: i for r, i in obs.room_items.items()})
        self.assertEqual(loaded.trajectory, obs.trajectory)

    def test_bare_room_map_is_accepted(self):
        house = make_house({0: ['bed'], 1: ['mug']})
        obs = ObservationDict.from_dict({'kitchen': ['mug']}, house)
        self.assertEqual(obs.room_items, {1: {house.object_id('mug')}})
        self.assertEqual(obs.trajectory, [])

    def test_oracle_observations(self):
        house = make_house({0: ['bed'], 1: ['mug', 'sink']})
        obs = oracle_observations(house, [1])
        self.assertEqual(obs.named(house), {'kitchen': ['mug', 'sink']})
