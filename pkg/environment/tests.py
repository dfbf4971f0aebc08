import json
import tempfile
from collections import deque
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .house_utils import (
    OBJECT_LABELS, GenConfig, GenConfigError, HouseGraph, HouseValidationError, RoomInfo,
    UnknownNodeError, UnknownObjectError, build_object_catalog, containing_rooms,
    dumps_house, generate_house, import_observations, load_house, numbered_labels, save_house,
)
from .perception import NoiseParams, detect_at_node


def make_house(placements, room_names=('bedroom', 'kitchen'), nodes_per_room=1):
    """Small hand-built house: rooms chained, ``placements`` maps room index to names."""
    catalog = build_object_catalog({name for names in placements.values() for name in names})
    ids = {name: oid for oid, name in catalog.items()}
    rooms = {rid: RoomInfo(name, name) for rid, name in enumerate(room_names)}
    node_room, edges = {}, []
    node = 0
    for rid in rooms:
        for _ in range(nodes_per_room):
            node_room[node] = rid
            if node:
                edges.append((node - 1, node))
            node += 1
    return HouseGraph(
        nodes=tuple(range(node)),
        edges=tuple(edges),
        node_room=node_room,
        rooms=rooms,
        placements={rid: frozenset(ids[n] for n in placements.get(rid, ())) for rid in rooms},
        object_catalog=catalog,
        seed=None,
    )


class ObjectCatalogTests(SimpleTestCase):
    def test_known_labels_keep_table_encoding(self):
        catalog = build_object_catalog(['mug', 'appliance', 'wristwatch'])
        self.assertEqual(catalog, {0: 'appliance', 20: 'mug', 39: 'wristwatch'})

    def test_unknown_names_get_ids_from_forty(self):
        catalog = build_object_catalog(['zebra', 'mug', 'anvil'])
        self.assertEqual(catalog[40], 'anvil')
        self.assertEqual(catalog[41], 'zebra')
        self.assertEqual(len(OBJECT_LABELS), 40)


class GenerateHouseTests(SimpleTestCase):
    def test_forced_placement(self):
        cfg = GenConfig(num_rooms=1, room_type_mix=['kitchen'],
                        prior_table={('kitchen', 'mug'): 1.0}, seed=7)
        house = generate_house(cfg)
        self.assertIn(house.object_id('mug'), house.placements[0])

    def test_same_seed_is_byte_identical(self):
        a = generate_house(GenConfig(seed=7))
        b = generate_house(GenConfig(seed=7))
        self.assertEqual(a, b)
        self.assertEqual(dumps_house(a), dumps_house(b))

    def test_bfs_reaches_every_node(self):
        for seed in range(20):
            house = generate_house(GenConfig(num_rooms=6, seed=seed))
            reached, frontier = {0}, deque([0])
            while frontier:
                for nbr in house.neighbors(frontier.popleft()):
                    if nbr not in reached:
                        reached.add(nbr)
                        frontier.append(nbr)
            self.assertEqual(reached, set(house.nodes))

    def test_room_names_are_unique_and_sorted_by_id(self):
        house = generate_house(GenConfig(num_rooms=9, seed=1))
        names = [house.room_name(rid) for rid in sorted(house.rooms)]
        self.assertEqual(names, sorted(names))
        self.assertIn('kitchen 2', names)
        self.assertIn('dining room 2', names)
        self.assertNotIn('bedroom 2', names)
        for rid in house.rooms:
            self.assertGreaterEqual(len(house.nodes_in_room(rid)), 1)

    def test_placement_count_matches_prior(self):
        cfg = dict(num_rooms=4, prior_table={}, default_prior=0.5)
        counts = [generate_house(GenConfig(seed=s, **cfg)).num_placements for s in range(1000)]
        trials = len(OBJECT_LABELS) * 4
        expected = 0.5 * trials
        sigma = np.sqrt(trials * 0.25 / len(counts))
        self.assertLess(abs(np.mean(counts) - expected), 3 * sigma)

    def test_invalid_config(self):
        with self.assertRaises(GenConfigError):
            generate_house(GenConfig(room_type_mix=[]))
        with self.assertRaises(GenConfigError):
            generate_house(GenConfig(prior_table={('kitchen', 'mug'): 1.5}))
        with self.assertRaises(GenConfigError):
            generate_house(GenConfig(num_rooms=0))
        with self.assertRaises(GenConfigError):
            generate_house(GenConfig(nodes_per_room=(0, 2)))
        with self.assertRaises(GenConfigError):
            generate_house(GenConfig(num_objects=0))

    def test_num_objects_sizes_the_catalog(self):
        small = generate_house(GenConfig(num_rooms=2, num_objects=5, seed=3))
        self.assertEqual(list(small.object_catalog.values()), list(OBJECT_LABELS[:5]))

        large = generate_house(GenConfig(num_rooms=2, num_objects=43, seed=3))
        self.assertEqual(len(large.object_catalog), 43)
        self.assertEqual(large.object_catalog[40], 'item 040')
        self.assertEqual(large.object_catalog[42], 'item 042')
        self.assertEqual(numbered_labels(2), ['appliance', 'armchair'])


class ContainingRoomsTests(SimpleTestCase):
    def test_lookup(self):
        house = make_house({0: ['desk'], 1: ['mug', 'desk']})
        self.assertEqual(containing_rooms(house, house.object_id('mug')), {1})
        self.assertEqual(containing_rooms(house, house.object_id('desk')), {0, 1})

    def test_object_placed_nowhere(self):
        house = make_house({1: ['mug']})
        house.object_catalog[13] = 'desk'
        self.assertEqual(containing_rooms(house, 13), set())

    def test_matches_brute_force_scan(self):
        house = generate_house(GenConfig(seed=4))
        for oid in house.object_catalog:
            expected = {r for r in house.rooms if oid in house.placements[r]}
            self.assertEqual(containing_rooms(house, oid), expected)

    def test_unknown_object(self):
        house = make_house({1: ['mug']})
        with self.assertRaises(UnknownObjectError):
            containing_rooms(house, 999)


class HouseFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'house.json'

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        house = generate_house(GenConfig(seed=11))
        save_house(house, self.path)
        self.assertEqual(load_house(self.path), house)

    def _write_modified(self, mutate):
        payload = json.loads(dumps_house(make_house({0: ['desk'], 1: ['mug']})))
        mutate(payload)
        self.path.write_text(json.dumps(payload))

    def test_dangling_room_id(self):
        self._write_modified(lambda p: p['node_room'].update({'0': 7}))
        with self.assertRaisesMessage(HouseValidationError, 'dangling room id'):
            load_house(self.path)

    def test_duplicate_object_name(self):
        self.path.write_text(dumps_house(make_house({1: ['mug']})).replace(
            '"mug": 20', '"mug": 20, "mug": 21'))
        with self.assertRaisesMessage(HouseValidationError, 'catalog not bijective'):
            load_house(self.path)

    def test_disconnected_graph(self):
        self._write_modified(lambda p: p.update(edges=[]))
        with self.assertRaisesMessage(HouseValidationError, 'graph is disconnected'):
            load_house(self.path)

    def test_unknown_object_in_placements(self):
        self._write_modified(lambda p: p['placements']['0'].append('unicorn'))
        with self.assertRaisesMessage(HouseValidationError, 'dangling object id'):
            load_house(self.path)

    def test_import_observations(self):
        records = [
            {'kitchen': ['mug', 'sink']},
            {'kitchen': ['refrigerator']},
            {'living room': ['sofa', 'lava lamp']},
        ]
        self.path.write_text(json.dumps(records))
        house = import_observations(self.path)
        self.assertEqual(house.room_catalog, {0: 'kitchen', 1: 'living room'})
        self.assertEqual(house.room_type(1), 'living room')
        self.assertEqual(containing_rooms(house, house.object_id('mug')), {0})
        self.assertEqual(house.object_id('lava lamp'), 40)
        self.assertEqual(len(house.nodes), 3)


class DetectAtNodeTests(SimpleTestCase):
    def setUp(self):
        self.house = make_house({0: ['bed'], 1: ['mug', 'sink']})

    def test_noiseless(self):
        found = detect_at_node(self.house, 1, NoiseParams(1.0, 0.0, 3), step=0)
        self.assertEqual(found, {(1, 20), (1, 27)})

    def test_blind_sensor(self):
        self.assertEqual(detect_at_node(self.house, 1, NoiseParams(0.0, 0.0, 3), step=0), set())

    def test_replay_is_deterministic(self):
        params = NoiseParams(0.5, 0.3, 9)
        self.assertEqual(detect_at_node(self.house, 0, params, 4),
                         detect_at_node(self.house, 0, params, 4))

    def test_output_is_tagged_with_node_room(self):
        house = generate_house(GenConfig(seed=2))
        params = NoiseParams(0.8, 0.2, 1)
        for node in house.nodes:
            for room, oid in detect_at_node(house, node, params, 0):
                self.assertEqual(room, house.room_of(node))
                self.assertIn(oid, house.object_catalog)

    def test_true_positive_rate(self):
        params = NoiseParams(0.8, 0.01, 5)
        hits = sum(len(detect_at_node(self.house, 1, params, step) & {(1, 20), (1, 27)})
                   for step in range(5000))
        trials = 10000
        sigma = np.sqrt(trials * 0.8 * 0.2)
        self.assertLess(abs(hits - 0.8 * trials), 3 * sigma)

    def test_unknown_node(self):
        with self.assertRaises(UnknownNodeError):
            detect_at_node(self.house, 42, NoiseParams(), 0)

    def test_invalid_probability(self):
        with self.assertRaises(ValueError):
            NoiseParams(p_detect=1.2)
