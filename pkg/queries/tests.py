import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from environment.house_utils import GenConfig, containing_rooms, generate_house
from environment.tests import make_house

from .query_utils import (
    Query, QueryGenerationError, QuerySet, QuerySetError, filter_by_room, generate_queries,
    load_queries, load_split, save_queries, save_split, train_test_split,
)


class GenerateQueriesTests(SimpleTestCase):
    def test_single_negative_room(self):
        house = make_house({1: ['mug']})
        qs = generate_queries(house, seed=0)
        self.assertEqual(qs.queries, [Query(20, 1, 1), Query(20, 0, 0)])

    def test_twice_the_placement_count(self):
        house = generate_house(GenConfig(num_rooms=8, seed=5))
        qs = generate_queries(house, seed=1, skip_saturated=True)
        self.assertEqual(len(qs), 2 * qs.positives)
        self.assertTrue(qs.is_balanced())

    def test_soundness_and_balance_over_many_houses(self):
        for seed in range(20):
            house = generate_house(GenConfig(num_rooms=6, seed=seed))
            qs = generate_queries(house, seed=seed, skip_saturated=True)
            self.assertTrue(qs.is_balanced())
            for q in qs:
                self.assertEqual(q.y == 1, q.r in containing_rooms(house, q.o))
                if q.y == 0:
                    self.assertNotIn(q.o, house.placements[q.r])
            rows = [(q.o, q.r, q.y) for q in qs]
            self.assertEqual(len(rows), len(set(rows)))

    def test_collisions_drop_the_paired_positive(self):
        # mug sits in 3 of 4 rooms: only one negative room exists
        house = make_house({0: ['mug'], 1: ['mug'], 2: ['mug']},
                           room_names=('a', 'b', 'c', 'd'))
        with self.assertLogs('queries.query_utils', level='WARNING'):
            qs = generate_queries(house, seed=0)
        self.assertEqual(len(qs), 2)
        self.assertTrue(qs.is_balanced())

    def test_object_in_every_room(self):
        house = make_house({0: ['mug', 'sink'], 1: ['mug']})
        with self.assertRaises(QueryGenerationError) as ctx:
            generate_queries(house, seed=0)
        self.assertEqual(ctx.exception.objects, ['mug'])
        self.assertEqual(len(generate_queries(house, seed=0, skip_saturated=True)), 2)

    def test_needs_two_rooms(self):
        with self.assertRaises(QueryGenerationError):
            generate_queries(make_house({0: ['mug']}, room_names=('kitchen',)), seed=0)


class SplitTests(SimpleTestCase):
    def _qs(self, n):
        return QuerySet([Query(i, 0, i % 2) for i in range(n)])

    def test_ninety_ten(self):
        split = train_test_split(self._qs(100), 0.10, seed=0).split
        self.assertEqual((len(split.train), len(split.test)), (90, 10))
        self.assertEqual(sorted(split.train + split.test), list(range(100)))

    def test_seeds_are_reproducible_and_distinct(self):
        qs = self._qs(10)
        tests = [train_test_split(qs, 0.10, seed).split.test for seed in range(5)]
        self.assertEqual(tests, [train_test_split(qs, 0.10, seed).split.test for seed in range(5)])
        self.assertGreater(len(set(tests)), 1)

    def test_minimum_one_test_query(self):
        split = train_test_split(self._qs(2), 0.10, seed=3).split
        self.assertEqual((len(split.train), len(split.test)), (1, 1))

    def test_errors(self):
        with self.assertRaisesMessage(QuerySetError, 'empty query set'):
            train_test_split(QuerySet(), 0.1, 0)
        with self.assertRaises(QuerySetError):
            train_test_split(self._qs(10), 1.0, 0)
        with self.assertRaises(QuerySetError):
            self._qs(4).test_indices


class QueryFileTests(SimpleTestCase):
    def test_round_trip_with_sidecar(self):
        house = generate_house(GenConfig(seed=9))
        qs = train_test_split(generate_queries(house, 2, skip_saturated=True), 0.1, 4)
        with tempfile.TemporaryDirectory() as tmp:
            qpath = save_queries(qs, house, Path(tmp) / 'queries.jsonl')
            spath = save_split(qs.split, Path(tmp) / 'split.json')
            first = json.loads(qpath.read_text().splitlines()[0])
            loaded = load_split(spath, load_queries(qpath, house))
        self.assertEqual(set(first), {'object', 'room', 'label'})
        self.assertEqual(loaded, qs)

    def test_bad_label(self):
        house = make_house({1: ['mug']})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'q.jsonl'
            path.write_text('{"object": "mug", "room": "kitchen", "label": 2}\n')
            with self.assertRaises(QuerySetError):
                load_queries(path, house)

    def test_filter_by_room(self):
        qs = QuerySet([Query(1, 0, 1), Query(1, 2, 0), Query(3, 0, 0)])
        self.assertEqual(filter_by_room(qs, 0).queries, [Query(1, 0, 1), Query(3, 0, 0)])
