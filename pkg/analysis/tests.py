import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pyparsing as pp
from django.test import SimpleTestCase

from answering.answer_utils import AnswerRecord, HeuristicParams
from environment.house_utils import GenConfig, generate_house
from learners.base import Dataset, LearnerError
from learners.registry import fit
from queries.query_utils import Query, QuerySet, generate_queries

from .charts import accuracy_chart
from .feature_importance import oracle_room_answers, per_room_pfi_experiment
from .metrics import MetricError, accuracy, agreement, pfi, pfi_report
from .tree_export import tree_to_dot, write_dot


def dot_grammar():
    identifier = pp.Word(pp.alphanums + '_') | pp.QuotedString('"', esc_char='\\')
    attribute = pp.Group(identifier + pp.Suppress('=') + identifier)
    attributes = pp.Suppress('[') + pp.Group(pp.ZeroOrMore(attribute + pp.Optional(
        pp.Suppress(',')))) + pp.Suppress(']')
    edge = pp.Group(identifier + pp.Suppress('->') + identifier + pp.Optional(attributes))
    node = pp.Group(identifier + pp.Optional(attributes))
    statement = (edge | node) + pp.Suppress(';')
    return (pp.Keyword('digraph') + identifier + pp.Suppress('{')
            + pp.Group(pp.ZeroOrMore(statement)) + pp.Suppress('}') + pp.StringEnd())


def parse_dot(text):
    """(node statements, edge statements) of a digraph, skipping the default ``node`` line."""
    nodes, edges = [], []
    for statement in dot_grammar().parse_string(text)[2]:
        if len(statement) >= 2 and isinstance(statement[1], str):
            edges.append(statement)
        elif statement[0] != 'node':
            nodes.append(statement)
    return nodes, edges


class MetricTests(SimpleTestCase):
    def test_accuracy(self):
        self.assertEqual(accuracy([1, 0, 1], [1, 0, 1]), 1.0)
        self.assertAlmostEqual(accuracy([1, 0, 1], [1, 1, 1]), 2 / 3)
        self.assertEqual(accuracy([0] * 6, [0, 1] * 3), 0.5)

    def test_complement_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            p, l = rng.integers(0, 2, n), rng.integers(0, 2, n)
            self.assertAlmostEqual(accuracy(p, l) + accuracy(1 - p, l), 1.0)

    def test_agreement(self):
        s = np.array([1, 0, 0, 1, 1])
        self.assertEqual(agreement(s, s), 1.0)
        self.assertEqual(agreement(s, 1 - s), 0.0)
        other = np.array([1, 1, 0, 0, 1])
        self.assertEqual(agreement(s, other), agreement(other, s))

    def test_errors(self):
        with self.assertRaises(MetricError):
            accuracy([], [])
        with self.assertRaises(MetricError):
            accuracy([1], [1, 0])
        with self.assertRaises(MetricError):
            agreement([1, 0], [1])


class PfiTests(SimpleTestCase):
    def _stump_setup(self, n=200):
        rng = np.random.default_rng(1)
        y = np.array([0, 1] * (n // 2))
        X = np.column_stack([np.full(n, 7.0), y, rng.integers(0, 2, n)])
        ds = Dataset(X, y)
        return fit('dt', ds, {'max_depth': 1}), ds

    def test_constant_column_is_zero(self):
        model, ds = self._stump_setup()
        self.assertEqual(pfi(model, ds, 0, repeats=5, seed=3), 0.0)

    def test_ignored_column_is_zero(self):
        model, ds = self._stump_setup()
        self.assertEqual(pfi(model, ds, 2, repeats=5, seed=3), 0.0)

    def test_perfect_feature_is_about_half(self):
        model, ds = self._stump_setup()
        self.assertLess(abs(pfi(model, ds, 1, repeats=50, seed=0) - 0.5), 0.05)

    def test_forest_report_covers_every_column(self):
        model, ds = self._stump_setup()
        twin = Dataset(np.column_stack([ds.X, ds.X[:, 1]]), ds.y)
        forest = fit('rf', twin, {'n_estimators': 10}, seed=0)
        report = pfi_report(forest, twin, ['c', 'y', 'noise', 'y2'], repeats=5, seed=2)
        self.assertTrue((report.values >= 0).all())
        self.assertEqual(len(report.table), 4)

    def test_index_out_of_range(self):
        model, ds = self._stump_setup()
        with self.assertRaises(MetricError):
            pfi(model, ds, 3)

    def test_report_csv(self):
        model, ds = self._stump_setup()
        report = pfi_report(model, ds, ['c', 'y', 'noise'], repeats=3, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            frame = pd.read_csv(report.to_csv(Path(tmp) / 'pfi.csv'))
        self.assertEqual(list(frame.columns), ['feature_name', 'pfi_mean', 'pfi_std'])
        self.assertEqual(report.base_accuracy, 1.0)


class PerRoomExperimentTests(SimpleTestCase):
    def _room_queries(self, n=120):
        rng = np.random.default_rng(4)
        objects = rng.integers(0, 40, n)
        labels = (objects < 20).astype(int)
        return QuerySet([Query(int(o), 3, int(y)) for o, y in zip(objects, labels)]), labels, rng

    def _records(self, columns):
        return [AnswerRecord(k, 'heuristic', dict(enumerate(int(a) for a in col)))
                for k, col in enumerate(columns)]

    def test_constant_agent_is_flagged_with_zero_importance(self):
        qs, labels, rng = self._room_queries()
        columns = [labels, rng.integers(0, 2, len(qs)), np.zeros(len(qs), dtype=int)]
        with self.assertLogs('analysis.feature_importance', level='WARNING'):
            result = per_room_pfi_experiment(qs, self._records(columns), room=3)
        self.assertEqual(result.flagged, ['agent_2'])
        self.assertEqual(result.report.value('agent_2'), 0.0)
        self.assertEqual(result.report.value('agent_2'), result.report.values[1:].min())
        self.assertEqual(result.feature_names, ['object', 'agent_0', 'agent_1', 'agent_2'])

    def test_only_truthful_agent_matters(self):
        qs, labels, rng = self._room_queries()
        columns = [rng.integers(0, 2, len(qs)), rng.integers(0, 2, len(qs)), labels,
                   rng.integers(0, 2, len(qs))]
        shuffled = QuerySet([Query(int(o), 3, q.y)
                             for o, q in zip(rng.permutation([q.o for q in qs]), qs)])
        result = per_room_pfi_experiment(shuffled, self._records(columns), room=3, seed=1)
        values = result.report.values
        self.assertEqual(int(np.argmax(values)), 3)
        self.assertGreater(values[3], max(np.delete(values, 3)))

    def test_object_determined_room_splits_on_object_first(self):
        qs, labels, rng = self._room_queries()
        columns = [rng.integers(0, 2, len(qs)) for _ in range(3)]
        result = per_room_pfi_experiment(qs, self._records(columns), room=3, trials=2)
        for model in result.models:
            self.assertEqual(model.export_tree().feature, 0)
        dot = tree_to_dot(result.models[0], result.feature_names)
        self.assertIn('object <= ', dot.splitlines()[2])

    def test_empty_room(self):
        qs, labels, rng = self._room_queries(10)
        with self.assertRaises(MetricError):
            per_room_pfi_experiment(qs, self._records([labels]), room=0)

    def test_oracle_agents(self):
        house = generate_house(GenConfig(num_rooms=4, seed=2))
        qs = generate_queries(house, 0, skip_saturated=True)
        records = oracle_room_answers(house, qs, [[0, 1], [2, 3]],
                                      HeuristicParams(flip_noise=0.0))
        for q_index, q in enumerate(qs):
            owner = 0 if q.r in (0, 1) else 1
            if q.y == 1:
                self.assertEqual(records[owner].answers[q_index], 1)


class TreeExportTests(SimpleTestCase):
    def test_single_leaf(self):
        model = fit('dt', Dataset(np.zeros((4, 2)), [1, 1, 1, 1]))
        nodes, edges = parse_dot(tree_to_dot(model))
        self.assertEqual((len(nodes), len(edges)), (1, 0))

    def test_depth_one(self):
        model = fit('dt', Dataset([[0, 1], [0, 0], [0, 1], [0, 0]], [1, 0, 1, 0]))
        text = tree_to_dot(model, ['object', 'agent_0'])
        nodes, edges = parse_dot(text)
        self.assertEqual((len(nodes), len(edges)), (3, 2))
        self.assertIn('label="true"', text)
        self.assertIn('label="false"', text)

    def test_every_emitted_file_parses(self):
        rng = np.random.default_rng(5)
        with tempfile.TemporaryDirectory() as tmp:
            for seed in range(5):
                X = rng.integers(0, 6, size=(60, 4))
                y = rng.integers(0, 2, 60)
                path = write_dot(fit('dt', Dataset(X, y)), Path(tmp) / f'tree_{seed}.dot')
                nodes, edges = parse_dot(path.read_text())
                self.assertEqual(len(edges), len(nodes) - 1)

    def test_rejects_other_models(self):
        model = fit('lr', Dataset([[0, 1], [1, 0]], [0, 1]))
        with self.assertRaises(LearnerError):
            tree_to_dot(model)


class ChartTests(SimpleTestCase):
    def test_writes_png(self):
        results = pd.DataFrame({
            'seed': [0, 1, 0, 1],
            'method': ['mv', 'mv', 'cam_dt', 'cam_dt'],
            'accuracy': [0.5, 0.6, 0.8, 0.9],
        })
        with tempfile.TemporaryDirectory() as tmp:
            path = accuracy_chart(results, Path(tmp) / 'accuracy.png')
            self.assertTrue(path.read_bytes().startswith(b'\x89PNG'))
