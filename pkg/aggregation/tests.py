import itertools
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from answering.llm_client import LLMBackendError
from environment.tests import make_house
from exploration.explore_utils import ObservationDict
from exploration.tests import ScriptedClient
from learners.base import Dataset, ModelNotFitted
from learners.registry import build, fit
from melelab import prompts
from queries.query_utils import Query

from .aggregators import AggregationError, WrongArity, cam_infer, feature_matrix, featurize, majority_vote
from .debate import DebateState, run_debate, save_debate_transcripts


class MajorityVoteTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(majority_vote([1, 1, 0]), 1)
        self.assertEqual(majority_vote([0, 0, 0]), 0)
        self.assertEqual(majority_vote([1, 0]), 0)

    def test_tie_break_is_configurable(self):
        self.assertEqual(majority_vote([1, 0, 0, 1], tie_break=1), 1)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            answers = list(rng.integers(0, 2, int(rng.integers(1, 8))))
            expected = majority_vote(answers)
            for perm in itertools.islice(itertools.permutations(answers), 20):
                self.assertEqual(majority_vote(list(perm)), expected)

    def test_empty(self):
        with self.assertRaises(AggregationError):
            majority_vote([])


class FeaturizeTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(featurize(Query(20, 2, 1), [1, 0, 1], k=3).tolist(), [20, 2, 1, 0, 1])
        self.assertEqual(featurize(Query(0, 0, 0), [0], k=1).tolist(), [0, 0, 0])

    def test_wrong_arity(self):
        with self.assertRaises(WrongArity):
            featurize(Query(20, 2, 1), [1, 0], k=3)

    def test_catalog_checks(self):
        house = make_house({0: ['mug']})
        mug = house.object_id('mug')
        self.assertEqual(featurize(Query(mug, 1, 0), [1], house=house).tolist(), [mug, 1, 1])
        with self.assertRaises(AggregationError):
            featurize(Query(mug, 7, 0), [1], house=house)
        with self.assertRaises(AggregationError):
            featurize(Query(999, 0, 0), [1], house=house)

    def test_rejects_non_binary_answers(self):
        with self.assertRaises(AggregationError):
            featurize(Query(1, 0, 0), [2])

    def test_matrix_rows_match_featurize(self):
        queries = [Query(20, 2, 1), Query(3, 0, 0)]
        answers = np.array([[1, 0, 1], [0, 0, 1]])
        matrix = feature_matrix(queries, answers)
        for q, row, a in zip(queries, matrix, answers):
            self.assertEqual(row.tolist(), featurize(q, a).tolist())


class SimulatedDebateTests(SimpleTestCase):
    q = Query(20, 2, 1)

    def test_no_sway_keeps_initial_answers(self):
        state = DebateState.from_answers([1, 0, 0], stubbornness=1.0)
        self.assertEqual(run_debate(state, self.q, rounds=2, seed=0), 0)
        self.assertEqual(state.answers, [1, 0, 0])

    def test_first_agent_is_pulled_to_peer_majority(self):
        state = DebateState.from_answers([1, 0, 0], stubbornness=0.0)
        self.assertEqual(run_debate(state, self.q, rounds=1, seed=0), 0)
        self.assertEqual(state.answers, [0, 0, 0])
        first = state.transcript[0]
        self.assertEqual((first['agent'], first['round'], first['utterance']), (0, 1, 1))

    def test_split_peers_pull_toward_tie_break(self):
        answers = [1, 1, 0]
        state = DebateState.from_answers(answers, stubbornness=0.0)
        self.assertEqual(run_debate(state, self.q, rounds=1, seed=0, tie_break=0), 0)
        self.assertEqual(state.answers, [0, 0, 0])
        self.assertNotEqual(majority_vote(answers), 0)

        state = DebateState.from_answers(answers, stubbornness=0.0)
        self.assertEqual(run_debate(state, self.q, rounds=1, seed=0, tie_break=1), 1)
        self.assertEqual(state.answers, [1, 1, 1])

    def test_single_agent_has_no_peers(self):
        state = DebateState.from_answers([1], stubbornness=0.0)
        self.assertEqual(run_debate(state, self.q, rounds=2, seed=0), 1)

    def test_zero_rounds_is_majority_vote(self):
        for answers in ([1, 1, 0], [0, 1, 0], [1, 0]):
            state = DebateState.from_answers(answers, stubbornness=0.0)
            self.assertEqual(run_debate(state, self.q, rounds=0, seed=3), majority_vote(answers))
            self.assertEqual(state.transcript, [])

    def test_turn_order(self):
        state = DebateState.from_answers([1, 1, 0, 0], stubbornness=0.5)
        run_debate(state, self.q, rounds=2, seed=1)
        order = [(turn['round'], turn['agent']) for turn in state.transcript]
        self.assertEqual(order, [(r, k) for r in (1, 2) for k in range(4)])

    def test_no_sway_accuracy_equals_majority_vote(self):
        rng = np.random.default_rng(7)
        debated, voted = [], []
        for index in range(300):
            q = Query(int(rng.integers(0, 40)), int(rng.integers(0, 8)), int(rng.integers(0, 2)))
            answers = rng.integers(0, 2, 3)
            state = DebateState.from_answers(answers, stubbornness=1.0)
            debated.append(run_debate(state, q, rounds=2, seed=index) == q.y)
            voted.append(majority_vote(answers) == q.y)
        self.assertEqual(np.mean(debated), np.mean(voted))

    def test_seeded(self):
        outcomes = set()
        for _ in range(3):
            state = DebateState.from_answers([1, 0, 1, 0, 0], stubbornness=0.5)
            run_debate(state, self.q, rounds=2, seed=11)
            outcomes.add(tuple(state.answers))
        self.assertEqual(len(outcomes), 1)

    def test_bad_state(self):
        with self.assertRaises(AggregationError):
            DebateState.from_answers([1, 0], stubbornness=1.5)
        with self.assertRaises(AggregationError):
            DebateState.from_answers([1, 2])
        with self.assertRaises(AggregationError):
            DebateState.from_answers([1, 0], mode='shouting')
        with self.assertRaises(AggregationError):
            run_debate(DebateState.from_answers([1]), self.q, rounds=-1, seed=0)

    def test_transcripts_file(self):
        state = DebateState.from_answers([1, 0, 0], stubbornness=0.0)
        run_debate(state, self.q, rounds=1, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_debate_transcripts({4: state}, Path(tmp) / 'debates.json')
            payload = json.loads(path.read_text())
        self.assertEqual(payload['4']['initial'], [1, 0, 0])
        self.assertEqual(payload['4']['final'], [0, 0, 0])
        self.assertEqual(len(payload['4']['transcript']), 3)


class LlmDebateTests(SimpleTestCase):
    def setUp(self):
        self.house = make_house({0: ['mug']})
        self.q = Query(self.house.object_id('mug'), 0, 1)
        seen = ObservationDict(room_items={0: {self.house.object_id('mug')}})
        self.observations = [seen, ObservationDict(), ObservationDict()]

    def test_one_round_then_final_vote(self):
        client = ScriptedClient([
            'YES, I saw the mug myself.', 'I did not see it, so no.', 'Agent 0 saw it. Yes.',
            'YES', 'Yes', 'No',
        ])
        state = DebateState.from_answers([1, 0, 0], mode='llm')
        result = run_debate(state, self.q, rounds=1, seed=0, client=client, house=self.house,
                            observations=self.observations)
        self.assertEqual(result, 1)
        self.assertEqual(state.answers, [1, 1, 0])
        self.assertEqual(len(client.requests), 6)

        first_system = client.requests[0][0]['content']
        self.assertIn('Your id is 0', first_system)
        self.assertIn(prompts.DEBATE_NO_HISTORY, first_system)
        self.assertIn('was YES.', first_system)
        self.assertEqual(client.requests[0][1]['content'], prompts.DEBATE_TURN_PROMPT)

        third_system = client.requests[2][0]['content']
        self.assertIn('Agent 0: YES, I saw the mug myself.', third_system)
        self.assertIn('Agent 1: I did not see it, so no.', third_system)
        self.assertEqual(client.requests[3][1]['content'], prompts.DEBATE_FINAL_PROMPT)
        self.assertEqual([t['round'] for t in state.transcript], [1, 1, 1, 'final', 'final', 'final'])

    def test_backend_failure(self):
        client = ScriptedClient([LLMBackendError('connection refused')])
        state = DebateState.from_answers([1, 0, 0], mode='llm')
        with self.assertRaises(AggregationError):
            run_debate(state, self.q, rounds=1, seed=0, client=client, house=self.house,
                       observations=self.observations)

    def test_unparseable_final(self):
        client = ScriptedClient(['yes', 'no', 'no', 'maybe', 'still thinking'])
        state = DebateState.from_answers([1, 0, 0], mode='llm')
        with self.assertRaises(AggregationError):
            run_debate(state, self.q, rounds=1, seed=0, client=client, house=self.house,
                       observations=self.observations)

    def test_needs_client(self):
        state = DebateState.from_answers([1, 0, 0], mode='llm')
        with self.assertRaises(AggregationError):
            run_debate(state, self.q, rounds=1, seed=0)


class CamInferTests(SimpleTestCase):
    def _copy_first_agent(self, n=200, seed=0):
        rng = np.random.default_rng(seed)
        answers = rng.integers(0, 2, size=(n, 3))
        queries = [Query(int(o), int(r), int(a)) for o, r, a in
                   zip(rng.integers(0, 40, n), rng.integers(0, 8, n), answers[:, 0])]
        return queries, answers

    def test_learns_to_copy_first_agent(self):
        queries, answers = self._copy_first_agent()
        ds = Dataset(feature_matrix(queries, answers), [q.y for q in queries])
        for algo, hyper in (('dt', None), ('gbt', {'n_estimators': 20})):
            model = fit(algo, ds, hyper, seed=0)
            test_queries, test_answers = self._copy_first_agent(n=50, seed=1)
            for q, a in zip(test_queries, test_answers):
                self.assertEqual(cam_infer(model, q, a), a[0], algo)

    def test_constant_model(self):
        ds = Dataset([[1, 0, 1], [2, 1, 0], [3, 0, 1]], [0, 0, 0])
        model = fit('dt', ds)
        for answers in ([0], [1]):
            self.assertEqual(cam_infer(model, Query(5, 0, 1), answers), 0)

    def test_wrong_arity(self):
        model = fit('dt', Dataset([[1, 0, 1, 0], [2, 1, 0, 1]], [1, 0]))
        with self.assertRaises(WrongArity):
            cam_infer(model, Query(1, 0, 1), [1])

    def test_untrained(self):
        with self.assertRaises(ModelNotFitted):
            cam_infer(build('dt'), Query(1, 0, 1), [1, 0])
