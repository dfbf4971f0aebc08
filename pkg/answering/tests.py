import json
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import mock

from django.test import SimpleTestCase, override_settings

from environment.house_utils import DEFAULT_PRIOR_TABLE, GenConfig, generate_house
from environment.tests import make_house
from exploration.explore_utils import ObservationDict, oracle_observations
from exploration.tests import ScriptedClient
from melelab import prompts
from queries.query_utils import Query, generate_queries

from .answer_utils import (
    AnswerError, AnswerUnparseable, HeuristicBackend, HeuristicParams, LLMBackend,
    MaliciousBackend, answer_all, heuristic_answer, invert, llm_answer, load_answers,
    parse_yes_no, save_answers, save_transcripts,
)
from .llm_client import ChatClient, LLMBackendError


class HeuristicAnswerTests(SimpleTestCase):
    def setUp(self):
        self.house = make_house({1: ['mug']}, room_names=('office', 'kitchen'))
        self.mug = self.house.object_id('mug')

    def test_observed_object(self):
        obs = oracle_observations(self.house, [1])
        params = HeuristicParams(prior={}, threshold=0.9, flip_noise=0.0)
        self.assertEqual(heuristic_answer(obs, Query(self.mug, 1, 1), params, self.house), 1)

    def test_prior_below_threshold(self):
        params = HeuristicParams(prior={('office', 'mug'): 0.2}, threshold=0.5, flip_noise=0.0)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 0, 0), params,
                                          self.house), 0)

    def test_prior_above_threshold(self):
        params = HeuristicParams(prior={('kitchen', 'mug'): 0.8}, threshold=0.5, flip_noise=0.0)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 1, 1), params,
                                          self.house), 1)

    def test_missing_prior_is_zero(self):
        params = HeuristicParams(prior={}, threshold=0.5, flip_noise=0.0)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 1, 1), params,
                                          self.house), 0)

    def test_full_flip_noise_inverts(self):
        params = HeuristicParams(prior={}, threshold=0.5, flip_noise=1.0)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 1, 1), params,
                                          self.house), 1)

    def test_default_prior_covers_missing_pairs(self):
        params = HeuristicParams(prior={}, threshold=0.5, flip_noise=0.0, default_prior=0.6)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 1, 1), params,
                                          self.house), 1)

    def test_params_follow_the_generator_prior(self):
        uniform = HeuristicParams.from_gen_config(GenConfig.from_payload({'uniform_prior': 0.7}))
        self.assertEqual(dict(uniform.prior), {})
        self.assertEqual(uniform.default_prior, 0.7)
        self.assertEqual(heuristic_answer(ObservationDict(), Query(self.mug, 0, 0),
                                          replace(uniform, flip_noise=0.0), self.house), 1)

        table = HeuristicParams.from_gen_config(GenConfig(), threshold=0.3)
        self.assertIs(table.prior, DEFAULT_PRIOR_TABLE)
        self.assertEqual((table.default_prior, table.threshold), (0.0, 0.3))

    def test_invalid_params(self):
        with self.assertRaises(ValueError):
            HeuristicParams(threshold=1.5)
        with self.assertRaises(ValueError):
            HeuristicParams(default_prior=-0.1)


class ParseTests(SimpleTestCase):
    def test_leading_token(self):
        self.assertEqual(parse_yes_no("YES, the kitchen likely has one."), 1)
        self.assertEqual(parse_yes_no("No."), 0)
        self.assertEqual(parse_yes_no("yes"), 1)

    def test_first_match_wins(self):
        self.assertEqual(parse_yes_no("I'd say no, though yes is possible"), 0)

    def test_no_standalone_token(self):
        self.assertIsNone(parse_yes_no("It depends."))
        self.assertIsNone(parse_yes_no("Nobody knows, eyes closed"))

    def test_invert(self):
        self.assertEqual(invert(1), 0)
        self.assertEqual(invert(0), 1)
        for a in (0, 1):
            self.assertEqual(invert(invert(a)), a)


class LlmAnswerTests(SimpleTestCase):
    def setUp(self):
        self.house = make_house({1: ['mug']})
        self.obs = oracle_observations(self.house, [1])
        self.query = Query(self.house.object_id('mug'), 1, 1)

    def test_prompts_are_sent_verbatim(self):
        client = ScriptedClient(['Yes.'])
        transcript = []
        self.assertEqual(llm_answer(client, self.obs, self.query, self.house, transcript), 1)
        system, user = client.requests[0]
        self.assertEqual(system['content'], prompts.ANSWER_SYSTEM_PROMPT.format(
            observations='{"kitchen": ["mug"]}'))
        self.assertEqual(user['content'], prompts.QUESTION_TEMPLATE.format(item='mug',
                                                                           room='kitchen'))
        self.assertEqual(transcript[-1], {'role': 'assistant', 'content': 'Yes.'})

    def test_reprompt_recovers(self):
        client = ScriptedClient(['It depends.', 'NO'])
        self.assertEqual(llm_answer(client, self.obs, self.query, self.house), 0)
        self.assertEqual(client.requests[1][-1]['content'], prompts.ANSWER_REPROMPT)

    def test_unparseable_after_reprompt(self):
        client = ScriptedClient(['It depends.', 'Hard to say.'])
        with self.assertRaises(AnswerUnparseable):
            llm_answer(client, self.obs, self.query, self.house)

    def test_transport_failure_names_the_query(self):
        house = make_house({1: ['mug']})
        qs = generate_queries(house, seed=0)
        backend = LLMBackend(ScriptedClient(['yes', LLMBackendError('timeout')]), house,
                             self.obs, agent_id=2)
        with self.assertRaises(AnswerError) as ctx:
            answer_all(backend, qs)
        self.assertEqual(ctx.exception.query_index, 1)


class AnswerAllTests(SimpleTestCase):
    def setUp(self):
        self.house = generate_house(GenConfig(seed=6))
        self.qs = generate_queries(self.house, seed=0, skip_saturated=True)
        self.obs = oracle_observations(self.house, [0, 1, 2])

    def _backend(self, agent_id=0, flip_noise=0.0):
        return HeuristicBackend(self.house, self.obs, HeuristicParams(flip_noise=flip_noise),
                                agent_id)

    def test_deterministic(self):
        self.assertEqual(answer_all(self._backend(flip_noise=0.2), self.qs),
                         answer_all(self._backend(flip_noise=0.2), self.qs))

    def test_malicious_is_elementwise_inverse(self):
        honest = answer_all(self._backend(1, 0.1), self.qs)
        evil = answer_all(MaliciousBackend(self._backend(1, 0.1)), self.qs)
        self.assertEqual(evil.backend, 'malicious(heuristic)')
        for index, answer in honest.answers.items():
            self.assertEqual(answer + evil.answers[index], 1)

    def test_totality(self):
        record = answer_all(self._backend(), self.qs)
        self.assertEqual(sorted(record.answers), list(range(len(self.qs))))
        self.assertTrue(set(record.answers.values()) <= {0, 1})

    def test_files(self):
        records = [answer_all(self._backend(k), self.qs, indices=range(6)) for k in range(3)]
        records[0].transcripts = {0: [{'role': 'user', 'content': 'hi'}]}
        with tempfile.TemporaryDirectory() as tmp:
            path = save_answers(records, Path(tmp) / 'answers.jsonl')
            loaded = load_answers(path)
            tpath = save_transcripts(records, Path(tmp) / 'transcripts.json')
            archived = json.loads(tpath.read_text())
        self.assertEqual([r.answers for r in loaded], [r.answers for r in records])
        self.assertEqual(list(archived), ['0'])


@override_settings(MELE_LAB={'LLM': {
    'BASE_URL': 'http://localhost:9/v1', 'MODEL': 'test-model', 'API_KEY_ENV': 'MELE_TEST_KEY',
    'MAX_IN_FLIGHT': 2, 'MAX_RETRIES': 0, 'TIMEOUT': 1.0, 'TEMPERATURE': 0.0,
}})
class ChatClientTests(SimpleTestCase):
    def test_missing_key(self):
        with mock.patch.dict('os.environ', {}, clear=True):
            with self.assertRaisesMessage(LLMBackendError, 'MELE_TEST_KEY'):
                ChatClient()

    def test_reply_content(self):
        with mock.patch.dict('os.environ', {'MELE_TEST_KEY': 'k'}):
            client = ChatClient()
        reply = mock.Mock()
        reply.choices = [mock.Mock(message=mock.Mock(content='YES'))]
        with mock.patch.object(client._client.chat.completions, 'create',
                               return_value=reply) as create:
            self.assertEqual(client.chat([{'role': 'user', 'content': 'q'}]), 'YES')
        self.assertEqual(create.call_args.kwargs['model'], 'test-model')
