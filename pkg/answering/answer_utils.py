import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from environment.house_utils import DEFAULT_PRIOR_TABLE, GenConfig, HouseGraph
from exploration.explore_utils import ObservationDict
from melelab import prompts
from queries.query_utils import Query, QuerySet

from .llm_client import LLMBackendError
from .serializers import AnswerLineSerializer

logger = logging.getLogger(__name__)

_YES_NO = re.compile(r'\b(yes|no)\b', re.IGNORECASE)


class AnswerError(RuntimeError):
    def __init__(self, message, query_index=None, transcript=None):
        super().__init__(message)
        self.query_index = query_index
        self.transcript = transcript or []


class AnswerUnparseable(AnswerError):
    pass


@dataclass(frozen=True)
class HeuristicParams:
    prior: Mapping[Tuple[str, str], float] = field(default_factory=lambda: DEFAULT_PRIOR_TABLE)
    threshold: float = 0.5
    flip_noise: float = 0.1
    seed: int = 0
    default_prior: float = 0.0

    def __post_init__(self):
        for name in ('threshold', 'flip_noise', 'default_prior'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} = {value} is outside [0, 1]")
        for key, p in self.prior.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"prior {key} = {p} is outside [0, 1]")

    @classmethod
    def from_settings(cls, **overrides) -> 'HeuristicParams':
        defaults = settings.MELE_LAB['HEURISTIC']
        values = {
            'threshold': defaults['THRESHOLD'],
            'flip_noise': defaults['FLIP_NOISE'],
            'seed': defaults['SEED'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_gen_config(cls, gen: GenConfig, **overrides) -> 'HeuristicParams':
        """Agents share the prior the house was sampled from."""
        values = {'prior': gen.priors, 'default_prior': gen.default_prior}
        values.update(overrides)
        return cls.from_settings(**values)


def invert(a: int) -> int:
    return 1 - a


def heuristic_answer(obs: ObservationDict, q: Query, p: HeuristicParams, house: HouseGraph,
                     agent_id: int = 0, query_index: int = 0) -> int:
    """
    Observation lookup first, then the common-sense prior against the
    threshold; the result is flipped with probability ``flip_noise``.
    """
    if obs.seen(q.r, q.o):
        answer = 1
    else:
        key = (house.room_type(q.r), house.object_catalog[q.o])
        answer = int(p.prior.get(key, p.default_prior) >= p.threshold)
    draw = np.random.default_rng([p.seed, agent_id, query_index]).random()
    return invert(answer) if draw < p.flip_noise else answer


def parse_yes_no(reply: str) -> Optional[int]:
    """First standalone YES/NO token, any case; None when there is none."""
    match = _YES_NO.search(reply or '')
    if match is None:
        return None
    return 1 if match.group(1).lower() == 'yes' else 0


def question_messages(obs: ObservationDict, q: Query, house: HouseGraph) -> List[dict]:
    return [
        {'role': 'system',
         'content': prompts.ANSWER_SYSTEM_PROMPT.format(observations=obs.prompt_text(house))},
        {'role': 'user',
         'content': prompts.QUESTION_TEMPLATE.format(item=house.object_catalog[q.o],
                                                     room=house.room_name(q.r))},
    ]


def ask_definite(client, messages: List[dict], transcript: List[dict]) -> int:
    """Send ``messages``; on an ambiguous reply reprompt once, then give up."""
    messages = list(messages)
    for attempt in range(2):
        reply = client.chat(messages)
        messages.append({'role': 'assistant', 'content': reply})
        answer = parse_yes_no(reply)
        if answer is not None:
            transcript.extend(messages)
            return answer
        if attempt == 0:
            messages.append({'role': 'user', 'content': prompts.ANSWER_REPROMPT})
    transcript.extend(messages)
    raise AnswerUnparseable(f"no YES/NO in reply after reprompt: {reply!r}", transcript=messages)


def llm_answer(client, obs: ObservationDict, q: Query, house: HouseGraph,
               transcript: Optional[List[dict]] = None) -> int:
    if transcript is None:
        transcript = []
    return ask_definite(client, question_messages(obs, q, house), transcript)


class HeuristicBackend:
    tag = 'heuristic'

    def __init__(self, house: HouseGraph, obs: ObservationDict, params: HeuristicParams,
                 agent_id: int = 0):
        self.house = house
        self.obs = obs
        self.params = params
        self.agent_id = agent_id
        self.transcripts: Dict[int, List[dict]] = {}

    def answer(self, q: Query, index: int) -> int:
        return heuristic_answer(self.obs, q, self.params, self.house, self.agent_id, index)


class LLMBackend:
    tag = 'llm'

    def __init__(self, client, house: HouseGraph, obs: ObservationDict, agent_id: int = 0):
        self.client = client
        self.house = house
        self.obs = obs
        self.agent_id = agent_id
        self.transcripts: Dict[int, List[dict]] = {}

    def answer(self, q: Query, index: int) -> int:
        transcript = self.transcripts.setdefault(index, [])
        return llm_answer(self.client, self.obs, q, self.house, transcript)


class MaliciousBackend:
    """Inverts every answer of the wrapped backend."""

    def __init__(self, inner):
        self.inner = inner

    @property
    def tag(self):
        return f'malicious({self.inner.tag})'

    @property
    def agent_id(self):
        return self.inner.agent_id

    @property
    def obs(self):
        return self.inner.obs

    @property
    def transcripts(self):
        return self.inner.transcripts

    def answer(self, q: Query, index: int) -> int:
        return invert(self.inner.answer(q, index))


@dataclass
class AnswerRecord:
    agent_id: int
    backend: str
    answers: Dict[int, int] = field(default_factory=dict)
    transcripts: Dict[int, List[dict]] = field(default_factory=dict)

    def vector(self, indices: Iterable[int]) -> np.ndarray:
        try:
            return np.array([self.answers[i] for i in indices], dtype=int)
        except KeyError as exc:
            raise AnswerError(f"agent {self.agent_id} has no answer for query {exc.args[0]}",
                              query_index=exc.args[0]) from None


def answer_all(backend, qs: QuerySet, indices: Optional[Sequence[int]] = None) -> AnswerRecord:
    """Answer each query independently; the first failure aborts the whole record."""
    if indices is None:
        indices = range(len(qs))
    answers = {}
    for index in indices:
        try:
            answers[index] = int(backend.answer(qs[index], index))
        except AnswerError as exc:
            exc.query_index = index
            raise
        except LLMBackendError as exc:
            raise AnswerError(f"agent {backend.agent_id}, query {index}: {exc}",
                              query_index=index) from exc
    record = AnswerRecord(agent_id=backend.agent_id, backend=backend.tag, answers=answers,
                          transcripts=dict(backend.transcripts))
    logger.debug("agent %s (%s) answered %d queries, %d yes", record.agent_id, record.backend,
                 len(answers), sum(answers.values()))
    return record


def save_answers(records: Sequence[AnswerRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        for record in records:
            for index, answer in sorted(record.answers.items()):
                line = {'agent': record.agent_id, 'query_index': index, 'answer': answer}
                fh.write(json.dumps(line, sort_keys=True) + '\n')
    return path


def load_answers(path) -> List[AnswerRecord]:
    records: Dict[int, AnswerRecord] = {}
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            serializer = AnswerLineSerializer(data=json.loads(raw))
            if not serializer.is_valid():
                raise AnswerError(f"{path}:{lineno}: {dict(serializer.errors)}")
            data = serializer.validated_data
            record = records.setdefault(data['agent'], AnswerRecord(data['agent'], 'file'))
            if data['query_index'] in record.answers:
                raise AnswerError(f"{path}:{lineno}: duplicate answer for agent "
                                  f"{data['agent']} query {data['query_index']}")
            record.answers[data['query_index']] = data['answer']
    return [records[agent] for agent in sorted(records)]


def save_transcripts(records: Sequence[AnswerRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        str(record.agent_id): {str(i): msgs for i, msgs in sorted(record.transcripts.items())}
        for record in records if record.transcripts
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    return path
