"""
Turn-based debate between agents over a single query.

Two modes share the same turn order (ascending agent id, every round):
``simulated`` pulls an agent toward the peer majority unless it is
stubborn (a split peer vote pulls toward ``tie_break``). ``llm`` runs the
actual conversation through a chat backend.
Either way the final answer is the majority vote of post-debate answers.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from answering.answer_utils import AnswerError, ask_definite, parse_yes_no
from answering.llm_client import LLMBackendError
from melelab import prompts

from .aggregators import AggregationError, majority_vote

logger = logging.getLogger(__name__)

DEBATE_MODES = ('simulated', 'llm')


@dataclass
class DebateState:
    answers: List[int]
    stubbornness: List[float]
    mode: str = 'simulated'
    initial: List[int] = field(default_factory=list)
    transcript: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in DEBATE_MODES:
            raise AggregationError(f"unknown debate mode '{self.mode}'")
        if len(self.stubbornness) != len(self.answers):
            raise AggregationError("one stubbornness value per agent")
        if any(a not in (0, 1) for a in self.answers):
            raise AggregationError("debate answers must be 0/1")
        if any(not 0.0 <= s <= 1.0 for s in self.stubbornness):
            raise AggregationError("stubbornness must lie in [0, 1]")
        if not self.initial:
            self.initial = list(self.answers)

    @classmethod
    def from_answers(cls, answers: Sequence[int], stubbornness=0.5,
                     mode: str = 'simulated') -> 'DebateState':
        if isinstance(stubbornness, (int, float)):
            stubbornness = [float(stubbornness)] * len(answers)
        return cls(answers=[int(a) for a in answers], stubbornness=list(stubbornness), mode=mode)

    def record(self, agent: int, round_: int, utterance, answer: int) -> None:
        self.transcript.append(
            {'agent': agent, 'round': round_, 'utterance': utterance, 'answer': answer})


def _peer_majority(answers: Sequence[int], agent: int, tie_break: int = 0) -> Optional[int]:
    peers = [a for k, a in enumerate(answers) if k != agent]
    if not peers:
        return None
    return majority_vote(peers, tie_break)


def _simulate(state: DebateState, rounds: int, rng: np.random.Generator,
              tie_break: int = 0) -> None:
    for round_ in range(1, rounds + 1):
        for agent in range(len(state.answers)):
            state.record(agent, round_, state.answers[agent], state.answers[agent])
            pull = _peer_majority(state.answers, agent, tie_break)
            draw = rng.random()
            if pull is not None and pull != state.answers[agent] \
                    and draw < 1.0 - state.stubbornness[agent]:
                state.answers[agent] = pull


def _conversation(state: DebateState) -> str:
    if not state.transcript:
        return prompts.DEBATE_NO_HISTORY
    lines = [f"Agent {turn['agent']}: {turn['utterance']}" for turn in state.transcript]
    return prompts.DEBATE_HISTORY.format(conversation='\n'.join(lines))


def _system_prompt(state, agent, q, house, observations):
    return prompts.DEBATE_SYSTEM_PROMPT.format(
        index=agent,
        observations=observations[agent].prompt_text(house),
        object=house.object_catalog[q.o],
        room=house.room_name(q.r),
        initial_answer=prompts.answer_word(state.initial[agent]),
        history=_conversation(state),
    )


def _converse(state: DebateState, q, rounds: int, client, house, observations) -> None:
    try:
        for round_ in range(1, rounds + 1):
            for agent in range(len(state.answers)):
                messages = [
                    {'role': 'system', 'content': _system_prompt(state, agent, q, house, observations)},
                    {'role': 'user', 'content': prompts.DEBATE_TURN_PROMPT},
                ]
                utterance = client.chat(messages)
                stance = parse_yes_no(utterance)
                if stance is not None:
                    state.answers[agent] = stance
                state.record(agent, round_, utterance, state.answers[agent])

        if rounds == 0:
            return
        finals = []
        for agent in range(len(state.answers)):
            messages = [
                {'role': 'system', 'content': _system_prompt(state, agent, q, house, observations)},
                {'role': 'user', 'content': prompts.DEBATE_FINAL_PROMPT},
            ]
            exchange: List[dict] = []
            finals.append(ask_definite(client, messages, exchange))
            state.record(agent, 'final', exchange[-1]['content'], finals[-1])
        state.answers = finals
    except (LLMBackendError, AnswerError) as exc:
        raise AggregationError(f"debate on ({q.o}, {q.r}) failed: {exc}") from exc


def run_debate(state: DebateState, q, rounds: int, seed: int, *, client=None, house=None,
               observations: Optional[Sequence] = None, tie_break: int = 0) -> int:
    """Run ``rounds`` rounds on ``state`` in place and return the final vote."""
    if rounds < 0:
        raise AggregationError("rounds must be non-negative")
    if state.mode == 'simulated':
        # keyed by the query so debates are independent of evaluation order
        _simulate(state, rounds, np.random.default_rng([seed, q.o, q.r]), tie_break)
    else:
        if client is None or house is None or observations is None:
            raise AggregationError("llm debate needs a client, the house and agent observations")
        _converse(state, q, rounds, client, house, observations)
    return majority_vote(state.answers, tie_break)


def save_debate_transcripts(states: Mapping[int, DebateState], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        str(index): {
            'mode': state.mode,
            'initial': state.initial,
            'final': state.answers,
            'transcript': state.transcript,
        }
        for index, state in sorted(states.items())
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    return path
