"""
Trial pipeline: house, exploration, queries and answers are built once per
experiment (``prepare``); every seed then draws its own split, trains the
CAMs and runs the debates on the test rows (``run_trial``).
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from aggregation.aggregators import feature_matrix, majority_vote
from aggregation.debate import DebateState, run_debate
from analysis.metrics import accuracy, agreement
from answering.answer_utils import (
    AnswerRecord, HeuristicBackend, HeuristicParams, LLMBackend, MaliciousBackend, answer_all,
    save_answers, save_transcripts,
)
from answering.llm_client import ChatClient
from environment.house_utils import GenConfig, HouseGraph, generate_house, load_house, save_house
from environment.perception import NoiseParams
from exploration.explore_utils import (
    ObservationDict, Policy, explore_run, load_observations, oracle_observations,
    save_observations,
)
from learners.base import Dataset
from learners.registry import fit
from queries.query_utils import QuerySet, generate_queries, save_queries, train_test_split

from .config import AgentSpec, ConfigError, ExperimentConfig
from .reporting import ExperimentReport

logger = logging.getLogger(__name__)


class TrialError(RuntimeError):
    def __init__(self, stage: str, message: str, seed: Optional[int] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.seed = seed
        self.detail = message

    def to_dict(self) -> dict:
        return {'seed': self.seed, 'stage': self.stage, 'error': self.detail}


@contextmanager
def _stage(name: str, seed: Optional[int] = None):
    try:
        yield
    except TrialError:
        raise
    except (ValueError, KeyError, RuntimeError, OSError) as exc:
        raise TrialError(name, str(exc), seed) from exc


def derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class Workspace:
    """Seed-independent state shared by every trial of an experiment."""
    house: HouseGraph
    agents: List[AgentSpec]
    observations: List[ObservationDict]
    qs: QuerySet
    records: List[AnswerRecord]
    client: Optional[object] = None

    @property
    def answer_matrix(self) -> np.ndarray:
        indices = range(len(self.qs))
        return np.column_stack([record.vector(indices) for record in self.records])


@dataclass
class TrialReport:
    seed: int
    accuracy: Dict[str, float]
    agreement: Dict[str, List[float]]
    agent_accuracy: List[float]
    train_indices: List[int]
    test_indices: List[int]
    predictions: Dict[str, List[int]]
    debates: Dict[int, DebateState] = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            'seed': self.seed,
            'accuracy': self.accuracy,
            'agreement': self.agreement,
            'agent_accuracy': self.agent_accuracy,
            'n_train': len(self.train_indices),
            'n_test': len(self.test_indices),
        }


def build_house(cfg: ExperimentConfig) -> HouseGraph:
    if cfg.house_file:
        return load_house(cfg.house_file)
    return generate_house(GenConfig.from_payload(cfg.house))


def needs_client(cfg: ExperimentConfig, agents: List[AgentSpec]) -> bool:
    if any(a.backend == 'llm' for a in agents):
        return True
    if cfg.observations == 'explore' and any(
            a.policy == 'llm_guided' and not a.observations_file for a in agents):
        return True
    return 'debate' in cfg.methods and cfg.debate['mode'] == 'llm'


def room_partition(house: HouseGraph, n_agents: int) -> List[List[int]]:
    """Rooms dealt round-robin in id order."""
    rooms = sorted(house.rooms)
    return [rooms[k::n_agents] for k in range(n_agents)]


def default_start(house: HouseGraph, agent_id: int, n_agents: int) -> int:
    nodes = sorted(house.nodes)
    return nodes[(agent_id * len(nodes)) // n_agents]


def build_observations(cfg: ExperimentConfig, house: HouseGraph, agents: List[AgentSpec],
                       client=None) -> List[ObservationDict]:
    if cfg.observations == 'oracle_partition':
        # dealt over every configured agent, so a truncated team keeps its own share
        partition = room_partition(house, len(cfg.agents))
        return [oracle_observations(house, spec.rooms if spec.rooms is not None else partition[k])
                for k, spec in enumerate(agents)]

    observations = []
    for k, spec in enumerate(agents):
        if spec.observations_file:
            observations.append(load_observations(spec.observations_file, house))
            continue
        start = spec.start if spec.start is not None else default_start(house, k, len(agents))
        noise = NoiseParams(p_detect=cfg.noise['p_detect'], p_false=cfg.noise['p_false'],
                            seed=derived_seed(cfg.noise['seed'], k, 0))
        policy = Policy(spec.policy, spec.policy_params, seed=derived_seed(cfg.noise['seed'], k, 1))
        observations.append(explore_run(house, start, policy, cfg.steps, noise, client))
    return observations


def build_backends(cfg: ExperimentConfig, house: HouseGraph, agents: List[AgentSpec],
                   observations: List[ObservationDict], client=None,
                   malicious_agent: Optional[int] = None) -> list:
    if cfg.house_file:
        params = HeuristicParams.from_settings(**cfg.heuristic)
    else:
        gen = GenConfig.from_payload(cfg.house)
        params = HeuristicParams.from_gen_config(gen, **cfg.heuristic)
    backends = []
    for k, (spec, obs) in enumerate(zip(agents, observations)):
        if spec.backend == 'llm':
            backend = LLMBackend(client, house, obs, agent_id=k)
        else:
            backend = HeuristicBackend(house, obs, params, agent_id=k)
        if spec.malicious or k == malicious_agent:
            backend = MaliciousBackend(backend)
        backends.append(backend)
    return backends


def prepare(cfg: ExperimentConfig, malicious_agent: Optional[int] = None,
            agent_count: Optional[int] = None, client=None) -> Workspace:
    agents = list(cfg.agents)
    if agent_count is not None:
        if not 1 <= agent_count <= len(agents):
            raise ConfigError(f"agent_count {agent_count} outside 1..{len(agents)}")
        agents = agents[:agent_count]
    if malicious_agent is not None and not 0 <= malicious_agent < len(agents):
        raise ConfigError(f"malicious agent {malicious_agent} outside 0..{len(agents) - 1}")

    if client is None and needs_client(cfg, agents):
        with _stage('llm'):
            client = ChatClient.from_config(cfg.llm)

    with _stage('house'):
        house = build_house(cfg)
    with _stage('explore'):
        observations = build_observations(cfg, house, agents, client)
    with _stage('queries'):
        qs = generate_queries(house, cfg.query_seed, skip_saturated=cfg.skip_saturated)
    with _stage('answer'):
        backends = build_backends(cfg, house, agents, observations, client, malicious_agent)
        records = Parallel(n_jobs=cfg.n_jobs, prefer='threads')(
            delayed(answer_all)(backend, qs) for backend in backends)

    logger.info("prepared %s: %d rooms, %d agents, %d queries", cfg.run_id, len(house.rooms),
                len(agents), len(qs))
    return Workspace(house=house, agents=agents, observations=observations, qs=qs,
                     records=list(records), client=client)


@dataclass
class Aggregates:
    predictions: Dict[str, List[int]] = field(default_factory=dict)
    debates: Dict[int, DebateState] = field(default_factory=dict)
    models: Dict[str, object] = field(default_factory=dict)


def aggregate_predictions(cfg: ExperimentConfig, qs: QuerySet, answers: np.ndarray,
                          train: List[int], test: List[int], seed: int, house=None,
                          observations=None, client=None) -> Aggregates:
    """Every configured method's predictions on the ``test`` rows; CAMs train on ``train``."""
    out = Aggregates()
    if 'mv' in cfg.methods:
        with _stage('mv', seed):
            out.predictions['mv'] = [majority_vote(answers[i], cfg.tie_break) for i in test]
    if 'debate' in cfg.methods:
        with _stage('debate', seed):
            finals = []
            for i in test:
                state = DebateState.from_answers(answers[i], cfg.debate['stubbornness'],
                                                 cfg.debate['mode'])
                finals.append(run_debate(state, qs[i], cfg.debate['rounds'], seed,
                                         client=client, house=house, observations=observations,
                                         tie_break=cfg.tie_break))
                out.debates[i] = state
            out.predictions['debate'] = finals
    if cfg.cam_methods:
        X = feature_matrix(qs.queries, answers)
        labels = qs.labels
        for algo in cfg.cam_algos:
            with _stage(f'cam_{algo}', seed):
                model = fit(algo, Dataset(X[train], labels[train]), cfg.hyperparams(algo), seed)
                out.predictions[f'cam_{algo}'] = [int(p) for p in model.predict(X[test])]
                out.models[algo] = model
    return out


def run_trial(cfg: ExperimentConfig, seed: int, workspace: Optional[Workspace] = None,
              client=None) -> TrialReport:
    if workspace is None:
        workspace = prepare(cfg, client=client)
    qs = workspace.qs

    with _stage('split', seed):
        split = train_test_split(qs, cfg.test_fraction, seed).split
    train, test = list(split.train), list(split.test)
    answers = workspace.answer_matrix
    out = aggregate_predictions(cfg, qs, answers, train, test, seed, house=workspace.house,
                                observations=workspace.observations, client=workspace.client)

    with _stage('metrics', seed):
        truth = qs.labels[test]
        scores = {method: accuracy(out.predictions[method], truth) for method in cfg.method_names}
        agreements = {
            method: [agreement(answers[test, k], out.predictions[method])
                     for k in range(answers.shape[1])]
            for method in cfg.method_names
        }
        own = [accuracy(answers[test, k], truth) for k in range(answers.shape[1])]

    logger.debug("seed %s: %s", seed, ', '.join(f'{m}={a:.3f}' for m, a in scores.items()))
    return TrialReport(seed=seed, accuracy=scores, agreement=agreements, agent_accuracy=own,
                       train_indices=train, test_indices=test, predictions=out.predictions,
                       debates=out.debates)


def _guarded_trial(cfg, seed, workspace):
    try:
        return run_trial(cfg, seed, workspace)
    except TrialError as exc:
        exc.seed = seed
        logger.warning("trial seed %s failed at %s: %s", seed, exc.stage, exc.detail)
        return exc


def run_experiment(cfg: ExperimentConfig, malicious_agent: Optional[int] = None,
                   agent_count: Optional[int] = None, client=None) -> ExperimentReport:
    """Every configured seed, on joblib threads when ``cfg.n_jobs`` > 1."""
    report = ExperimentReport(config=cfg, malicious_agent=malicious_agent,
                              agent_count=agent_count or len(cfg.agents))
    try:
        workspace = prepare(cfg, malicious_agent, agent_count, client)
    except TrialError as exc:
        logger.error("experiment %s failed before any split: %s", cfg.run_id, exc)
        report.failed = [dict(exc.to_dict(), seed=seed) for seed in cfg.seeds]
        return report

    outcomes = Parallel(n_jobs=cfg.n_jobs, prefer='threads')(
        delayed(_guarded_trial)(cfg, seed, workspace) for seed in cfg.seeds)
    report.trials = [o for o in outcomes if isinstance(o, TrialReport)]
    report.failed = [o.to_dict() for o in outcomes if isinstance(o, TrialError)]
    if report.failed:
        logger.warning("%d of %d trials failed; summary covers the %d that completed",
                       len(report.failed), len(cfg.seeds), len(report.trials))
    report.workspace = workspace
    return report


def write_workspace(workspace: Workspace, out_dir) -> Dict[str, Path]:
    """House, per-agent observations, queries and answers of a prepared experiment."""
    out_dir = Path(out_dir)
    paths = {
        'house': save_house(workspace.house, out_dir / 'house.json'),
        'queries': save_queries(workspace.qs, workspace.house, out_dir / 'queries.jsonl'),
        'answers': save_answers(workspace.records, out_dir / 'answers.jsonl'),
    }
    for k, obs in enumerate(workspace.observations):
        paths[f'observations_{k}'] = save_observations(
            obs, workspace.house, out_dir / f'observations_agent{k}.json')
    if any(record.transcripts for record in workspace.records):
        paths['transcripts'] = save_transcripts(workspace.records, out_dir / 'transcripts.json')
    return paths
