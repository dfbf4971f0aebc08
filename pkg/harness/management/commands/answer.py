from dataclasses import replace

from answering.answer_utils import answer_all, save_answers, save_transcripts
from answering.llm_client import ChatClient
from exploration.explore_utils import load_observations
from queries.query_utils import load_queries

from ...config import AgentSpec
from ...trial import build_backends
from ..base import LabCommand


class Command(LabCommand):
    help = 'Answer every query once per agent (--seed seeds the heuristic flips)'

    def add_lab_arguments(self, parser):
        parser.add_argument('--house', help='House file (default: the config house)')
        parser.add_argument('--queries', required=True, help='queries.jsonl')
        parser.add_argument('--observations', nargs='+', required=True,
                            help='One observation file per agent, in agent order')
        parser.add_argument('--malicious', type=int, help='Invert this agent')

    def run(self, cfg, out, seed, options):
        house = self.house_from(cfg, options['house'])
        qs = load_queries(options['queries'], house)

        agents = []
        for k, path in enumerate(options['observations']):
            spec = cfg.agents[k] if k < len(cfg.agents) else AgentSpec()
            agents.append(replace(spec, observations_file=path))
        observations = [load_observations(a.observations_file, house) for a in agents]
        if seed is not None:
            cfg = cfg.replace(heuristic=dict(cfg.heuristic, seed=seed))

        client = ChatClient.from_config(cfg.llm) if any(a.backend == 'llm' for a in agents) else None
        backends = build_backends(cfg, house, agents, observations, client, options['malicious'])
        records = [answer_all(backend, qs) for backend in backends]

        save_answers(records, out / 'answers.jsonl')
        if any(r.transcripts for r in records):
            save_transcripts(records, out / 'transcripts.json')
        for record in records:
            yes = sum(record.answers.values())
            self.success(f"agent {record.agent_id} ({record.backend}): {yes}/{len(qs)} yes")
