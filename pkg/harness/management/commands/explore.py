from dataclasses import asdict

from answering.llm_client import ChatClient
from exploration.explore_utils import POLICY_KINDS, save_observations

from ...trial import build_observations, needs_client
from ..base import LabCommand


class Command(LabCommand):
    help = "Explore the house with every configured agent (--seed seeds detection noise)"

    def add_lab_arguments(self, parser):
        parser.add_argument('--house', help='House file (default: the config house)')
        parser.add_argument('--agent', type=int, help='Only write this agent')
        parser.add_argument('--steps', type=int, help='Moves per agent')
        parser.add_argument('--policy', choices=POLICY_KINDS, help='Policy for every agent')

    def run(self, cfg, out, seed, options):
        changes = {}
        if options['steps'] is not None:
            changes['steps'] = options['steps']
        if seed is not None:
            changes['noise'] = dict(cfg.noise, seed=seed)
        if options['policy']:
            changes['agents'] = [dict(asdict(a), policy=options['policy']) for a in cfg.agents]
        cfg = cfg.replace(observations='explore', **changes)

        house = self.house_from(cfg, options['house'])
        client = None
        if needs_client(cfg, cfg.agents):
            client = ChatClient.from_config(cfg.llm)
        observations = build_observations(cfg, house, cfg.agents, client)

        for k, obs in enumerate(observations):
            if options['agent'] is not None and k != options['agent']:
                continue
            path = save_observations(obs, house, out / f'observations_agent{k}.json')
            seen = sum(len(items) for items in obs.room_items.values())
            self.success(f"agent {k}: {len(obs.room_items)} rooms, {seen} items -> {path}")
