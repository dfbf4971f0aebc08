import json

import numpy as np

from aggregation.debate import save_debate_transcripts
from analysis.metrics import accuracy
from analysis.tree_export import write_dot
from answering.answer_utils import load_answers
from answering.llm_client import ChatClient
from exploration.explore_utils import load_observations
from learners.registry import LEARNERS, save_model
from queries.query_utils import load_queries, load_split, train_test_split

from ...config import ConfigError
from ...trial import aggregate_predictions
from ..base import LabCommand


class Command(LabCommand):
    help = ('Aggregate saved answers on the test split with majority vote, debate or a CAM '
            '(--seed seeds the split, CAM training and simulated debate)')

    def add_lab_arguments(self, parser):
        parser.add_argument('--house', help='House file (default: the config house)')
        parser.add_argument('--queries', required=True, help='queries.jsonl')
        parser.add_argument('--answers', required=True, help='answers.jsonl')
        parser.add_argument('--split', help='split.json (default: a fresh seeded split)')
        parser.add_argument('--method', choices=('mv', 'debate', 'cam'), required=True)
        parser.add_argument('--algo', choices=list(LEARNERS), default='dt')
        parser.add_argument('--observations', nargs='+',
                            help='Per-agent observation files, needed for llm debate')

    def run(self, cfg, out, seed, options):
        house = self.house_from(cfg, options['house'])
        qs = load_queries(options['queries'], house)
        seed = cfg.seeds[0] if seed is None else seed
        qs = load_split(options['split'], qs) if options['split'] else \
            train_test_split(qs, cfg.test_fraction, seed)
        records = load_answers(options['answers'])
        answers = np.column_stack([r.vector(range(len(qs))) for r in records])
        cfg = cfg.replace(methods=[options['method']], cam_algos=[options['algo']])

        observations, client = None, None
        if options['method'] == 'debate' and cfg.debate['mode'] == 'llm':
            if not options['observations'] or len(options['observations']) != len(records):
                raise ConfigError("llm debate needs one --observations file per agent")
            observations = [load_observations(p, house) for p in options['observations']]
            client = ChatClient.from_config(cfg.llm)

        train, test = list(qs.split.train), list(qs.split.test)
        result = aggregate_predictions(cfg, qs, answers, train, test, seed, house=house,
                                       observations=observations, client=client)
        method = cfg.method_names[0]
        predictions = result.predictions[method]

        out.mkdir(parents=True, exist_ok=True)
        with open(out / 'predictions.jsonl', 'w', encoding='utf-8') as fh:
            for index, prediction in zip(test, predictions):
                fh.write(json.dumps({'method': method, 'query_index': index,
                                     'prediction': prediction, 'seed': seed},
                                    sort_keys=True) + '\n')
        if result.debates:
            save_debate_transcripts(result.debates, out / 'debates.json')
        for algo, model in result.models.items():
            save_model(model, out / f'model_{algo}.json')
            if algo == 'dt':
                names = ['object', 'room'] + [f'agent_{r.agent_id}' for r in records]
                write_dot(model, out / 'tree.dot', names)

        score = accuracy(predictions, qs.labels[test])
        self.success(f"{method}: accuracy {score:.4f} on {len(test)} test queries -> {out}")
