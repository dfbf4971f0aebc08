from queries.query_utils import generate_queries, save_queries, save_split, train_test_split

from ..base import LabCommand


class Command(LabCommand):
    help = 'Generate the balanced query set and its train/test split (--seed seeds the split)'

    def add_lab_arguments(self, parser):
        parser.add_argument('--house', help='House file (default: the config house)')
        parser.add_argument('--query-seed', type=int, help='Seed for negative-room draws')
        parser.add_argument('--test-fraction', type=float)
        parser.add_argument('--skip-saturated', action='store_true',
                            help='Drop objects present in every room instead of failing')

    def run(self, cfg, out, seed, options):
        house = self.house_from(cfg, options['house'])
        query_seed = cfg.query_seed if options['query_seed'] is None else options['query_seed']
        qs = generate_queries(house, query_seed,
                              skip_saturated=options['skip_saturated'] or cfg.skip_saturated)
        fraction = cfg.test_fraction if options['test_fraction'] is None else options['test_fraction']
        split_seed = cfg.seeds[0] if seed is None else seed
        qs = train_test_split(qs, fraction, split_seed)

        save_queries(qs, house, out / 'queries.jsonl')
        save_split(qs.split, out / 'split.json')
        self.success(f"{len(qs)} queries ({qs.positives} yes / {qs.negatives} no), "
                     f"{len(qs.split.test)} held out with seed {split_seed} -> {out}")
