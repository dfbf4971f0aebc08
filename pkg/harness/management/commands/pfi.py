from django.conf import settings

from analysis.feature_importance import per_room_pfi_experiment
from analysis.metrics import MetricError
from analysis.tree_export import write_dot
from answering.answer_utils import load_answers
from queries.query_utils import load_queries

from ...trial import prepare
from ..base import LabCommand


class Command(LabCommand):
    help = ('Per-room permutation feature importance of decision-tree CAMs '
            '(--seed seeds the splits, trees and permutations)')

    def add_lab_arguments(self, parser):
        parser.add_argument('--house', help='House file, with --queries and --answers')
        parser.add_argument('--queries', help='queries.jsonl (default: rebuilt from the config)')
        parser.add_argument('--answers', help='answers.jsonl (default: rebuilt from the config)')
        parser.add_argument('--room', type=int, nargs='*', help='Rooms to analyse (default: all)')
        parser.add_argument('--trials', type=int)
        parser.add_argument('--repeats', type=int)

    def run(self, cfg, out, seed, options):
        lab = settings.MELE_LAB['ANALYSIS']
        if options['queries'] and options['answers']:
            house = self.house_from(cfg, options['house'])
            qs = load_queries(options['queries'], house)
            records = load_answers(options['answers'])
        else:
            workspace = prepare(cfg)
            house, qs, records = workspace.house, workspace.qs, workspace.records

        seed = cfg.seeds[0] if seed is None else seed
        trials = options['trials'] or lab['PFI_TRIALS']
        repeats = options['repeats'] or lab['PFI_REPEATS']
        for room in options['room'] or sorted(house.rooms):
            try:
                result = per_room_pfi_experiment(
                    qs, records, room, trials=trials, repeats=repeats, seed=seed,
                    val_fraction=lab['VAL_FRACTION'], near_constant=lab['NEAR_CONSTANT'],
                    hyper=cfg.hyperparams('dt'))
            except MetricError as exc:
                self.stderr.write(f"room {room}: {exc}")
                continue
            result.report.to_csv(out / f'pfi_room{room}.csv')
            result.answer_share.to_csv(out / f'answer_share_room{room}.csv', index=False,
                                       float_format='%.6f')
            write_dot(result.models[0], out / f'tree_room{room}.dot', result.feature_names)

            self.stdout.write(f"room {room} ({house.room_name(room)}), "
                              f"accuracy {result.report.base_accuracy:.3f}")
            self.stdout.write(result.report.table.to_string(index=False, float_format='%.4f'))
            if result.flagged:
                self.stdout.write(self.style.WARNING(
                    f"near-constant answerers: {', '.join(result.flagged)}"))
        self.success(f"per-room importance -> {out}")
