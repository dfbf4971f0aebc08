from ...reporting import write_report
from ...trial import run_experiment, write_workspace
from ..base import LabCommand


class Command(LabCommand):
    help = 'Run every seed of an experiment and write the results tables (--seed runs one seed)'

    def add_lab_arguments(self, parser):
        parser.add_argument('--n-jobs', type=int, help='Seeds run on this many threads')
        parser.add_argument('--agents', type=int, help='Use only the first N agents')
        parser.add_argument('--malicious', type=int, help='Invert this agent')
        parser.add_argument('--chart', action='store_true', help='Also write accuracy.png')
        parser.add_argument('--save-inputs', action='store_true',
                            help='Also write the house, observations, queries and answers')

    def run(self, cfg, out, seed, options):
        changes = {}
        if seed is not None:
            changes['seeds'] = [seed]
        if options['n_jobs']:
            changes['n_jobs'] = options['n_jobs']
        cfg = cfg.replace(**changes)

        report = run_experiment(cfg, malicious_agent=options['malicious'],
                                agent_count=options['agents'])
        write_report(report, out, chart=options['chart'] and bool(report.trials))
        if options['save_inputs'] and report.workspace is not None:
            write_workspace(report.workspace, out)

        self.stdout.write(report.summary_frame().to_string(index=False, float_format='%.4f'))
        for failure in report.failed:
            self.stderr.write(f"seed {failure['seed']} failed at {failure['stage']}: "
                              f"{failure['error']}")
        if not report.trials:
            raise RuntimeError(f"all {len(cfg.seeds)} trials failed; see {out / 'report.json'}")
        self.success(f"{cfg.run_id}: {len(report.trials)}/{len(cfg.seeds)} seeds -> {out}")
