from ...reporting import compare_reports, write_report
from ...trial import run_experiment
from ..base import LabCommand


class Command(LabCommand):
    help = 'Run an experiment with and without one inverted agent and compare the methods'

    def add_lab_arguments(self, parser):
        parser.add_argument('--agent', type=int, default=0, help='Agent to invert')
        parser.add_argument('--n-jobs', type=int, help='Seeds run on this many threads')

    def run(self, cfg, out, seed, options):
        changes = {}
        if seed is not None:
            changes['seeds'] = [seed]
        if options['n_jobs']:
            changes['n_jobs'] = options['n_jobs']
        cfg = cfg.replace(**changes)

        baseline = run_experiment(cfg)
        attacked = run_experiment(cfg, malicious_agent=options['agent'])
        write_report(baseline, out / 'baseline')
        write_report(attacked, out / 'malicious')

        table = compare_reports(baseline, attacked)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / 'ablation.csv', index=False, float_format='%.6f')
        self.stdout.write(table.to_string(index=False, float_format='%.4f'))
        self.success(f"agent {options['agent']} inverted -> {out / 'ablation.csv'}")
