import json

from ...reporting import read_results, summarize, write_chart
from ..base import LabCommand


class Command(LabCommand):
    help = 'Summarize the results of a finished evaluate run in --out'

    def add_lab_arguments(self, parser):
        parser.add_argument('--chart', action='store_true', help='Write accuracy.png')

    def run(self, cfg, out, seed, options):
        results = read_results(out)
        report_path = out / 'report.json'
        if report_path.exists():
            meta = json.loads(report_path.read_text(encoding='utf-8'))
            self.stdout.write(f"run {meta['run_id']} (config {meta['config_hash'][:12]})")
        order = list(dict.fromkeys(results['method']))
        self.stdout.write(summarize(results, order).to_string(index=False, float_format='%.4f'))
        if options['chart']:
            self.success(f"chart -> {write_chart(out)}")
