import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from aggregation.debate import save_debate_transcripts
from analysis.charts import accuracy_chart

from .config import ExperimentConfig

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6f'


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def summarize(results: pd.DataFrame, order: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Mean, sample std and count of accuracy per method over completed seeds."""
    done = results.dropna(subset=['accuracy'])
    summary = (done.groupby('method', sort=False)['accuracy']
               .agg(mean='mean', std='std', n='count'))
    if order is not None:
        summary = summary.reindex([m for m in order if m in summary.index])
    summary['std'] = summary['std'].fillna(0.0)
    return summary.reset_index()


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    malicious_agent: Optional[int] = None
    agent_count: int = 0
    trials: List = field(default_factory=list)
    failed: List[dict] = field(default_factory=list)
    workspace: Optional[object] = field(default=None, repr=False, compare=False)

    @property
    def methods(self) -> List[str]:
        return self.config.method_names

    def trial(self, seed: int):
        for trial in self.trials:
            if trial.seed == seed:
                return trial
        raise KeyError(seed)

    def results_frame(self) -> pd.DataFrame:
        """One row per configured (seed, method); failed seeds keep an empty accuracy."""
        done = {trial.seed: trial for trial in self.trials}
        rows = []
        for seed in self.config.seeds:
            for method in self.methods:
                value = done[seed].accuracy[method] if seed in done else float('nan')
                rows.append({'seed': seed, 'method': method, 'accuracy': value})
        return pd.DataFrame(rows, columns=['seed', 'method', 'accuracy'])

    def agreement_frame(self) -> pd.DataFrame:
        """Per (seed, method, agent) agreement; a failed seed gets one error row per method."""
        columns = ['seed', 'method', 'agent', 'agreement', 'error']
        done = {trial.seed: trial for trial in self.trials}
        failed = {f['seed']: f"{f['stage']}: {f['error']}" for f in self.failed}
        rows = []
        for seed in self.config.seeds:
            for method in self.methods:
                if seed in done:
                    rows.extend({'seed': seed, 'method': method, 'agent': agent,
                                 'agreement': value, 'error': ''}
                                for agent, value in enumerate(done[seed].agreement[method]))
                elif seed in failed:
                    rows.append({'seed': seed, 'method': method, 'agent': None,
                                 'agreement': float('nan'), 'error': failed[seed]})
        frame = pd.DataFrame(rows, columns=columns)
        frame['agent'] = frame['agent'].astype('Int64')
        return frame

    def summary_frame(self) -> pd.DataFrame:
        return summarize(self.results_frame(), self.methods)

    def agreement_summary_frame(self) -> pd.DataFrame:
        frame = self.agreement_frame()
        frame = frame[frame['error'] == '']
        summary = (frame.groupby(['method', 'agent'], sort=False)['agreement']
                   .agg(mean='mean', std='std', n='count').reset_index())
        summary['std'] = summary['std'].fillna(0.0)
        return summary

    def mean_accuracy(self, method: str) -> float:
        row = self.summary_frame().set_index('method')
        return float(row.at[method, 'mean'])

    def to_dict(self) -> dict:
        return {
            'run_id': self.config.run_id,
            'config_hash': self.config.config_hash,
            'config': self.config.to_dict(),
            'malicious_agent': self.malicious_agent,
            'agent_count': self.agent_count,
            'completed_seeds': sorted(trial.seed for trial in self.trials),
            'failed': sorted(self.failed, key=lambda f: f['seed']),
            'summary': self.summary_frame().to_dict(orient='records'),
            'agent_accuracy': {
                str(trial.seed): trial.agent_accuracy
                for trial in sorted(self.trials, key=lambda t: t.seed)
            },
        }


def write_predictions(report: ExperimentReport, path: Path) -> Path:
    qs = report.workspace.qs if report.workspace is not None else None
    with open(path, 'w', encoding='utf-8') as fh:
        for trial in sorted(report.trials, key=lambda t: t.seed):
            for method in report.methods:
                for index, prediction in zip(trial.test_indices, trial.predictions[method]):
                    line = {'seed': trial.seed, 'method': method, 'query_index': index,
                            'prediction': prediction}
                    if qs is not None:
                        line['label'] = int(qs[index].y)
                    fh.write(json.dumps(line, sort_keys=True) + '\n')
    return path


def write_report(report: ExperimentReport, out_dir, chart: bool = False) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        'results': _write_csv(report.results_frame(), out_dir / 'results.csv'),
        'agreement': _write_csv(report.agreement_frame(), out_dir / 'agreement.csv'),
        'summary': _write_csv(report.summary_frame(), out_dir / 'summary.csv'),
        'agreement_summary': _write_csv(report.agreement_summary_frame(),
                                        out_dir / 'agreement_summary.csv'),
        'predictions': write_predictions(report, out_dir / 'predictions.jsonl'),
    }
    report_path = out_dir / 'report.json'
    report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + '\n',
                           encoding='utf-8')
    paths['report'] = report_path

    for trial in report.trials:
        if trial.debates:
            paths[f'debates_{trial.seed}'] = save_debate_transcripts(
                trial.debates, out_dir / 'debates' / f'seed_{trial.seed}.json')
    if chart:
        paths['chart'] = write_chart(out_dir)
    logger.info("wrote report %s to %s", report.config.run_id, out_dir)
    return paths


def read_results(out_dir) -> pd.DataFrame:
    path = Path(out_dir) / 'results.csv'
    if not path.exists():
        raise FileNotFoundError(f"no results.csv in {out_dir}; run evaluate first")
    return pd.read_csv(path)


def write_chart(out_dir) -> Path:
    results = read_results(out_dir).dropna(subset=['accuracy'])
    return accuracy_chart(results, Path(out_dir) / 'accuracy.png')


def compare_reports(baseline: ExperimentReport, attacked: ExperimentReport) -> pd.DataFrame:
    """
    Per method: mean accuracy with and without the malicious agent and whether
    every shared seed produced exactly the same test predictions.
    """
    base = baseline.summary_frame().set_index('method')['mean']
    hit = attacked.summary_frame().set_index('method')['mean']
    shared = sorted({t.seed for t in baseline.trials} & {t.seed for t in attacked.trials})
    rows = []
    for method in baseline.methods:
        identical = all(baseline.trial(seed).predictions[method]
                        == attacked.trial(seed).predictions[method] for seed in shared)
        rows.append({
            'method': method,
            'baseline_mean': float(base.get(method, float('nan'))),
            'malicious_mean': float(hit.get(method, float('nan'))),
            'delta': float(hit.get(method, float('nan')) - base.get(method, float('nan'))),
            'predictions_identical': bool(shared) and identical,
        })
    return pd.DataFrame(rows)
