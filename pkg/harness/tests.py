import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework.test import APIClient

from melelab import prompts

from .config import ConfigError, ExperimentConfig
from .reporting import compare_reports, read_results, write_report
from .trial import (
    TrialError, build_backends, prepare, room_partition, run_experiment, run_trial,
)

BENCHMARKS = Path(__file__).resolve().parent / 'benchmarks'


def small_config(**changes):
    data = {
        'name': 'small',
        'house': {'num_rooms': 4, 'nodes_per_room': [1, 2], 'uniform_prior': 0.4, 'seed': 3},
        'agents': [{}, {}, {}],
        'observations': 'oracle_partition',
        'heuristic': {'flip_noise': 0.1, 'seed': 0},
        'methods': ['mv', 'debate', 'cam'],
        'cam_algos': ['dt'],
        'test_fraction': 0.2,
        'seeds': [0, 1, 2],
        'skip_saturated': True,
    }
    data.update(changes)
    return ExperimentConfig.from_dict(data)


class ExperimentConfigTests(SimpleTestCase):
    def test_defaults_are_materialized(self):
        cfg = ExperimentConfig.from_dict({})
        data = cfg.to_dict()
        self.assertEqual(data['seeds'], [0, 1, 2, 3, 4])
        self.assertEqual(data['test_fraction'], 0.10)
        self.assertEqual(data['steps'], 10)
        self.assertEqual(len(data['agents']), 3)
        self.assertEqual(data['agents'][0]['policy'], 'greedy_novelty')
        self.assertEqual(data['debate'], {'rounds': 2, 'stubbornness': 0.5, 'mode': 'simulated'})
        self.assertEqual(data['cam_hyperparams']['rf']['n_estimators'], 1000)

    def test_partial_sections_merge_with_defaults(self):
        cfg = ExperimentConfig.from_dict({'noise': {'p_detect': 0.5},
                                          'cam_hyperparams': {'rf': {'n_estimators': 10}}})
        self.assertEqual(cfg.noise['p_detect'], 0.5)
        self.assertEqual(cfg.noise['p_false'], 0.01)
        self.assertEqual(cfg.hyperparams('rf'), {'n_estimators': 10, 'max_depth': None, 'n_jobs': 1})

    def test_hash_ignores_execution_details(self):
        cfg = small_config()
        self.assertEqual(cfg.config_hash, cfg.replace(n_jobs=4, output_dir='/tmp/x').config_hash)
        self.assertNotEqual(cfg.config_hash, cfg.replace(seeds=[0]).config_hash)
        self.assertTrue(cfg.run_id.startswith('small-'))
        self.assertEqual(len(cfg.config_hash), 64)

    def test_method_names(self):
        cfg = small_config(cam_algos=['dt', 'gbt'])
        self.assertEqual(cfg.method_names, ['mv', 'debate', 'cam_dt', 'cam_gbt'])
        self.assertEqual(small_config(methods=['mv']).method_names, ['mv'])

    def test_invalid_documents(self):
        for bad in ({'seeds': []}, {'methods': []}, {'methods': ['vote']},
                    {'cam_algos': ['xgboost']}, {'agents': []}, {'seeds': [1, 1]},
                    {'cam_hyperparams': {'nope': {}}},
                    {'house': {'num_rooms': 2}, 'house_file': 'h.json'},
                    {'test_fraction': 1.5}):
            with self.assertRaises(ConfigError, msg=str(bad)):
                ExperimentConfig.from_dict(bad)

    def test_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'cfg.json'
            path.write_text(json.dumps({'seeds': [3], 'name': 'loaded'}))
            cfg = ExperimentConfig.load(path)
            self.assertEqual((cfg.seeds, cfg.name), ([3], 'loaded'))
            path.write_text('[1, 2]')
            with self.assertRaises(ConfigError):
                ExperimentConfig.load(path)
        with self.assertRaises(ConfigError):
            ExperimentConfig.load('/nonexistent/cfg.json')

    def test_benchmark_configs_are_valid(self):
        for path in sorted(BENCHMARKS.glob('*.json')):
            cfg = ExperimentConfig.load(path)
            self.assertEqual(cfg.seeds, [0, 1, 2, 3, 4], path.name)
            self.assertEqual(cfg.observations, 'oracle_partition', path.name)
            self.assertTrue(cfg.skip_saturated, path.name)


class DeskPatternTests(SimpleTestCase):
    """Noise-free partitioned team: every positive is seen by its room's owner only."""

    def clean_config(self, **changes):
        data = dict(
            house={'num_rooms': 4, 'nodes_per_room': [1, 2], 'uniform_prior': 0.4,
                   'num_objects': 60, 'seed': 3},
            heuristic={'flip_noise': 0.0, 'seed': 0},
            cam_algos=['dt', 'gbt'],
            cam_hyperparams={'dt': {'max_depth': 3},
                             'gbt': {'n_estimators': 30, 'max_depth': 3, 'learning_rate': 0.1}},
        )
        data.update(changes)
        return small_config(**data)

    def test_benchmarks_have_enough_queries(self):
        for path in sorted(BENCHMARKS.glob('desk_*.json')):
            workspace = prepare(ExperimentConfig.load(path))
            self.assertGreaterEqual(len(workspace.qs), 300, path.name)

    def test_heuristic_agents_share_the_generator_prior(self):
        cfg = self.clean_config()
        workspace = prepare(cfg)
        backends = build_backends(cfg, workspace.house, workspace.agents, workspace.observations)
        for backend in backends:
            self.assertEqual(dict(backend.params.prior), {})
            self.assertEqual(backend.params.default_prior, 0.4)
        # below threshold, so only the owner of a room ever says yes
        matrix = workspace.answer_matrix
        self.assertTrue((matrix.sum(axis=1) <= 1).all())
        labels = [q.y for q in workspace.qs]
        self.assertEqual(list(matrix.max(axis=1)), labels)

    def test_cams_beat_majority_vote(self):
        report = run_experiment(self.clean_config())
        self.assertEqual(report.failed, [])
        mv = report.mean_accuracy('mv')
        self.assertGreaterEqual(report.mean_accuracy('cam_dt'), mv + 0.15)
        self.assertGreaterEqual(report.mean_accuracy('cam_gbt'), report.mean_accuracy('cam_dt'))
        self.assertLessEqual(report.mean_accuracy('debate'), mv + 0.02)

    def test_inverting_an_agent_cannot_hurt_majority_vote_under_a_shared_prior(self):
        cfg = self.clean_config(methods=['mv', 'cam'], cam_algos=['dt'])
        baseline = run_experiment(cfg)
        inverted = run_experiment(cfg, malicious_agent=0)
        for before, after in zip(baseline.trials, inverted.trials):
            self.assertGreaterEqual(after.accuracy['mv'], before.accuracy['mv'])
            self.assertEqual(after.predictions['cam_dt'], before.predictions['cam_dt'])


class TrialTests(SimpleTestCase):
    def test_same_seed_same_report(self):
        cfg = small_config()
        workspace = prepare(cfg)
        first = run_trial(cfg, 1, workspace)
        second = run_trial(cfg, 1, prepare(cfg))
        self.assertEqual(first, second)
        self.assertEqual(json.dumps(first.to_dict(), sort_keys=True),
                         json.dumps(second.to_dict(), sort_keys=True))

    def test_only_configured_methods(self):
        trial = run_trial(small_config(methods=['mv']), 0)
        self.assertEqual(list(trial.accuracy), ['mv'])
        self.assertEqual(list(trial.agreement), ['mv'])

    def test_agreement_and_agent_accuracy_shapes(self):
        trial = run_trial(small_config(), 0)
        for method, values in trial.agreement.items():
            self.assertEqual(len(values), 3, method)
            self.assertTrue(all(0.0 <= v <= 1.0 for v in values))
        self.assertEqual(len(trial.agent_accuracy), 3)

    def test_perfect_information(self):
        cfg = small_config(agents=[{'rooms': [0, 1, 2, 3]}] * 3,
                           heuristic={'flip_noise': 0.0, 'threshold': 1.0})
        trial = run_trial(cfg, 0)
        self.assertEqual(trial.accuracy, {'mv': 1.0, 'debate': 1.0, 'cam_dt': 1.0})

    def test_single_agent_majority_is_its_own_accuracy(self):
        report = run_experiment(small_config(methods=['mv']), agent_count=1)
        self.assertEqual(len(report.trials), 3)
        for trial in report.trials:
            self.assertEqual(trial.accuracy['mv'], trial.agent_accuracy[0])

    def test_team_keeps_its_room_share_when_truncated(self):
        cfg = small_config()
        workspace = prepare(cfg, agent_count=1)
        expected = room_partition(workspace.house, 3)[0]
        self.assertEqual(sorted(workspace.observations[0].room_items), expected)

    def test_no_sway_debate_matches_majority_vote(self):
        cfg = small_config(methods=['mv', 'debate'], debate={'stubbornness': 1.0})
        for trial in run_experiment(cfg).trials:
            self.assertEqual(trial.accuracy['debate'], trial.accuracy['mv'])

    def test_serial_and_parallel_agree(self):
        cfg = small_config(cam_algos=['dt', 'gbt'])
        serial = run_experiment(cfg)
        parallel = run_experiment(cfg.replace(n_jobs=3))
        pd.testing.assert_frame_equal(serial.results_frame(), parallel.results_frame())
        pd.testing.assert_frame_equal(serial.agreement_frame(), parallel.agreement_frame())
        with tempfile.TemporaryDirectory() as tmp:
            write_report(serial, Path(tmp) / 'a')
            write_report(parallel, Path(tmp) / 'b')
            for name in ('results.csv', 'agreement.csv', 'summary.csv', 'predictions.jsonl'):
                self.assertEqual((Path(tmp) / 'a' / name).read_bytes(),
                                 (Path(tmp) / 'b' / name).read_bytes(), name)

    def test_malicious_agent_leaves_tree_cams_unchanged(self):
        cfg = small_config(methods=['mv', 'cam'], cam_algos=['dt', 'rf', 'gbt'],
                           cam_hyperparams={'rf': {'n_estimators': 15},
                                            'gbt': {'n_estimators': 20}})
        baseline = run_experiment(cfg)
        attacked = run_experiment(cfg, malicious_agent=1)
        table = compare_reports(baseline, attacked).set_index('method')
        for method in ('cam_dt', 'cam_rf', 'cam_gbt'):
            self.assertTrue(table.at[method, 'predictions_identical'], method)
            self.assertEqual(table.at[method, 'delta'], 0.0)
        for seed in cfg.seeds:
            self.assertAlmostEqual(attacked.trial(seed).agent_accuracy[1],
                                   1.0 - baseline.trial(seed).agent_accuracy[1])

    def test_stage_tagged_failures(self):
        cfg = small_config(house={}, house_file='/nonexistent/house.json')
        with self.assertRaises(TrialError) as ctx:
            run_trial(cfg, 0)
        self.assertEqual(ctx.exception.stage, 'house')

        with self.assertLogs('harness.trial', level='ERROR'):
            report = run_experiment(cfg)
        self.assertEqual(report.trials, [])
        self.assertEqual([f['seed'] for f in report.failed], [0, 1, 2])
        frame = report.results_frame()
        self.assertEqual(len(frame), 9)
        self.assertTrue(frame['accuracy'].isna().all())

        agreement = report.agreement_frame()
        self.assertEqual(len(agreement), 9)
        self.assertTrue(agreement['agreement'].isna().all())
        self.assertTrue(agreement['agent'].isna().all())
        self.assertTrue(agreement['error'].str.startswith('house: ').all())
        self.assertTrue(report.agreement_summary_frame().empty)

    def test_split_failure_marks_every_seed(self):
        cfg = small_config(test_fraction=1.0)
        with self.assertLogs('harness.trial', level='WARNING'):
            report = run_experiment(cfg)
        self.assertEqual({f['stage'] for f in report.failed}, {'split'})
        self.assertEqual(len(report.failed), 3)

    def test_config_errors_are_not_trial_errors(self):
        with self.assertRaises(ConfigError):
            prepare(small_config(), agent_count=5)
        with self.assertRaises(ConfigError):
            prepare(small_config(), malicious_agent=3)


class ReportTests(SimpleTestCase):
    def test_report_files(self):
        cfg = small_config()
        report = run_experiment(cfg)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_report(report, tmp, chart=True)
            results = read_results(tmp)
            summary = pd.read_csv(paths['summary'])
            agreement = pd.read_csv(paths['agreement'])
            meta = json.loads(paths['report'].read_text())
            self.assertTrue(paths['chart'].exists())
            self.assertTrue((Path(tmp) / 'debates' / 'seed_0.json').exists())

        self.assertEqual(list(results.columns), ['seed', 'method', 'accuracy'])
        self.assertEqual(len(results), 3 * 3)
        self.assertEqual(list(summary['method']), ['mv', 'debate', 'cam_dt'])
        self.assertEqual(list(summary['n']), [3, 3, 3])
        self.assertEqual(list(agreement.columns),
                         ['seed', 'method', 'agent', 'agreement', 'error'])
        self.assertTrue(agreement['error'].isna().all())
        self.assertEqual(len(agreement), 3 * 3 * 3)
        self.assertEqual(meta['config_hash'], cfg.config_hash)
        self.assertEqual(meta['config']['seeds'], [0, 1, 2])
        self.assertEqual(meta['completed_seeds'], [0, 1, 2])
        self.assertEqual(meta['failed'], [])

    def test_summary_mean_over_seeds(self):
        report = run_experiment(small_config(methods=['mv']))
        expected = sum(t.accuracy['mv'] for t in report.trials) / 3
        self.assertAlmostEqual(report.mean_accuracy('mv'), expected)


class ApiTests(SimpleTestCase):
    def setUp(self):
        self.client = APIClient()

    def test_generate_house(self):
        response = self.client.post('/api/houses/generate/', {'num_rooms': 3, 'seed': 1},
                                    format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['status'], 'ok')
        self.assertEqual(len(response.data['house']['rooms']), 3)

    def test_generate_house_rejects_bad_parameters(self):
        response = self.client.post('/api/houses/generate/',
                                    {'num_rooms': 0, 'room_type_mix': ['attic']}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.data['status'], 'error')
        self.assertIn('num_rooms', response.data['errors'])
        self.assertIn('room_type_mix', response.data['errors'])

    def test_prompt_catalog(self):
        response = self.client.get('/api/prompts/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['prompts']['DEBATE_FINAL_PROMPT'],
                         prompts.DEBATE_FINAL_PROMPT)

    def test_run_trial(self):
        config = small_config(methods=['mv', 'cam']).to_dict()
        response = self.client.post('/api/trials/run/', {'config': config, 'seed': 2},
                                    format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['trial']['seed'], 2)
        self.assertEqual(set(response.data['trial']['accuracy']), {'mv', 'cam_dt'})

    def test_run_trial_errors(self):
        response = self.client.post('/api/trials/run/',
                                    {'config': {'agents': [{'backend': 'llm'}]}}, format='json')
        self.assertEqual(response.status_code, 400)
        response = self.client.post('/api/trials/run/', {'config': {'seeds': []}}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('config', response.data['errors'])
        config = small_config(test_fraction=1.0).to_dict()
        response = self.client.post('/api/trials/run/', {'config': config}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('split', response.data['errors'])


class CommandTests(SimpleTestCase):
    def call(self, name, **options):
        out = StringIO()
        call_command(name, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def write_config(self, tmp, **changes):
        path = Path(tmp) / 'cfg.json'
        path.write_text(json.dumps(small_config(**changes).to_dict()))
        return str(path)

    def test_file_pipeline(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self.write_config(tmp, observations='explore', steps=4)
            self.call('gen_house', config=cfg, out=tmp, seed=5, rooms=4, uniform_prior=0.4)
            house = str(Path(tmp) / 'house.json')
            self.call('explore', config=cfg, out=tmp, house=house)
            observations = [str(Path(tmp) / f'observations_agent{k}.json') for k in range(3)]
            self.call('gen_queries', config=cfg, out=tmp, house=house, seed=1,
                      skip_saturated=True)
            self.call('answer', config=cfg, out=tmp, house=house,
                      queries=str(Path(tmp) / 'queries.jsonl'), observations=observations)
            output = self.call('aggregate', config=cfg, out=tmp, house=house, method='cam',
                               queries=str(Path(tmp) / 'queries.jsonl'),
                               answers=str(Path(tmp) / 'answers.jsonl'),
                               split=str(Path(tmp) / 'split.json'))
            self.assertIn('cam_dt: accuracy', output)
            for name in ('house.json', 'queries.jsonl', 'split.json', 'answers.jsonl',
                         'predictions.jsonl', 'model_dt.json', 'tree.dot'):
                self.assertTrue((Path(tmp) / name).exists(), name)

            self.call('pfi', config=cfg, out=tmp, house=house, room=[0], trials=2, repeats=2,
                      queries=str(Path(tmp) / 'queries.jsonl'),
                      answers=str(Path(tmp) / 'answers.jsonl'))
            table = pd.read_csv(Path(tmp) / 'pfi_room0.csv')
            self.assertEqual(list(table['feature_name']),
                             ['object', 'agent_0', 'agent_1', 'agent_2'])
            self.assertTrue((Path(tmp) / 'tree_room0.dot').exists())

    def test_evaluate_and_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self.write_config(tmp)
            self.call('evaluate', config=cfg, out=tmp, save_inputs=True)
            first = (Path(tmp) / 'results.csv').read_bytes()
            self.call('evaluate', config=cfg, out=tmp, n_jobs=2)
            self.assertEqual((Path(tmp) / 'results.csv').read_bytes(), first)
            self.assertTrue((Path(tmp) / 'observations_agent0.json').exists())

            output = self.call('report', config=cfg, out=tmp, chart=True)
            self.assertIn('cam_dt', output)
            self.assertTrue((Path(tmp) / 'accuracy.png').exists())

    def test_evaluate_single_seed(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.call('evaluate', config=self.write_config(tmp), out=tmp, seed=2)
            self.assertEqual(set(read_results(tmp)['seed']), {2})

    def test_ablate_malicious(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self.write_config(tmp, methods=['mv', 'cam'])
            self.call('ablate_malicious', config=cfg, out=tmp, agent=2)
            table = pd.read_csv(Path(tmp) / 'ablation.csv').set_index('method')
            self.assertTrue(table.at['cam_dt', 'predictions_identical'])
            self.assertTrue((Path(tmp) / 'baseline' / 'report.json').exists())
            self.assertTrue((Path(tmp) / 'malicious' / 'report.json').exists())

    def test_domain_errors_become_command_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError):
                self.call('gen_house', out=tmp, rooms=0)
            with self.assertRaises(CommandError):
                self.call('report', out=tmp)
            with self.assertRaises(CommandError):
                self.call('evaluate', config=self.write_config(tmp, test_fraction=1.0), out=tmp)
