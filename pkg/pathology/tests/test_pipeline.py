import shutil
import tempfile
from pathlib import Path
from unittest import skipUnless

import pandas as pd
from django.conf import settings
from django.test import SimpleTestCase

from pathology.Ingest.artifacts import STAMP_NAME, read_json
from pathology.Ingest.cli import cli
from pathology.Network.nnet import TAPS

TINY_PROFILE = """\
synth_counts=HC=10,D1=10,D2=10,D3=10,D4=10,D5=10,D6=10
synth_duration_s=1.6
learning_rates=1e-3
batch_sizes=32
epochs=1
folds=2
widths=2,2,2,2,2
cka_probe_cap=16
"""
DESK_PROFILE = Path(settings.BASE_DIR) / 'config' / 'desk.env'


class StagedRun(SimpleTestCase):
    """Runs a list of CLI invocations once against a scratch cache."""
    profile = TINY_PROFILE
    steps = ()

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.root = Path(tempfile.mkdtemp())
        cls.config = cls.root / 'profile.env'
        cls.config.write_text(cls.profile, encoding='utf-8')
        cls.cache = cls.root / 'cache'
        for argv in cls.steps:
            assert cls.run_cli(*argv) == 0, argv

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.root, ignore_errors=True)
        super().tearDownClass()

    @classmethod
    def run_cli(cls, *argv):
        return cli([argv[0], '--config', str(cls.config), '--cache-dir', str(cls.cache), *argv[1:]])

    def report(self, experiment):
        return read_json(self.cache / 'reports' / experiment / 'report.json')


class PipelineTests(StagedRun):
    """Synthetic data through the Exp2 stages with a deliberately tiny network."""
    steps = (('synth',), ('preprocess',), ('featurize',), ('train', '--exp', 'Exp2'),
             ('evaluate', '--exp', 'Exp2'))

    def test_synth_manifest(self):
        rows = (self.cache / 'synth' / 'manifest.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(rows), 71)
        self.assertTrue((self.cache / 'synth' / STAMP_NAME).is_file())

    def test_preprocess_summary(self):
        summary = read_json(self.cache / 'preprocessed' / 'summary.json')
        self.assertEqual(summary['recordings'], 70)
        self.assertEqual(summary['kept'] + len(summary['dropped']), 70)
        self.assertEqual(set(summary['silence_removal_rate']), {'HC_F', 'HC_M', 'P_F', 'P_M'})

    def test_checkpoints_and_training_log(self):
        models = self.cache / 'models' / 'Exp2'
        for name in ('pd', 'mp', 'fp'):
            self.assertTrue((models / f"{name}.ckpt").is_file())
        training = read_json(models / 'training.json')
        self.assertEqual(training['classifiers']['mp']['class_names'][0], 'D1M')
        self.assertEqual(training['classifiers']['pd']['hyperparameters']['epochs'], 1)

    def test_report(self):
        report = read_json(self.cache / 'reports' / 'Exp2' / 'report.json')
        self.assertEqual(report['experiment'], 'Exp2')
        self.assertEqual(report['metrics']['mcc_definition'], 'R_K')
        self.assertTrue(0.0 <= report['metrics']['accuracy'] <= 1.0)
        self.assertEqual(sum(report['test_counts'].values()), sum(map(sum, report['confusion_matrix']['counts'])))
        self.assertIn('stage1', report)
        self.assertIn('Confusion matrix', (self.cache / 'reports' / 'Exp2' / 'report.txt').read_text())

    def test_up_to_date_stage_is_skipped(self):
        report = self.cache / 'reports' / 'Exp2' / 'report.json'
        before = report.stat().st_mtime_ns
        self.assertEqual(self.run_cli('evaluate', '--exp', 'Exp2'), 0)
        self.assertEqual(report.stat().st_mtime_ns, before)

    def test_forced_evaluation_is_reproducible(self):
        report = self.cache / 'reports' / 'Exp2' / 'report.json'
        before = report.read_bytes()
        self.assertEqual(self.run_cli('evaluate', '--exp', 'Exp2', '--force'), 0)
        self.assertEqual(report.read_bytes(), before)

    def test_evaluate_without_model(self):
        self.assertEqual(self.run_cli('evaluate', '--exp', 'Exp1'), 1)

    def test_analysis_of_baseline_is_refused(self):
        self.assertEqual(self.run_cli('analyze', '--exp', 'Exp1'), 1)

    def test_exp3_needs_augmentation(self):
        self.assertEqual(self.run_cli('train', '--exp', 'Exp3.2'), 1)

    def test_usage(self):
        self.assertEqual(cli([]), 2)
        self.assertEqual(cli(['fly']), 2)


class AllStagesTests(StagedRun):
    """Both augmentation strategies, all four experiments, analysis and the summary report."""
    # two-channel relu taps can go constant, which CKA rejects
    profile = TINY_PROFILE + 'activation=silu\n'
    steps = (('synth',), ('preprocess',), ('flag-outliers',), ('featurize',),
             ('augment', '--strategy', 'resample'), ('augment', '--strategy', 'timewarp'),
             *((stage, '--exp', exp) for exp in ('Exp1', 'Exp2', 'Exp3.1', 'Exp3.2')
               for stage in ('train', 'evaluate')),
             ('analyze', '--exp', 'Exp2'), ('report',))

    def test_outlier_suggestions(self):
        outliers = self.cache / 'outliers'
        self.assertEqual(list(pd.read_csv(outliers / 'outliers.csv').columns), ['recording_id', 'reasons'])
        self.assertTrue((outliers / 'manifest.suggested.csv').is_file())

    def test_augmented_pools(self):
        for strategy in ('resample', 'timewarp'):
            with self.subTest(strategy=strategy):
                frame = pd.read_csv(self.cache / 'augmented' / strategy / 'segments.csv')
                self.assertIn('stage1', set(frame['pool']))
                self.assertLessEqual(set(frame['pool']), {'stage1', 'stage2'})
                self.assertTrue((frame['augmented'].astype(str).str.lower() == 'true').all())

    def test_every_experiment_is_reported(self):
        for experiment in ('Exp1', 'Exp2', 'Exp3.1', 'Exp3.2'):
            with self.subTest(experiment=experiment):
                report = self.report(experiment)
                self.assertEqual(report['experiment'], experiment)
                self.assertTrue(-1.0 <= report['metrics']['mcc'] <= 1.0)
                self.assertEqual('stage1' in report, experiment != 'Exp1')
        self.assertTrue((self.cache / 'models' / 'Exp1' / 'baseline.ckpt').is_file())

    def test_analysis(self):
        analysis = read_json(self.cache / 'analysis' / 'analysis.json')
        self.assertEqual([row['layer'] for row in analysis['cka']], list(TAPS))
        self.assertTrue(all(0.0 <= row['cka'] <= 1.0 + 1e-9 for row in analysis['cka']))
        self.assertTrue(any((self.cache / 'analysis' / 'mean').glob('*.mel')))

    def test_summary_report(self):
        summary = read_json(self.cache / 'report' / 'report.json')
        self.assertEqual(set(summary['experiments']), {'Exp1', 'Exp2', 'Exp3.1', 'Exp3.2'})
        self.assertEqual(summary['analysis']['experiment'], 'Exp2')
        self.assertIn('CKA between MP and FP', (self.cache / 'report' / 'report.txt').read_text(encoding='utf-8'))


@skipUnless(settings.PATHOLOGY_ACCEPTANCE, 'set PATHOLOGY_ACCEPTANCE=true for the desk-profile run')
class DeskAcceptanceTests(StagedRun):
    """Desk profile end to end; the hierarchy must separate the synthetic classes."""
    profile = DESK_PROFILE.read_text(encoding='utf-8')
    steps = (('synth',), ('preprocess',), ('featurize',), ('augment', '--strategy', 'timewarp'),
             ('train', '--exp', 'Exp2'), ('evaluate', '--exp', 'Exp2'),
             ('train', '--exp', 'Exp3.2'), ('evaluate', '--exp', 'Exp3.2'))

    def test_hierarchy_mcc(self):
        self.assertGreaterEqual(self.report('Exp2')['metrics']['mcc'], 0.85)

    def test_time_warping_does_not_hurt(self):
        self.assertGreaterEqual(self.report('Exp3.2')['metrics']['mcc'],
                                self.report('Exp2')['metrics']['mcc'] - 0.02)
