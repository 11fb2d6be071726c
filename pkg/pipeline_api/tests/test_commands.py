"""
Tests for the pipeline management commands.

Every run uses a 3 x 2 bin domain with three frames and networks of a few
units, so a whole pipeline finishes in seconds. The default-size reference
run is tagged ``slow`` and only enabled with RD_BINN_RUN_SLOW_TESTS.
"""

import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from py_rdeql import config
from py_rdeql.ensemble import EnsembleCurve
from py_rdeql.evaluate import CountCurves
from py_rdeql.io import load_density_field, read_csv, read_json

TINY_RUN = {
    'input': {'synth': True},
    'synth': {'domain': [0.0, 0.3, 0.0, 0.2, 0.0, 0.1], 'frames': 3},
    'train': {
        'hidden_widths_u': [4],
        'hidden_widths_rate': [2],
        'max_epochs': 3,
        'es_sweep': [0, 1],
        'n_splits': 2,
        'n_collocation': 10,
        'function_probe_every': 0,
    },
    # products of U and constants keep the selected diffusivity non-negative
    'sr': {
        'repeats': 2,
        'population_size': 10,
        'generations': 2,
        'binary_operators': ['mul'],
        'unary_operators': [],
        'refine_iterations': 2,
    },
}


class PipelineCommandTestCase(SimpleTestCase):
    """Temporary RunConfig and output directories."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config = self.root / 'run.json'
        self.config.write_text(json.dumps(TINY_RUN))

    def call(self, command, out='run', *overrides, force=False):
        stdout = StringIO()
        call_command(command, config=str(self.config), out=str(self.root / out),
                     overrides=list(overrides), force=force, stdout=stdout)
        return stdout.getvalue()


class RunAllCommandTest(PipelineCommandTestCase):
    """Test cases for the whole pipeline."""

    def test_run_all(self):
        output = self.call('run_all')
        self.assertIn('run_all: outputs in', output)
        run = self.root / 'run'
        for name in ('synth/clean.csv', 'synth/noisy.csv', 'synth/truth.json', 'data/density.csv',
                     'train/es_summary.csv', 'train/preferred_es.json', 'train/es_0/split_0',
                     'train/es_1/split_1', 'ensemble_sr/ensemble_diffusion.csv',
                     'ensemble_sr/ensemble_growth.csv', 'ensemble_sr/sr_candidates.csv',
                     'ensemble_sr/sr_templates.csv', 'ensemble_sr/sr_diffusion.json',
                     'ensemble_sr/sr_growth.json', 'evaluate/counts.csv', 'evaluate/metrics.json',
                     'evaluate/solver_sr.csv', 'manifests/run_all.json'):
            with self.subTest(name=name):
                self.assertTrue((run / name).exists())

        preferred = read_json(run / 'train' / 'preferred_es.json')['preferred_es']
        self.assertIn(preferred, [0, 1])

        curves = CountCurves.load(run / 'evaluate' / 'counts.csv')
        for name in ('N_data', 'N_u', 'N_fwd', 'N_SR'):
            self.assertIn(name, curves)
            self.assertTrue(np.all(np.isfinite(curves[name])))
            self.assertEqual(len(curves[name]), 3)
        density = load_density_field(run / 'data' / 'density.csv')
        np.testing.assert_allclose(curves['N_data'], density.counts())

        manifest = read_json(run / 'manifests' / 'run_all.json')
        self.assertEqual(manifest['stages'],
                         ['synth', 'preprocess', 'train', 'ensemble_sr', 'evaluate'])

    def test_deterministic_outputs(self):
        self.call('run_all', 'first')
        self.call('run_all', 'second')
        first = sorted(p.relative_to(self.root / 'first') for p in (self.root / 'first').rglob('*.csv'))
        second = sorted(p.relative_to(self.root / 'second') for p in (self.root / 'second').rglob('*.csv'))
        self.assertEqual(first, second)
        self.assertTrue(first)
        for name in first:
            with self.subTest(name=str(name)):
                self.assertEqual((self.root / 'first' / name).read_bytes(),
                                 (self.root / 'second' / name).read_bytes())


class StageCommandTest(PipelineCommandTestCase):
    """Test cases for individual stages and their failure modes."""

    def test_overwrite_guard(self):
        self.call('synth')
        with self.assertRaises(CommandError) as ctx:
            self.call('synth')
        self.assertEqual(ctx.exception.returncode, 2)
        self.call('synth', force=True)

    def test_zero_noise(self):
        self.call('synth', 'run', 'synth.omega=0')
        clean = load_density_field(self.root / 'run' / 'synth' / 'clean.csv')
        noisy = load_density_field(self.root / 'run' / 'synth' / 'noisy.csv')
        np.testing.assert_array_equal(clean.values, noisy.values)

    def test_malformed_expression(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('synth', 'run', 'synth.diffusion=exp(')
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse((self.root / 'run' / 'synth').exists())

    def test_negative_true_diffusivity(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('synth', 'run', 'synth.diffusion=0.01 - U')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_upstream_stage(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('train')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_evaluate_without_models(self):
        self.call('synth')
        self.call('preprocess')
        self.call('evaluate')
        curves = CountCurves.load(self.root / 'run' / 'evaluate' / 'counts.csv')
        self.assertEqual(sorted(curves.curves), ['N_data'])


@tag('slow')
@skipUnless(settings.RD_BINN_RUN_SLOW_TESTS, "set RD_BINN_RUN_SLOW_TESTS=True to run")
class ReferenceRunTest(PipelineCommandTestCase):
    """Whole pipeline on the default synthetic reference data."""

    def setUp(self):
        super().setUp()
        self.config.write_text(json.dumps({'input': {'synth': True}}))

    def test_reference_run(self):
        self.call('run_all')
        run = self.root / 'run'

        templates = {kind: read_json(run / 'ensemble_sr' / f'sr_{kind}.json')['template']
                     for kind in ('diffusion', 'growth')}
        self.assertEqual(templates, {'diffusion': 'C0 + C1*exp(C2*U)', 'growth': 'C0 - C1*U'})

        diffusion = EnsembleCurve.load(run / 'ensemble_sr' / 'ensemble_diffusion.csv')
        growth = EnsembleCurve.load(run / 'ensemble_sr' / 'ensemble_growth.csv')
        central = slice(diffusion.U.size // 20, diffusion.U.size - diffusion.U.size // 20)
        self.assertTrue(np.all(np.diff(diffusion.values[central]) > 0))
        self.assertTrue(np.all(np.diff(growth.values[central]) < 0))
        true_growth = 1.0 - growth.U * growth.density_scale / config.density_reference
        self.assertLess(np.max(np.abs(growth.values - true_growth)) / np.max(np.abs(true_growth)), 0.15)

        metrics = read_json(run / 'evaluate' / 'metrics.json')
        for name in ('N_u', 'N_fwd', 'N_SR'):
            with self.subTest(curve=name):
                self.assertLess(metrics[name]['rel_l2'], 0.10)
        self.assertLess(metrics['N_SR_vs_N_fwd']['rel_l2'], 0.05)

        losses = {int(r['patience']): float(r['median_best_val_loss'])
                  for r in read_csv(run / 'train' / 'es_summary.csv')}
        self.assertLess((losses[500] - losses[2000]) / losses[500], 0.10)

        wall = read_json(run / 'manifests' / 'train.json')['wall_clock']
        medians = [wall[f'es_{patience}_median'] for patience in (500, 1000, 2000)]
        self.assertTrue(medians[0] < medians[1] < medians[2], medians)
