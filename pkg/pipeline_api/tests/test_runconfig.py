"""
Tests for RunConfig loading, overrides and validation.
"""

import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from py_rdeql import config
from py_rdeql.exceptions import ConfigurationError
from pipeline_api.runconfig import apply_override, load_run_config


class ApplyOverrideTest(SimpleTestCase):
    """Test cases for key.path=value overrides."""

    def test_json_value(self):
        document = apply_override({}, 'train.es_sweep=[500]')
        self.assertEqual(document, {'train': {'es_sweep': [500]}})

    def test_string_value(self):
        document = apply_override({'synth': {'growth': 'U'}}, 'synth.growth=1-U')
        self.assertEqual(document['synth']['growth'], '1-U')

    def test_number_value(self):
        self.assertEqual(apply_override({}, 'base_seed=7')['base_seed'], 7)

    def test_bad_syntax(self):
        with self.assertRaises(ConfigurationError):
            apply_override({}, 'train.es_sweep')
        with self.assertRaises(ConfigurationError):
            apply_override({'train': 3}, 'train.max_epochs=2')


class LoadRunConfigTest(SimpleTestCase):
    """Test cases for load_run_config."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = str(Path(self.tmp.name) / 'run')

    def load(self, *overrides, **kwargs):
        return load_run_config(None, ['input.synth=true', *overrides], output_dir=self.out, **kwargs)

    def test_defaults(self):
        run = self.load()
        self.assertEqual(run.input_mode, 'synth')
        self.assertEqual(run.es_sweep, list(config.es_sweep))
        self.assertEqual(run['synth']['diffusion'], config.reference_diffusion)
        self.assertIsNone(run.preferred_es)
        self.assertEqual(run.output_dir, Path(self.out))

    def test_split_seeds_follow_base_seed(self):
        run = self.load('train.n_splits=3', seed=10)
        self.assertEqual(run.split_seeds, [10, 11, 12])
        self.assertEqual(run.train_config(20).es_patience, 20)

    def test_sr_config(self):
        cfg = self.load('sr.repeats=4').sr_config()
        self.assertEqual(cfg.repeats, 4)

    def test_no_input_mode(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_run_config(None, [], output_dir=self.out)
        self.assertIn('input', ctx.exception.errors)

    def test_two_input_modes(self):
        density = Path(self.tmp.name) / 'density.csv'
        density.write_text('')
        density.with_suffix('.json').write_text('{}')
        with self.assertRaises(ConfigurationError):
            self.load(f'input.density={density}')

    def test_points_require_domain(self):
        points = Path(self.tmp.name) / 'points.csv'
        points.write_text('x1,x2,t\n')
        with self.assertRaises(ConfigurationError):
            load_run_config(None, [f'input.points={points}'], output_dir=self.out)
        run = load_run_config(None, [f'input.points={points}', 'input.domain=[0,1,0,1,0,1]'],
                              output_dir=self.out)
        self.assertEqual(run.input_mode, 'points')

    def test_missing_point_file(self):
        with self.assertRaises(ConfigurationError):
            load_run_config(None, ['input.points=/nonexistent/points.csv', 'input.domain=[0,1,0,1,0,1]'],
                            output_dir=self.out)

    def test_preferred_es_must_be_swept(self):
        with self.assertRaises(ConfigurationError):
            self.load('train.es_sweep=[0,5]', 'preferred_es=10')
        self.assertEqual(self.load('train.es_sweep=[0,5]', 'preferred_es=5').preferred_es, 5)

    def test_malformed_expression(self):
        with self.assertRaises(ConfigurationError) as ctx:
            self.load('synth.diffusion=exp(')
        self.assertIn('synth', ctx.exception.errors)

    def test_invalid_ranges(self):
        for override in ('train.es_improvement=1.5', 'train.train_fraction=1', 'solve.safety=0', 'synth.gamma=-1',
                         'preprocess.bin_size=0', 'sr.population_size=1', 'train.es_sweep=[5,5]'):
            with self.subTest(override=override):
                with self.assertRaises(ConfigurationError):
                    self.load(override)

    def test_config_file_and_flags(self):
        path = Path(self.tmp.name) / 'run.json'
        path.write_text(json.dumps({'input': {'synth': True}, 'jobs': 2, 'base_seed': 3}))
        run = load_run_config(str(path), [], output_dir=self.out, jobs=4)
        self.assertEqual(run.jobs, 4)
        self.assertEqual(run.base_seed, 3)

    def test_bad_json(self):
        path = Path(self.tmp.name) / 'run.json'
        path.write_text('{"input": ')
        with self.assertRaises(ConfigurationError):
            load_run_config(str(path), [], output_dir=self.out)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_run_config(str(Path(self.tmp.name) / 'absent.json'), [], output_dir=self.out)
