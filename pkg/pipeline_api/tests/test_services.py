"""
Tests for service helpers that need no artefacts on disk.
"""

import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from py_rdeql.exceptions import ArtefactExistsError
from pipeline_api.runconfig import load_run_config
from pipeline_api.services import ArtefactService, TrainService


class PreferredEsTest(SimpleTestCase):
    """Test cases for the preferred early-stopping rule."""

    def test_lowest_median(self):
        self.assertEqual(TrainService.select_preferred_es({0: 2.0, 20: 1.0, 500: 1.5}), 20)

    def test_smallest_patience_within_tolerance(self):
        medians = {0: 1.10, 20: 1.02, 100: 1.0, 500: 1.0}
        self.assertEqual(TrainService.select_preferred_es(medians), 20)
        self.assertEqual(TrainService.select_preferred_es(medians, tolerance=0.0), 100)
        self.assertEqual(TrainService.select_preferred_es(medians, tolerance=0.2), 0)

    def test_empty(self):
        with self.assertRaises(ValueError):
            TrainService.select_preferred_es({})


class ArtefactServiceTest(SimpleTestCase):
    """Test cases for stage directories and hashes."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.run = load_run_config(None, ['input.synth=true'], output_dir=self.tmp.name)

    def test_stage_dir_guard(self):
        path = ArtefactService.stage_dir(self.run, 'synth')
        self.assertEqual(path, Path(self.tmp.name) / 'synth')
        # empty directories are reused
        ArtefactService.stage_dir(self.run, 'synth')
        (path / 'clean.csv').write_text('x')
        with self.assertRaises(ArtefactExistsError):
            ArtefactService.stage_dir(self.run, 'synth')
        path = ArtefactService.stage_dir(self.run, 'synth', force=True)
        self.assertEqual(list(path.iterdir()), [])

    def test_require(self):
        with self.assertRaises(FileNotFoundError):
            ArtefactService.require(Path(self.tmp.name) / 'data' / 'density.csv', 'preprocess')

    def test_sha256(self):
        path = Path(self.tmp.name) / 'a.txt'
        path.write_bytes(b'abc')
        self.assertEqual(ArtefactService.sha256(path),
                         'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad')
