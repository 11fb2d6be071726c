"""
Tests for the density-weighted ensemble.
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from py_rdeql.ensemble import (EnsembleCurve, density_weights, ensemble_curves, split_curves,
                               support_bounds, weighted_average)
from py_rdeql.exceptions import EmptySupportError
from py_rdeql.grid import Scaling


class FakeModel:
    """Stands in for a trained split: linear rates and fixed training densities."""

    def __init__(self, seed, densities, d_slope=0.0, d_offset=0.01, g_slope=-1.0, g_offset=1.0):
        self.seed = seed
        self.train_densities = np.asarray(densities, dtype=float)
        self.scaling = Scaling(1.5, 2.0, 12.0)
        self.d = (d_slope, d_offset)
        self.g = (g_slope, g_offset)

    def diffusion(self, U):
        return self.d[0] * np.asarray(U) + self.d[1]

    def growth(self, U):
        return self.g[0] * np.asarray(U) + self.g[1]


def densities(seed, lo=0.0, hi=1.0, n=500):
    return np.random.default_rng(seed).uniform(lo, hi, n)


class SupportBoundsTest(SimpleTestCase):
    """Test cases for the shared density support."""

    def test_identical_splits(self):
        dens = densities(0)
        bounds = support_bounds([FakeModel(0, dens), FakeModel(1, dens)])
        self.assertAlmostEqual(bounds.lo, np.percentile(dens, 5))
        self.assertAlmostEqual(bounds.hi, np.percentile(dens, 95))

    def test_intersection_of_central_intervals(self):
        sets = [densities(1, 0.0, 0.8), densities(2, 0.2, 1.0), densities(3, 0.1, 0.9)]
        bounds = support_bounds([FakeModel(k, d) for k, d in enumerate(sets)])
        self.assertAlmostEqual(bounds.lo, max(np.percentile(d, 5) for d in sets))
        self.assertAlmostEqual(bounds.hi, min(np.percentile(d, 95) for d in sets))
        self.assertEqual(len(bounds.intervals), 3)

    def test_disjoint_supports(self):
        with self.assertRaises(EmptySupportError):
            support_bounds([FakeModel(0, densities(0, 0.0, 0.3)), FakeModel(1, densities(1, 0.6, 1.0))])

    def test_split_without_densities(self):
        with self.assertRaises(ValueError):
            support_bounds([FakeModel(0, [])])


class DensityWeightsTest(SimpleTestCase):
    """Test cases for the per-split density weights."""

    def test_normalised(self):
        w = density_weights(FakeModel(0, densities(4)), np.linspace(0.05, 0.95, 64))
        self.assertAlmostEqual(float(w.sum()), 1.0)
        self.assertTrue(np.all(w >= 0))

    def test_single_density_spike(self):
        U = np.linspace(0.0, 1.0, 101)
        w = density_weights(FakeModel(0, np.full(50, 0.5)), U)
        self.assertAlmostEqual(float(w.sum()), 1.0)
        outside = (U <= 0.484375) | (U >= 0.546875)
        np.testing.assert_array_equal(w[outside], 0.0)
        self.assertTrue(np.all(w[~outside] > 0))

    def test_outside_observed_range(self):
        w = density_weights(FakeModel(0, densities(5, 0.2, 0.4)), np.array([0.0, 0.3, 0.9]))
        self.assertEqual(w[0], 0.0)
        self.assertEqual(w[2], 0.0)
        self.assertEqual(w[1], 1.0)


class WeightedAverageTest(SimpleTestCase):
    """Test cases for the per-point weighted mean."""

    def test_two_constant_models(self):
        mean, aggregate, keep = weighted_average([[1.0, 1.0], [3.0, 3.0]], [[0.25, 0.25], [0.75, 0.75]])
        np.testing.assert_allclose(mean, 2.5)
        np.testing.assert_allclose(aggregate, 1.0)
        self.assertTrue(keep.all())

    def test_zero_weight_points_dropped(self):
        mean, _, keep = weighted_average([[1.0, 2.0], [3.0, 4.0]], [[0.0, 1.0], [0.0, 1.0]])
        np.testing.assert_array_equal(keep, [False, True])
        self.assertTrue(np.isnan(mean[0]))
        self.assertEqual(mean[1], 3.0)

    def test_uniform_weights_give_plain_mean(self):
        values = np.random.default_rng(0).normal(size=(4, 10))
        mean, _, _ = weighted_average(values, np.full((4, 10), 0.3))
        np.testing.assert_allclose(mean, values.mean(axis=0))


class EnsembleCurvesTest(SimpleTestCase):
    """Test cases for the ensemble curves."""

    def setUp(self):
        self.models = [FakeModel(k, densities(10 + k), d_slope=0.01 * (k + 1), g_slope=-1.0 - 0.1 * k)
                       for k in range(4)]

    def test_identical_models_reproduce_their_prediction(self):
        dens = densities(0)
        models = [FakeModel(k, dens, d_slope=0.02) for k in range(3)]
        D, G = ensemble_curves(models, n_g=32)
        np.testing.assert_allclose(D.values, 0.02 * D.U + 0.01)
        np.testing.assert_allclose(G.values, 1.0 - G.U)
        self.assertEqual(D.density_scale, 12.0)

    def test_same_densities_give_plain_mean(self):
        dens = densities(1)
        models = [FakeModel(k, dens, d_slope=0.01 * k) for k in range(3)]
        D, _ = ensemble_curves(models, n_g=16)
        np.testing.assert_allclose(D.values, 0.01 * D.U + 0.01)

    def test_within_split_envelope(self):
        D, G = ensemble_curves(self.models, n_g=64)
        preds = np.stack([m.diffusion(D.U) for m in self.models])
        self.assertTrue(np.all(D.values >= preds.min(axis=0) - 1e-12))
        self.assertTrue(np.all(D.values <= preds.max(axis=0) + 1e-12))
        bounds = support_bounds(self.models)
        self.assertGreaterEqual(D.U[0], bounds.lo)
        self.assertLessEqual(D.U[-1], bounds.hi)
        self.assertAlmostEqual(float(D.weights.sum()), 1.0)
        np.testing.assert_array_equal(D.U, G.U)

    def test_permutation_invariant(self):
        D1, G1 = ensemble_curves(self.models, n_g=32)
        D2, G2 = ensemble_curves(self.models[::-1], n_g=32)
        np.testing.assert_array_equal(D1.values, D2.values)
        np.testing.assert_array_equal(G1.values, G2.values)

    def test_split_curves_rows(self):
        U = np.linspace(0.2, 0.8, 5)
        rows = split_curves(self.models[::-1], U)
        self.assertEqual(len(rows), 20)
        self.assertEqual([r[1] for r in rows[::5]], [0, 1, 2, 3])
        self.assertAlmostEqual(rows[0][2], 0.01 * 0.2 + 0.01)


class EnsembleCurveTest(SimpleTestCase):
    """Test cases for the EnsembleCurve record."""

    def test_save_and_load(self):
        curve = EnsembleCurve([0.1, 0.2, 0.3], [0.5, 0.4, 0.3], [0.2, 0.5, 0.3], "growth", 14.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ensemble_growth.csv"
            curve.save(path)
            self.assertTrue(path.read_text().startswith("# kind=growth"))
            loaded = EnsembleCurve.load(path)
        np.testing.assert_array_equal(loaded.values, curve.values)
        self.assertEqual(loaded.kind, "growth")
        self.assertEqual(loaded.units, "1/day")
        self.assertEqual(loaded.density_scale, 14.0)

    def test_validation(self):
        with self.assertRaises(ValueError):
            EnsembleCurve([0.1, 0.2], [1.0, 1.0], [0.0, 0.0], "diffusion")
        with self.assertRaises(ValueError):
            EnsembleCurve([0.1, 0.2], [1.0, 1.0], [0.5, 0.5], "decay")
        with self.assertRaises(ValueError):
            EnsembleCurve([0.2, 0.1], [1.0, 1.0], [0.5, 0.5], "diffusion")
