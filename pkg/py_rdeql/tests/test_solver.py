"""
Tests for the forward reaction-diffusion solver.
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from py_rdeql.exceptions import SolverInstabilityError
from py_rdeql.grid import DensityField, Domain, Scaling
from py_rdeql.mlp import init
from py_rdeql.solver import (DIFFUSION_UNITS, GROWTH_UNITS, RateFn, ReactionDiffusionSolver,
                             SolveSpec, ic_from_density_net, solve_rd)


class SolverTest(SimpleTestCase):
    """Test cases for solve_rd."""

    def setUp(self):
        self.domain = Domain(0.0, 1.0, 0.0, 0.8, 0.0, 1.0)
        self.times = np.linspace(0.0, 1.0, 5)
        x1 = np.linspace(0.05, 0.95, 10)[:, None]
        x2 = np.linspace(0.05, 0.75, 8)[None, :]
        self.ic = 5.0 + 4.0 * np.exp(-((x1 - 0.5) ** 2 + (x2 - 0.4) ** 2) / 0.02)

    def spec(self, ic=None, **kwargs):
        return SolveSpec(self.ic if ic is None else ic, self.times, self.domain, 0.1, 0.1, **kwargs)

    def test_zero_rates_return_initial_field(self):
        field = solve_rd(RateFn.constant(0.0, DIFFUSION_UNITS), RateFn.constant(0.0, GROWTH_UNITS), self.spec())
        self.assertEqual(field.shape, (10, 8, 5))
        for s in range(5):
            np.testing.assert_array_equal(field.values[:, :, s], self.ic)

    def test_constant_growth(self):
        field = solve_rd(RateFn.constant(0.0, DIFFUSION_UNITS), RateFn.constant(0.8, GROWTH_UNITS), self.spec())
        np.testing.assert_allclose(field.counts(), self.ic.sum() * np.exp(0.8 * self.times), rtol=1e-6)

    def test_diffusion_conserves_mass_and_flattens(self):
        field = solve_rd(RateFn.constant(0.1, DIFFUSION_UNITS), RateFn.constant(0.0, GROWTH_UNITS), self.spec())
        counts = field.counts()
        np.testing.assert_allclose(counts, counts[0], rtol=1e-10)
        spread = [np.ptp(field.values[:, :, s]) for s in range(5)]
        self.assertTrue(np.all(np.diff(spread) < 0))

    def test_density_dependent_diffusion_conserves_mass(self):
        D = RateFn.symbolic("0.01 + 0.02*exp(2*U)", 10.0, DIFFUSION_UNITS)
        field = solve_rd(D, RateFn.constant(0.0, GROWTH_UNITS), self.spec())
        counts = field.counts()
        np.testing.assert_allclose(counts, counts[0], rtol=1e-10)

    def test_logistic_growth_saturates(self):
        G = RateFn.symbolic("1 - U", 10.0, GROWTH_UNITS)
        times = np.linspace(0.0, 20.0, 3)
        field = solve_rd(RateFn.constant(0.0, DIFFUSION_UNITS), G,
                         SolveSpec(np.full((10, 8), 2.0), times, Domain(0.0, 1.0, 0.0, 0.8, 0.0, 20.0),
                                   0.1, 0.1, max_dt=0.05))
        np.testing.assert_allclose(field.values[:, :, -1], 10.0, rtol=1e-6)

    def test_uniform_logistic_matches_closed_form(self):
        times = np.linspace(0.0, 4.0, 9)
        spec = SolveSpec(np.full((10, 8), 2.0), times, Domain(0.0, 1.0, 0.0, 0.8, 0.0, 4.0), 0.1, 0.1)
        field = solve_rd(RateFn.constant(0.05, DIFFUSION_UNITS), RateFn.symbolic("1 - U", 10.0, GROWTH_UNITS), spec)
        n0, capacity = 80 * 2.0, 80 * 10.0
        expected = capacity / (1.0 + (capacity / n0 - 1.0) * np.exp(-times))
        np.testing.assert_allclose(field.counts(), expected, rtol=1e-4)

    def test_second_order_spatial_convergence(self):
        # cos(pi x1) cos(pi x2) is a discrete no-flux eigenmode, so the error is purely from discretisation
        diffusivity, final = 0.01, 1.0
        exact_rate = 2.0 * np.pi ** 2 * diffusivity
        errors = []
        for n in (10, 20, 40):
            h = 1.0 / n
            x = (np.arange(n) + 0.5) * h
            mode = np.outer(np.cos(np.pi * x), np.cos(np.pi * x))
            spec = SolveSpec(5.0 + 2.0 * mode, [0.0, final], Domain(0.0, 1.0, 0.0, 1.0, 0.0, final),
                             h, h, max_dt=0.1 * h)
            field = solve_rd(RateFn.constant(diffusivity, DIFFUSION_UNITS), RateFn.constant(0.0, GROWTH_UNITS), spec)
            exact = 5.0 + 2.0 * mode * np.exp(-exact_rate * final)
            errors.append(np.abs(field.values[:, :, -1] - exact).max())
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        self.assertTrue(np.all(orders >= 1.8), orders)

    def test_mirror_symmetric_field_stays_symmetric(self):
        half = self.ic[:5, :]
        ic = np.concatenate([half, half[::-1, :]], axis=0)
        D = RateFn.symbolic("0.01 + 0.02*exp(2*U)", 10.0, DIFFUSION_UNITS)
        G = RateFn.symbolic("1 - U", 10.0, GROWTH_UNITS)
        field = solve_rd(D, G, self.spec(ic))
        np.testing.assert_allclose(field.values, field.values[::-1, :, :], rtol=0.0, atol=1e-10)

    def test_output_nonnegative_with_clamping(self):
        ic = np.zeros((10, 8))
        ic[5, 4] = 50.0
        G = RateFn.constant(-3.0, GROWTH_UNITS)
        solver = ReactionDiffusionSolver(RateFn.constant(0.2, DIFFUSION_UNITS), G, self.spec(ic))
        field = solver.run()
        self.assertTrue(np.all(field.values >= 0))
        self.assertGreaterEqual(solver.clamped_mass, 0.0)
        self.assertEqual(len(solver.history), solver.history[-1].step)

    def test_exploding_diffusivity_is_unstable(self):
        D = RateFn.symbolic("exp(50*U)", 1.0, DIFFUSION_UNITS)
        with self.assertRaises(SolverInstabilityError):
            solve_rd(D, RateFn.constant(0.0, GROWTH_UNITS), self.spec())

    def test_negative_diffusivity_rejected(self):
        D = RateFn.symbolic("0.01 - U", 1.0, DIFFUSION_UNITS)
        with self.assertRaises(ValueError):
            solve_rd(D, RateFn.constant(0.0, GROWTH_UNITS), self.spec())

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            self.spec(ic=-self.ic)
        with self.assertRaises(ValueError):
            SolveSpec(self.ic, [0.0, 0.0], self.domain, 0.1, 0.1)
        with self.assertRaises(ValueError):
            self.spec(safety=1.5)

    def test_diagnostics_written(self):
        solver = ReactionDiffusionSolver(RateFn.constant(0.1, DIFFUSION_UNITS),
                                         RateFn.constant(0.0, GROWTH_UNITS), self.spec())
        solver.run()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "solver.csv"
            solver.write_diagnostics(path)
            lines = path.read_text().strip().splitlines()
        self.assertEqual(lines[0], "step,t,dt,max_D,clamped_mass")
        self.assertEqual(len(lines), len(solver.history) + 1)


class RateFnTest(SimpleTestCase):
    """Test cases for rate callables."""

    def test_symbolic_rate_in_physical_density(self):
        G = RateFn.symbolic("1 - U", 15.0, GROWTH_UNITS)
        np.testing.assert_allclose(G(np.array([0.0, 7.5, 15.0])), [1.0, 0.5, 0.0])

    def test_symbolic_rate_clips_negative_density(self):
        D = RateFn.symbolic("sqrt(U)", 4.0, DIFFUSION_UNITS)
        self.assertEqual(float(D(np.array([-1.0]))[0]), 0.0)

    def test_network_rate_units(self):
        scaling = Scaling(2.0, 4.0, 10.0)
        params = init("D", 3, (4,))
        D = RateFn.network(params, scaling)
        self.assertEqual(D.units, DIFFUSION_UNITS)
        self.assertTrue(np.all(D(np.linspace(0.0, 10.0, 5)) > 0))
        with self.assertRaises(ValueError):
            RateFn.network(init("u", 3, (4,)), scaling)

    def test_unknown_units_rejected(self):
        with self.assertRaises(ValueError):
            RateFn.constant(1.0, "m/s")


class InitialConditionTest(SimpleTestCase):
    """Test cases for the initial field read from a density network."""

    def test_shape_and_sign(self):
        domain = Domain(0.0, 0.5, 0.0, 0.3, 0.0, 1.0)
        grid = DensityField(np.ones((5, 3, 2)), 0.1, 0.1, domain, [0.0, 1.0])
        ic = ic_from_density_net(init("u", 0, (6, 6)), Scaling(0.5, 1.0, 20.0), grid)
        self.assertEqual(ic.shape, (5, 3))
        self.assertTrue(np.all(ic > 0))
