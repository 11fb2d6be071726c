"""
Tests for the BINN losses, early stopping and the training loop.

Training runs here use tiny networks on a 3x2x3 grid; the reference
synthetic run is tagged ``slow`` and only enabled with RD_BINN_RUN_SLOW_TESTS.
"""

import tempfile
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, tag

from py_rdeql.autodiff import eval_dual2
from py_rdeql.binn import (BinnModel, EsState, TrainConfig, data_loss, entry_inputs, loss_gradient,
                           pde_loss, pde_residual, sample_collocation, total_loss, train, tv_split)
from py_rdeql.exceptions import DegenerateScalingError
from py_rdeql.grid import DensityField, Domain, Scaling, make_scaling
from py_rdeql.mlp import forward, init
from py_rdeql.synth import NoiseSpec, apply_noise, default_domain, default_times, generate_clean, reference_model


def tiny_field(seed=0):
    domain = Domain(0.0, 0.3, 0.0, 0.2, 0.0, 0.2)
    values = np.random.default_rng(seed).uniform(1.0, 10.0, (3, 2, 3))
    return DensityField(values, 0.1, 0.1, domain, [0.0, 0.1, 0.2])


def tiny_config(**kwargs):
    options = dict(hidden_widths_u=(4, 4), hidden_widths_rate=(2,), max_epochs=6, es_patience=10,
                   n_collocation=20, function_probe_every=3)
    options.update(kwargs)
    return TrainConfig(**options)


def constant_nets(u_bias=0.3, d_bias=0.0, g_bias=0.5):
    nets = []
    for role, widths, bias in (("u", (3,), u_bias), ("D", (2,), d_bias), ("G", (2,), g_bias)):
        params = init(role, 0, widths)
        arrays = [np.zeros_like(a) for a in params.arrays()]
        arrays[-1] = np.array([bias])
        nets.append(params.with_arrays(arrays))
    return nets


def finite_difference_residual(u, D, G, points, h1=1e-5, h2=1e-4):
    def shift(a, h):
        step = np.zeros(3)
        step[a] = h
        return step

    U = forward(u, points)
    first = [(forward(u, points + shift(a, h1)) - forward(u, points - shift(a, h1))) / (2 * h1)
             for a in range(3)]
    second = [(forward(u, points + shift(a, h2)) - 2 * U + forward(u, points - shift(a, h2))) / h2 ** 2
              for a in range(2)]
    d_prime = (forward(D, U + h1) - forward(D, U - h1)) / (2 * h1)
    return (first[2] - d_prime * (first[0] ** 2 + first[1] ** 2)
            - forward(D, U) * (second[0] + second[1]) - forward(G, U) * U)


class TvSplitTest(SimpleTestCase):
    """Test cases for training/validation partitions."""

    def setUp(self):
        self.field = DensityField(np.ones((15, 11, 9)), 0.1, 0.1, default_domain(), default_times())

    def test_sizes_and_disjointness(self):
        split = tv_split(self.field, 0.8, seed=1)
        self.assertEqual(split.train_idx.size, 1188)
        self.assertEqual(split.val_idx.size, 297)
        self.assertEqual(np.intersect1d(split.train_idx, split.val_idx).size, 0)
        np.testing.assert_array_equal(np.union1d(split.train_idx, split.val_idx), np.arange(1485))

    def test_seeded(self):
        a, b = tv_split(self.field, 0.8, seed=4), tv_split(self.field, 0.8, seed=4)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)
        c = tv_split(self.field, 0.8, seed=5)
        self.assertFalse(np.array_equal(a.train_idx, c.train_idx))

    def test_fraction_must_leave_validation_set(self):
        for fraction in (1.0, 0.0, 1.2):
            with self.assertRaises(ValueError):
                tv_split(self.field, fraction, seed=0)


class DataLossTest(SimpleTestCase):
    """Test cases for the data loss."""

    def setUp(self):
        self.field = tiny_field()
        self.theta_u = init("u", 1, (5, 5))

    def test_zero_when_prediction_matches(self):
        scaling = Scaling(0.3, 0.2, 1.0)
        inputs, _ = entry_inputs(self.field, scaling)
        matched = self.field.with_values(np.asarray(forward(self.theta_u, inputs)).reshape(self.field.shape))
        self.assertAlmostEqual(data_loss(self.theta_u, matched, np.arange(18), scaling), 0.0, places=15)

    def test_matches_direct_resummation(self):
        scaling = make_scaling(self.field)
        inputs, targets = entry_inputs(self.field, scaling)
        idx = np.array([0, 3, 4, 11, 17])
        expected = np.mean((forward(self.theta_u, inputs[idx]) - targets[idx]) ** 2)
        self.assertAlmostEqual(data_loss(self.theta_u, self.field, idx), expected, places=12)

    def test_empty_index_rejected(self):
        with self.assertRaises(ValueError):
            data_loss(self.theta_u, self.field, [])


class CollocationTest(SimpleTestCase):
    """Test cases for collocation sampling."""

    def test_uniform_in_box(self):
        points = sample_collocation((1.0, 1.0, 1.0), 1000, seed=0)
        self.assertEqual(points.shape, (1000, 3))
        for mean in points.mean(axis=0):
            self.assertGreater(mean, 0.45)
            self.assertLess(mean, 0.55)

    def test_inside_scaled_box(self):
        box = (1.0, 0.7, 1.0)
        points = sample_collocation(box, 200, seed=[3, 0, 1])
        self.assertTrue(np.all(points >= 0))
        self.assertTrue(np.all(points <= np.array(box)))
        self.assertEqual(sample_collocation(box, 1, seed=2).shape, (1, 3))

    def test_seeded(self):
        np.testing.assert_array_equal(sample_collocation((1, 1, 1), 10, [1, 0, 4]),
                                      sample_collocation((1, 1, 1), 10, [1, 0, 4]))

    def test_needs_a_point(self):
        with self.assertRaises(ValueError):
            sample_collocation((1, 1, 1), 0, seed=0)


class PdeResidualTest(SimpleTestCase):
    """Test cases for the PDE residual and its loss."""

    def setUp(self):
        self.points = np.random.default_rng(5).uniform(0.0, 1.0, (7, 3))

    def test_constant_density_leaves_growth_term(self):
        u, D, G = constant_nets()
        U = np.log1p(np.exp(0.3))
        r = pde_residual(u, D, G, self.points)
        np.testing.assert_allclose(r, -forward(G, np.array([U]))[0] * U, rtol=1e-12)

    def test_vanishing_diffusion_gives_logistic_residual(self):
        _, D, G = constant_nets(d_bias=-50.0, g_bias=0.8)
        u = init("u", 2, (5, 5))
        out = eval_dual2(u, self.points, (2,))
        U, u_t = out.value[:, 0], out.d1[0, :, 0]
        np.testing.assert_allclose(pde_residual(u, D, G, self.points), u_t - 0.8 * U, atol=1e-12)

    def test_matches_finite_differences(self):
        u, D, G = init("u", 1, (6, 6)), init("D", 2, (3,)), init("G", 3, (3,))
        r = pde_residual(u, D, G, self.points)
        np.testing.assert_allclose(r, finite_difference_residual(u, D, G, self.points), rtol=1e-4, atol=1e-6)

    def test_single_point_returns_float(self):
        u, D, G = init("u", 1, (4,)), init("D", 2, (2,)), init("G", 3, (2,))
        r = pde_residual(u, D, G, self.points[0])
        self.assertIsInstance(r, float)
        self.assertAlmostEqual(pde_loss(u, D, G, self.points[:1]), r ** 2, places=14)

    def test_loss_is_mean_square(self):
        u, D, G = init("u", 1, (4,)), init("D", 2, (2,)), init("G", 3, (2,))
        r = pde_residual(u, D, G, self.points)
        self.assertAlmostEqual(pde_loss(u, D, G, self.points), float(np.mean(r ** 2)), places=14)

    def test_empty_points_rejected(self):
        u, D, G = constant_nets()
        with self.assertRaises(ValueError):
            pde_loss(u, D, G, np.empty((0, 3)))


class TotalLossTest(SimpleTestCase):
    """Test cases for the weighted total loss and its gradient."""

    def setUp(self):
        self.field = tiny_field(1)
        self.split = tv_split(self.field, 0.8, seed=0)
        self.points = sample_collocation((1.0, 2.0 / 3.0, 1.0), 12, seed=0)
        self.nets = {"u": init("u", 0, (3, 3)), "D": init("D", 1, (2,)), "G": init("G", 2, (2,))}

    def test_components_sum_to_total(self):
        total, parts = total_loss(self.nets["u"], self.nets["D"], self.nets["G"],
                                  self.field, self.split, self.points)
        self.assertEqual(parts["bio"], 0.0)
        self.assertLessEqual(abs(total - (parts["data"] + parts["pde"] + parts["bio"])), 1e-15 * max(1.0, total))

    def test_without_pde_term(self):
        cfg = TrainConfig(lambda_pde=0.0, lambda_data=2.0)
        total, _ = total_loss(self.nets["u"], self.nets["D"], self.nets["G"],
                              self.field, self.split, self.points, cfg)
        expected = 2.0 * data_loss(self.nets["u"], self.field, self.split.train_idx)
        self.assertAlmostEqual(total, expected, places=14)

    def loss(self, nets, inputs, targets):
        data = np.mean((forward(nets["u"], inputs) - targets) ** 2)
        return data + pde_loss(nets["u"], nets["D"], nets["G"], self.points)

    def test_gradient_matches_finite_differences(self):
        inputs, targets = entry_inputs(self.field, make_scaling(self.field))
        inputs, targets = inputs[self.split.train_idx], targets[self.split.train_idx]
        total, _, grads = loss_gradient(self.nets, inputs, targets, self.points, TrainConfig())
        self.assertAlmostEqual(total, self.loss(self.nets, inputs, targets), places=12)

        h = 1e-6
        for role, params in self.nets.items():
            vector = params.to_vector()
            analytic = np.concatenate([g.ravel() for g in grads[role]])
            numeric = np.empty_like(vector)
            for i in range(vector.size):
                up, down = vector.copy(), vector.copy()
                up[i] += h
                down[i] -= h
                numeric[i] = (self.loss({**self.nets, role: params.from_vector(up)}, inputs, targets)
                              - self.loss({**self.nets, role: params.from_vector(down)}, inputs, targets)) / (2 * h)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_every_loss_gradient_on_random_networks(self):
        weightings = {"data": TrainConfig(lambda_pde=0.0), "pde": TrainConfig(lambda_data=0.0),
                      "total": TrainConfig()}
        for seed in range(50):
            field = tiny_field(seed)
            split = tv_split(field, 0.8, seed=seed)
            inputs, targets = entry_inputs(field, make_scaling(field))
            inputs, targets = inputs[split.train_idx], targets[split.train_idx]
            points = sample_collocation((1.0, 2.0 / 3.0, 1.0), 10, seed=[seed, 0, 0])
            nets = {"u": init("u", 3 * seed, (4, 4)), "D": init("D", 3 * seed + 1, (3,)),
                    "G": init("G", 3 * seed + 2, (3,))}

            for name, cfg in weightings.items():
                def loss(candidate):
                    data = np.mean((forward(candidate["u"], inputs) - targets) ** 2)
                    pde = pde_loss(candidate["u"], candidate["D"], candidate["G"], points)
                    return cfg.lambda_data * data + cfg.lambda_pde * pde

                _, _, grads = loss_gradient(nets, inputs, targets, points, cfg)
                for role, params in nets.items():
                    vector = params.to_vector()
                    analytic = np.concatenate([g.ravel() for g in grads[role]])
                    numeric = np.empty_like(vector)
                    for i in range(vector.size):
                        h = 1e-6 * max(1.0, abs(vector[i]))
                        up, down = vector.copy(), vector.copy()
                        up[i] += h
                        down[i] -= h
                        numeric[i] = (loss({**nets, role: params.from_vector(up)})
                                      - loss({**nets, role: params.from_vector(down)})) / (2 * h)
                    with self.subTest(seed=seed, loss=name, role=role):
                        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_small_gradient_step_decreases_loss(self):
        inputs, targets = entry_inputs(self.field, make_scaling(self.field))
        total, _, grads = loss_gradient(self.nets, inputs, targets, self.points, TrainConfig())
        stepped = {role: p.with_arrays([a - 1e-6 * g for a, g in zip(p.arrays(), grads[role])])
                   for role, p in self.nets.items()}
        after, _, _ = loss_gradient(stepped, inputs, targets, self.points, TrainConfig())
        self.assertLess(after, total)


class EarlyStoppingTest(SimpleTestCase):
    """Test cases for the early-stopping rule."""

    def test_relative_improvement_rule(self):
        es = EsState(patience=2, improvement=0.05)
        for epoch, val in enumerate([1.0, 0.97, 0.9, 0.89, 0.88], start=1):
            es.update(epoch, val, {})
        self.assertEqual(es.snapshots, [(1, 1.0), (3, 0.9)])
        self.assertEqual(es.best_epoch, 3)
        self.assertTrue(es.should_stop)

    def test_snapshots_strictly_improve(self):
        es = EsState(patience=100, improvement=0.05)
        rng = np.random.default_rng(0)
        for epoch, val in enumerate(np.cumprod(rng.uniform(0.9, 1.05, 200)), start=1):
            es.update(epoch, float(val), {})
        values = [v for _, v in es.snapshots]
        for prev, cur in zip(values, values[1:]):
            self.assertLess(cur, 0.95 * prev)


class TrainTest(SimpleTestCase):
    """Test cases for the training loop."""

    def setUp(self):
        self.field = tiny_field(2)

    def test_zero_patience_trains_one_epoch(self):
        model = train(self.field, tiny_config(es_patience=0), seed=0)
        self.assertEqual(model.stopped_epoch, 1)
        self.assertEqual(model.best_epoch, 1)
        self.assertEqual(len(model.trace), 1)

    def test_trace_and_probes(self):
        cfg = tiny_config()
        model = train(self.field, cfg, seed=1)
        self.assertEqual(model.stopped_epoch, 6)
        self.assertEqual([row.epoch for row in model.trace], list(range(1, 7)))
        for row in model.trace:
            self.assertEqual(row.total_val, cfg.lambda_data * row.val_data + cfg.lambda_pde * row.val_pde)
        self.assertEqual(len(model.function_trace), 32)
        self.assertLessEqual(model.best_val_loss, model.trace[0].total_val)
        self.assertEqual(model.train_densities.size, model.split.train_idx.size)
        self.assertTrue(np.isfinite(model.full_data_loss))

    def test_deterministic(self):
        a = train(self.field, tiny_config(), seed=3)
        b = train(self.field, tiny_config(), seed=3)
        self.assertEqual(a.trace, b.trace)
        np.testing.assert_array_equal(a.theta_u.to_vector(), b.theta_u.to_vector())

    def test_splits_are_independent(self):
        a = train(self.field, tiny_config(max_epochs=2), seed=0)
        b = train(self.field, tiny_config(max_epochs=2), seed=1)
        self.assertFalse(np.array_equal(a.split.train_idx, b.split.train_idx))
        self.assertNotEqual(a.trace, b.trace)

    def test_save_and_load(self):
        model = train(self.field, tiny_config(max_epochs=3), seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            model.save(tmp)
            loaded = BinnModel.load(tmp)
        for role in ("theta_u", "theta_D", "theta_G"):
            np.testing.assert_array_equal(getattr(loaded, role).to_vector(), getattr(model, role).to_vector())
        self.assertEqual(loaded.trace, model.trace)
        self.assertEqual(loaded.function_trace, model.function_trace)
        self.assertEqual(loaded.scaling, model.scaling)
        self.assertEqual(loaded.best_epoch, model.best_epoch)
        self.assertEqual(loaded.full_data_loss, model.full_data_loss)
        np.testing.assert_array_equal(loaded.split.val_idx, model.split.val_idx)
        np.testing.assert_array_equal(loaded.train_densities, model.train_densities)

    def test_learned_rates_have_units(self):
        model = train(self.field, tiny_config(max_epochs=2), seed=0)
        U = np.linspace(0.0, 1.0, 5)
        self.assertTrue(np.all(model.diffusion(U) > 0))
        self.assertEqual(model.growth(U).shape, (5,))

    def test_zero_field_rejected(self):
        with self.assertRaises(DegenerateScalingError):
            train(self.field.with_values(np.zeros((3, 2, 3))), tiny_config(), seed=0)


@tag('slow')
@skipUnless(settings.RD_BINN_RUN_SLOW_TESTS, "set RD_BINN_RUN_SLOW_TESTS=True to run")
class ReferenceTrainingTest(SimpleTestCase):
    """Full-size training on the reference synthetic data."""

    def test_validation_loss_drops(self):
        domain = default_domain()
        clean = generate_clean(reference_model(domain), domain, default_times(domain))
        noisy = apply_noise(clean, NoiseSpec(gamma=0.0, omega=0.5, seed=0))
        model = train(noisy, TrainConfig(es_patience=100, max_epochs=2000), seed=0)
        self.assertLess(model.best_val_loss, 0.1 * model.trace[0].total_val)
