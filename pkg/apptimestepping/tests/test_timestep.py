import math

import numpy as np
from django.test import SimpleTestCase

from apptimestepping.mdlProcess.mdlEnum import Scheme
from apptimestepping.mdlProcess.mdlErrors import AnalysisInputError, NonConvergence
from apptimestepping.mdlProcess.mdlSpectral import (
    Grid, SpectralField, h1_inner, norms, random_divfree, shear,
)
from apptimestepping.mdlProcess.mdlTimestep import (
    SchemeConfig, energy_identity_residual, fully_implicit_step, semi_implicit_step, step,
)


def h1_distance(u, v):
    diff = u - v
    return math.sqrt(h1_inner(diff, diff))


class SchemeConfigTests(SimpleTestCase):

    def test_invalid_parameters(self):
        for kwargs in ({'k': 0.0, 'nu': 1.0}, {'k': 0.1, 'nu': -1.0}, {'k': math.inf, 'nu': 1.0},
                       {'k': 0.1, 'nu': 1.0, 'scheme': 'crank_nicolson'},
                       {'k': 0.1, 'nu': 1.0, 'fp_max_iter': 0}):
            with self.assertRaises(AnalysisInputError):
                SchemeConfig(**kwargs)

    def test_scheme_mismatch(self):
        u = SpectralField.zeros(Grid(8))
        with self.assertRaises(AnalysisInputError):
            semi_implicit_step(u, u, SchemeConfig(k=0.1, nu=1.0, scheme=Scheme.FullyImplicit))
        with self.assertRaises(AnalysisInputError):
            fully_implicit_step(u, u, SchemeConfig(k=0.1, nu=1.0, scheme=Scheme.SemiImplicit))


class ShearDecayTests(SimpleTestCase):
    """A sin z e_x has no nonlinear transfer, so each step divides it by 1 + nu k."""

    def test_exact_decay_for_both_schemes(self):
        grid = Grid(16)
        u0 = shear(grid, 0.05)
        zero = SpectralField.zeros(grid)
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.01, nu=1.0, scheme=scheme)
            u = u0
            for _ in range(5):
                result = step(u, zero, cfg)
                # the first iterate is already exact; the second only confirms a zero increment
                self.assertEqual(result.fp_iters, 2)
                u = result.u_new
            expected = norms(u0).l2_sq * (1.0 + 0.01) ** -10
            self.assertAlmostEqual(norms(u).l2_sq / expected, 1.0, places=12)

    def test_hundred_steps_match_closed_form(self):
        grid = Grid(16)
        u0 = shear(grid, 1.0)
        zero = SpectralField.zeros(grid)
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.01, nu=1.0, scheme=scheme)
            u = u0
            worst = 0.0
            for n in range(1, 101):
                u = step(u, zero, cfg).u_new
                exact = u0 * (1.0 + 0.01) ** -n
                error = math.sqrt(norms(u - exact).l2_sq / norms(exact).l2_sq)
                worst = max(worst, error)
            self.assertLessEqual(worst, 1e-10, scheme)

    def test_forced_step_from_rest(self):
        grid = Grid(8)
        f = shear(grid, 2.0)
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.1, nu=0.5, scheme=scheme)
            result = step(SpectralField.zeros(grid), f, cfg)
            expected = f * (0.1 / (1.0 + 0.5 * 0.1))
            self.assertLess(np.max(np.abs(result.u_new.coeffs - expected.coeffs)), 1e-15)
            self.assertLess(result.energy_identity_residual, 1e-12)


class EnergyIdentityTests(SimpleTestCase):

    def test_identity_holds_for_random_data(self):
        grid = Grid(8)
        u0 = random_divfree(grid, seed=21, slope=1.0, amplitude=1.0, kmax=3.0)
        f = random_divfree(grid, seed=22, slope=0.0, amplitude=0.5, kmax=2.0)
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.02, nu=0.5, scheme=scheme)
            result = step(u0, f, cfg)
            self.assertLess(result.energy_identity_residual, 1e-10)
            self.assertLessEqual(result.fp_residual, cfg.fp_tol)
            for name, value in result.u_new.defects().items():
                self.assertLess(value, 1e-13, name)

    def test_identity_detects_a_wrong_update(self):
        grid = Grid(8)
        u0 = random_divfree(grid, seed=23, slope=1.0, amplitude=1.0, kmax=3.0)
        zero = SpectralField.zeros(grid)
        cfg = SchemeConfig(k=0.02, nu=1.0, scheme=Scheme.SemiImplicit)
        result = semi_implicit_step(u0, zero, cfg)
        perturbed = result.u_new + shear(grid, 1e-3)
        self.assertGreater(energy_identity_residual(u0, perturbed, zero, cfg), 1e-6)

    def test_unforced_steps_dissipate(self):
        grid = Grid(8)
        u = random_divfree(grid, seed=24, slope=1.0, amplitude=1.0, kmax=3.0)
        zero = SpectralField.zeros(grid)
        cfg = SchemeConfig(k=0.05, nu=1.0, scheme=Scheme.FullyImplicit)
        energy = norms(u).l2_sq
        for _ in range(4):
            u = step(u, zero, cfg).u_new
            self.assertLess(norms(u).l2_sq, energy)
            energy = norms(u).l2_sq


class SchemeAgreementTests(SimpleTestCase):

    def test_one_step_difference_is_second_order(self):
        grid = Grid(8)
        u0 = random_divfree(grid, seed=31, slope=1.0, amplitude=1.0, kmax=1.8)
        zero = SpectralField.zeros(grid)
        differences = []
        for k in (0.02, 0.01):
            semi = step(u0, zero, SchemeConfig(k=k, nu=1.0, scheme=Scheme.SemiImplicit)).u_new
            full = step(u0, zero, SchemeConfig(k=k, nu=1.0, scheme=Scheme.FullyImplicit)).u_new
            differences.append(h1_distance(semi, full))
        ratio = differences[0] / differences[1]
        self.assertGreaterEqual(ratio, 3.0)
        self.assertLessEqual(ratio, 5.0)


class NonConvergenceTests(SimpleTestCase):

    def test_large_step_on_rough_data(self):
        grid = Grid(8)
        u0 = random_divfree(grid, seed=41, slope=0.0, amplitude=100.0, kmax=3.0)
        cfg = SchemeConfig(k=1.0, nu=0.01, scheme=Scheme.FullyImplicit, fp_max_iter=20)
        with self.assertRaises(NonConvergence) as ctx:
            fully_implicit_step(u0, SpectralField.zeros(grid), cfg)
        self.assertLessEqual(ctx.exception.iterations, 20)


class ZeroSolutionTests(SimpleTestCase):
    """f = -u_prev/k makes u_new = 0 the exact solution of either scheme."""

    def test_shear_is_cancelled_in_one_iterate(self):
        grid = Grid(16)
        u0 = shear(grid, 1.0)
        f = u0 * -4.0
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.25, nu=1.0, scheme=scheme)
            result = step(u0, f, cfg)
            self.assertEqual(result.fp_iters, 2)
            self.assertLessEqual(result.fp_residual, cfg.fp_tol)
            self.assertLess(np.max(np.abs(result.u_new.coeffs)), 1e-15)
            self.assertLess(result.energy_identity_residual, 1e-13)

    def test_iterates_shrinking_to_zero_converge(self):
        grid = Grid(8)
        u0 = random_divfree(grid, seed=51, slope=1.0, amplitude=1.0, kmax=3.0)
        f = u0 * -4.0
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.25, nu=1.0, scheme=scheme)
            result = step(u0, f, cfg)
            self.assertLessEqual(result.fp_residual, cfg.fp_tol)
            self.assertLess(h1_distance(result.u_new, SpectralField.zeros(grid)),
                            1e-12 * math.sqrt(h1_inner(u0, u0)))
            self.assertLess(result.energy_identity_residual, 1e-10)


class LongRunEnergyTests(SimpleTestCase):

    def test_identity_holds_on_every_step(self):
        grid = Grid(16)
        u0 = random_divfree(grid, seed=61, slope=1.0, amplitude=0.1, kmax=3.0)
        f = random_divfree(grid, seed=62, slope=0.0, amplitude=0.01, kmax=2.0)
        for scheme in Scheme.All:
            cfg = SchemeConfig(k=0.01, nu=1.0, scheme=scheme)
            u = u0
            worst = 0.0
            for _ in range(200):
                result = step(u, f, cfg)
                worst = max(worst, result.energy_identity_residual)
                u = result.u_new
            self.assertLessEqual(worst, 1e-9, scheme)
