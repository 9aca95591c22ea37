#!/usr/bin/env python3
"""
Unit tests for tnbm.newton

Covers the dense and matrix-free Newton steps, the gradient fallback on
singular systems, Krylov iteration counts and the retraction.
"""

import math
import os
import sys
import unittest

import numpy as np
from scipy.sparse.linalg import LinearOperator

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'scripts'))

from tnbm.errors import DegenerateError
from tnbm.loss import LocalProblem, RegMode, TangentVector, grad_projected, hess_dense, local_loss
from tnbm.newton import (
    NewtonConfig,
    krylov_solve,
    newton_step,
    newton_step_dense,
    newton_step_iterative,
    retract,
    solve_newton_system_dense,
)


def random_problem(dim=12, n_samples=7, seed=0):
    """Unit tensor with overlaps of magnitude in [0.5, 1.5] and mixed signs."""
    rng = np.random.default_rng(seed)
    tensor = rng.standard_normal(dim)
    tensor /= np.linalg.norm(tensor)
    raw = rng.standard_normal((n_samples, dim))
    raw -= np.outer(raw @ tensor, tensor)
    overlaps = rng.uniform(0.5, 1.5, n_samples) * rng.choice([-1.0, 1.0], n_samples)
    weights = rng.uniform(0.5, 1.5, n_samples)
    return LocalProblem.build(tensor, raw + np.outer(overlaps, tensor), weights / weights.sum())


class TestNewtonConfig(unittest.TestCase):
    """Test solver settings validation."""

    def test_defaults(self):
        """Dense solver with cg settings by default."""
        cfg = NewtonConfig()
        self.assertEqual(cfg.solver, 'dense')
        self.assertEqual(cfg.krylov, 'cg')

    def test_invalid(self):
        """Unknown solvers and nonpositive tolerances are rejected."""
        with self.assertRaises(ValueError):
            NewtonConfig(solver='lbfgs')
        with self.assertRaises(ValueError):
            NewtonConfig(krylov='gmres')
        with self.assertRaises(ValueError):
            NewtonConfig(inner_tol=0.0)
        with self.assertRaises(ValueError):
            NewtonConfig(step_cap=-1.0)


class TestDenseNewton(unittest.TestCase):
    """Test the direct Newton solve."""

    def test_scaled_projector(self):
        """H = 2(I - TT^T) gives Delta = -g / 2."""
        rng = np.random.default_rng(0)
        tensor = rng.standard_normal(5)
        tensor /= np.linalg.norm(tensor)
        g = rng.standard_normal(5)
        g -= (g @ tensor) * tensor
        hessian = 2.0 * (np.eye(5) - np.outer(tensor, tensor))
        step, fallback = solve_newton_system_dense(hessian, g, tensor)
        self.assertFalse(fallback)
        np.testing.assert_allclose(step, -g / 2, atol=1e-12)

    def test_singular_fallback(self):
        """A tangent null direction triggers -g / lambda_max."""
        tensor = np.array([1.0, 0.0, 0.0])
        hessian = np.diag([0.0, 0.0, 5.0])
        g = np.array([0.0, 1.0, 2.0])
        step, fallback = solve_newton_system_dense(hessian, g, tensor)
        self.assertTrue(fallback)
        np.testing.assert_allclose(step, -g / 5.0)

    def test_newton_equation(self):
        """The step is tangent and solves H Delta = -g."""
        for mode in (RegMode.none(), RegMode.smooth(0.025), RegMode.bias(0.01)):
            p = random_problem(seed=1)
            result = newton_step_dense(p, mode)
            self.assertFalse(result.fallback_used)
            self.assertLess(abs(result.step.components @ p.tensor), 1e-10)
            self.assertLess(result.residual_norm, 1e-8)
            self.assertEqual(result.inner_iters, 0)

    def test_quadratic_model_decrease(self):
        """With a positive-definite tangent Hessian the model decreases."""
        for seed in range(50):
            p = random_problem(seed=seed)
            for mode in (RegMode.none(), RegMode.smooth(0.025, abs_correct=True)):
                g = grad_projected(p, mode).components
                step = newton_step_dense(p, mode).step.components
                model = g @ step + 0.5 * step @ hess_dense(p, mode) @ step
                self.assertLess(g @ step, 0.0)
                self.assertLess(model, 0.0)

    def test_zero_gradient(self):
        """At a stationary point the step is exactly zero."""
        p = LocalProblem.build([1.0, 0.0, 0.0], [[1.0, 0.0, 0.0]], [1.0])
        result = newton_step_dense(p, RegMode.none())
        self.assertFalse(np.any(result.step.components))
        self.assertEqual(result.residual_norm, 0.0)

    def test_step_cap(self):
        """Steps longer than step_cap are shortened to it."""
        p = random_problem(seed=2)
        uncapped = newton_step_dense(p, RegMode.none()).step
        cap = 0.5 * uncapped.norm()
        capped = newton_step_dense(p, RegMode.none(), NewtonConfig(step_cap=cap)).step
        self.assertAlmostEqual(capped.norm(), cap, places=12)


class TestIterativeNewton(unittest.TestCase):
    """Test the matrix-free Newton solve."""

    def test_agrees_with_dense(self):
        """Iterative and dense steps coincide at tight inner tolerance."""
        for krylov in ('cg', 'minres'):
            cfg = NewtonConfig(solver='iterative', krylov=krylov, inner_tol=1e-12, max_inner_iters=500)
            for seed in range(5):
                p = random_problem(seed=seed)
                for mode in (RegMode.none(), RegMode.smooth(0.025), RegMode.bias(0.01)):
                    dense = newton_step_dense(p, mode).step.components
                    result = newton_step_iterative(p, mode, cfg)
                    self.assertFalse(result.fallback_used)
                    np.testing.assert_allclose(result.step.components, dense, rtol=1e-6, atol=1e-8)

    def test_tangent_and_counted(self):
        """The step is tangent and every iteration costs two hvp calls."""
        p = random_problem(seed=3)
        result = newton_step(p, RegMode.smooth(0.025), NewtonConfig(solver='iterative'))
        self.assertLess(abs(result.step.components @ p.tensor), 1e-10)
        self.assertGreater(result.inner_iters, 0)
        self.assertGreaterEqual(result.hvp_calls, 2 * result.inner_iters + 1)

    def test_stalled_solve_falls_back(self):
        """One Krylov iteration is not enough and triggers the fallback."""
        p = random_problem(dim=20, n_samples=15, seed=4)
        cfg = NewtonConfig(solver='iterative', max_inner_iters=1)
        result = newton_step_iterative(p, RegMode.none(), cfg)
        g = grad_projected(p, RegMode.none()).components
        self.assertTrue(result.fallback_used)
        self.assertLess(g @ result.step.components, 0.0)
        self.assertLess(abs(result.step.components @ p.tensor), 1e-10)


class TestKrylovIterations(unittest.TestCase):
    """Test cg iteration counts against the condition-number bound."""

    def test_iterations_scale_with_sqrt_kappa(self):
        """Iterations stay within 3x of 0.5 sqrt(kappa) ln(2 / tol)."""
        tol = 1e-8
        cfg = NewtonConfig(solver='iterative', krylov='cg', inner_tol=tol, max_inner_iters=2000)
        rhs = np.random.default_rng(0).standard_normal(2000)
        counts = []
        for kappa in (10.0, 100.0, 1000.0):
            diagonal = np.linspace(1.0, kappa, 2000)
            operator = LinearOperator((2000, 2000), matvec=lambda v, d=diagonal: d * np.ravel(v))
            result = krylov_solve(operator, rhs, cfg)
            bound = 0.5 * math.sqrt(kappa) * math.log(2.0 / tol)
            self.assertTrue(result.converged)
            self.assertLessEqual(result.relative_residual, 10 * tol)
            self.assertLessEqual(result.iterations, 3 * bound)
            self.assertGreaterEqual(result.iterations, bound / 3)
            counts.append(result.iterations)
        self.assertLess(counts[0], counts[1])
        self.assertLess(counts[1], counts[2])

    def test_zero_rhs(self):
        """A zero right-hand side returns zero without iterating."""
        operator = LinearOperator((3, 3), matvec=lambda v: np.ravel(v))
        result = krylov_solve(operator, np.zeros(3), NewtonConfig())
        self.assertEqual(result.iterations, 0)
        self.assertFalse(np.any(result.solution))


class TestBarrierCrossing(unittest.TestCase):
    """Test steps from a slightly negative overlap whose optimum lies on the positive side."""

    def setUp(self):
        # overlaps sin(theta) and (cos + sin)/sqrt(2); theta = -0.005
        theta = -0.005
        tensor = np.array([math.cos(theta), math.sin(theta)])
        envs = np.array([[0.0, 1.0], [1.0 / math.sqrt(2), 1.0 / math.sqrt(2)]])
        self.p = LocalProblem.build(tensor, envs, [0.5, 0.5])

    def test_smoothed_step_crosses_zero(self):
        """The smoothed Newton step flips the sign of the small overlap and keeps the NLL finite."""
        mode = RegMode.smooth(0.025, abs_correct=True)
        result = newton_step_dense(self.p, mode)
        moved = self.p.with_tensor(retract(self.p.tensor, result.step))
        self.assertFalse(result.fallback_used)
        self.assertLess(self.p.overlaps[0], 0.0)
        self.assertGreater(moved.overlaps[0], 0.0)
        self.assertTrue(math.isfinite(local_loss(moved, RegMode.none())))
        self.assertLess(local_loss(moved, mode), local_loss(self.p, mode))

    def test_unregularized_step_stays_on_side(self):
        """Without smoothing the pole keeps the overlap negative."""
        result = newton_step_dense(self.p, RegMode.none())
        moved = self.p.with_tensor(retract(self.p.tensor, result.step))
        self.assertLess(moved.overlaps[0], 0.0)


class TestRetract(unittest.TestCase):
    """Test the normalizing retraction."""

    def test_unit_norm(self):
        """Retracted points lie on the sphere."""
        tensor = np.array([0.6, 0.8, 0.0])
        moved = retract(tensor, TangentVector(tensor, np.array([0.8, -0.6, 0.5])))
        self.assertAlmostEqual(np.linalg.norm(moved), 1.0, places=14)

    def test_zero_step_is_identity(self):
        """Retracting a zero step returns T."""
        tensor = np.array([0.6, 0.8])
        np.testing.assert_allclose(retract(tensor, np.zeros(2)), tensor)

    def test_vanishing_point(self):
        """T + step = 0 cannot be normalized."""
        with self.assertRaises(DegenerateError):
            retract(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))


def run_tests():
    """Run all tests."""
    loader = unittest.TestLoader()
    suite = loader.loadTestsFromModule(sys.modules[__name__])
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)
    return result.wasSuccessful()


if __name__ == '__main__':
    success = run_tests()
    sys.exit(0 if success else 1)
