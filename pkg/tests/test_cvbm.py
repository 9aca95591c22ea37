#!/usr/bin/env python3
"""
Unit tests for tnbm.cvbm

Checks the Legendre embedding, isometry handling, the isometry gradient
against finite differences and the alternating training loop.
"""

import os
import sys
import unittest

import numpy as np
from numpy.polynomial import legendre

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'scripts'))

from tnbm.cvbm import (
    ContinuousDataset,
    EmbeddingLayer,
    embed,
    embed_batch,
    isometry_gd_step,
    isometry_gradient,
    isometry_loss,
    reduce,
    retract_isometry,
    train_continuous,
)
from tnbm.datasets import ContinuousRecord
from tnbm.errors import DimensionError
from tnbm.loss import RegMode, nll_from_amplitudes
from tnbm.mps import amplitudes, random_init
from tnbm.newton import NewtonConfig
from tnbm.sweep import OptimizerKind, RegularizationSchedule


def toy_problem(seed=0, n_sites=3, raw_dim=6, reduced_dim=3, n_samples=8):
    rng = np.random.default_rng(seed)
    mps = random_init(n_sites, reduced_dim, 2, seed=seed)
    layer = EmbeddingLayer.initialize(n_sites, seed + 1, raw_dim, reduced_dim)
    data = ContinuousDataset(
        rng.uniform(0.0, 1.0, (n_samples, n_sites)),
        np.full(n_samples, 1.0 / n_samples),
        raw_dim
    )
    return mps, layer, data


def loss_at(isometries, mps, data):
    """Unregularized NLL for arbitrary (not necessarily isometric) matrices."""
    vectors = np.einsum('nir,irk->nik', data.features, isometries)
    return nll_from_amplitudes(amplitudes(mps, vectors), data.weights, mps.norm() ** 2).value


class TestEmbedding(unittest.TestCase):
    """Test the fixed Legendre features."""

    def test_orthonormal_on_unit_interval(self):
        """Features are orthonormal in L2([0, 1])."""
        nodes, weights = legendre.leggauss(40)
        features = embed_batch((nodes + 1.0) / 2.0, 25)
        gram = (features.T * (weights / 2.0)) @ features
        np.testing.assert_allclose(gram, np.eye(25), atol=1e-10)

    def test_parity_at_midpoint(self):
        """Odd features vanish at v = 0.5."""
        e = embed(0.5, 25)
        np.testing.assert_allclose(e[1::2], 0.0, atol=1e-14)
        self.assertAlmostEqual(e[0], 1.0, places=14)

    def test_endpoints(self):
        """e_k(1) = sqrt(2k + 1) and e_k(0) = (-1)^k sqrt(2k + 1)."""
        k = np.arange(10)
        np.testing.assert_allclose(embed(1.0, 10), np.sqrt(2 * k + 1), rtol=1e-12)
        np.testing.assert_allclose(embed(0.0, 10), (-1.0) ** k * np.sqrt(2 * k + 1), rtol=1e-12)

    def test_continuity(self):
        """Nearby inputs give nearby features."""
        delta = np.linalg.norm(embed(0.3 + 1e-10) - embed(0.3))
        self.assertLess(delta, 1e-5)

    def test_out_of_range_clamped(self):
        """Inputs outside [0, 1] are clamped with a warning."""
        with self.assertLogs('tnbm.cvbm', level='WARNING'):
            features = embed_batch(np.array([1.5, -0.2]), 5)
        np.testing.assert_allclose(features[0], embed(1.0, 5))
        np.testing.assert_allclose(features[1], embed(0.0, 5))


class TestEmbeddingLayer(unittest.TestCase):
    """Test isometry storage and reduction."""

    def test_initialize_is_isometric(self):
        """Seeded QR isometries have orthonormal columns."""
        layer = EmbeddingLayer.initialize(4, seed=0)
        self.assertEqual(layer.isometries.shape, (4, 25, 3))
        self.assertLess(layer.max_defect(), 1e-12)

    def test_rejects_non_isometry(self):
        """Columns must be orthonormal."""
        with self.assertRaises(ValueError):
            EmbeddingLayer(np.ones((2, 5, 2)))
        with self.assertRaises(DimensionError):
            EmbeddingLayer(np.zeros((2, 2, 5)))

    def test_reduce(self):
        """The coordinate layer keeps the leading features."""
        layer = EmbeddingLayer.coordinate(2, raw_dim=6, reduced_dim=3)
        features = embed(0.7, 6)
        np.testing.assert_allclose(reduce(features, layer, 1), features[:3])
        with self.assertRaises(DimensionError):
            reduce(features[:5], layer, 0)
        with self.assertRaises(DimensionError):
            reduce(features, layer, 2)

    def test_site_vectors(self):
        """Dataset site vectors apply U_i^T per site."""
        mps, layer, data = toy_problem()
        vectors = data.site_vectors(layer)
        self.assertEqual(vectors.shape, (8, 3, 3))
        np.testing.assert_allclose(vectors[2, 1], reduce(data.features[2, 1], layer, 1))

    def test_from_records(self):
        """Records become a uniformly weighted dataset."""
        records = [ContinuousRecord((0.1, 0.2)), ContinuousRecord((0.3, 0.9), 'a')]
        data = ContinuousDataset.from_records(records, raw_dim=4)
        self.assertEqual(data.n_samples, 2)
        self.assertEqual(data.n_sites, 2)
        np.testing.assert_allclose(data.weights, [0.5, 0.5])


class TestIsometryGradient(unittest.TestCase):
    """Test isometry gradients and steps."""

    def test_finite_difference(self):
        """Analytic gradient matches central differences entrywise."""
        mps, layer, data = toy_problem(seed=2)
        gradient = isometry_gradient(layer, mps, data)
        base = np.array(layer.isometries)
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(10):
            index = tuple(int(rng.integers(0, n)) for n in base.shape)
            plus, minus = base.copy(), base.copy()
            plus[index] += h
            minus[index] -= h
            fd = (loss_at(plus, mps, data) - loss_at(minus, mps, data)) / (2 * h)
            self.assertAlmostEqual(fd, gradient[index], delta=1e-5 * max(1.0, abs(fd)))

    def test_regularized_finite_difference(self):
        """The smooth-mode gradient matches the smoothed loss."""
        mps, layer, data = toy_problem(seed=4)
        mode = RegMode.smooth(0.01)
        gradient = isometry_gradient(layer, mps, data, mode)
        direction = np.random.default_rng(5).standard_normal(layer.isometries.shape)

        def smoothed(isometries):
            vectors = np.einsum('nir,irk->nik', data.features, isometries)
            psi = amplitudes(mps, vectors)
            return -np.sum(data.weights * np.log(psi ** 2 + 0.01))

        h = 1e-6
        base = np.array(layer.isometries)
        fd = (smoothed(base + h * direction) - smoothed(base - h * direction)) / (2 * h)
        self.assertAlmostEqual(fd, np.sum(gradient * direction), delta=1e-5 * max(1.0, abs(fd)))

    def test_polar_retraction(self):
        """Polar factors have orthonormal columns and fix isometries."""
        matrix = np.random.default_rng(6).standard_normal((7, 3))
        unitary = retract_isometry(matrix)
        np.testing.assert_allclose(unitary.T @ unitary, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(retract_isometry(unitary), unitary, atol=1e-12)

    def test_descent_keeps_isometries_and_decreases_loss(self):
        """Ten small steps stay on the manifold and lower the NLL."""
        mps, layer, data = toy_problem(seed=7)
        losses = [isometry_loss(layer, mps, data)]
        for _ in range(10):
            layer = isometry_gd_step(layer, mps, data, eta=1e-4)
            self.assertLess(layer.max_defect(), 1e-10)
            losses.append(isometry_loss(layer, mps, data))
        self.assertTrue(np.all(np.diff(losses) <= 1e-12))
        self.assertLess(losses[-1], losses[0])


class TestTrainContinuous(unittest.TestCase):
    """Test alternating core and isometry training."""

    def test_trace_and_layer(self):
        """Two sweeps give 2(2N - 1) records and a valid layer."""
        mps, layer, data = toy_problem(seed=8)
        mps, layer, trace = train_continuous(
            mps, layer, data, OptimizerKind.reg_newton_smooth(), RegularizationSchedule(),
            2, NewtonConfig(), eta=1e-3
        )
        self.assertEqual(len(trace), 10)
        self.assertLess(layer.max_defect(), 1e-10)
        self.assertTrue(np.all(np.isfinite(trace.nll)))
        self.assertAlmostEqual(mps.norm(), 1.0, places=10)

    def test_dimension_mismatch(self):
        """The Mps site dimension must equal the reduced dimension."""
        _, layer, data = toy_problem()
        with self.assertRaises(DimensionError):
            train_continuous(
                random_init(3, 2, 2, seed=0), layer, data, OptimizerKind.newton(),
                RegularizationSchedule(), 1, NewtonConfig()
            )


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
