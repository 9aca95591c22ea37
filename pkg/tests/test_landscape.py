#!/usr/bin/env python3
"""
Unit tests for tnbm.landscape
"""

import csv
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'scripts'))

from tnbm.errors import DegenerateError
from tnbm.landscape import landscape_slice, slice_points, vanishing_overlap_problem, zero_crossings


class TestLandscapeSlice(unittest.TestCase):
    """Test loss slices through a vanishing overlap."""

    def setUp(self):
        self.problem, self.direction = vanishing_overlap_problem(8, 3, seed=0)
        self.steps = np.arange(-200, 201) / 200.0
        self.slice = landscape_slice(self.problem, self.direction, self.steps)

    def test_points_on_sphere(self):
        """Slice points are unit vectors and s = 0 is T itself."""
        points = slice_points(self.problem, self.direction, [0.0, 0.5, -2.0])
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0)
        np.testing.assert_allclose(points[0], self.problem.tensor)

    def test_pole_at_zero_overlap(self):
        """The unregularized loss is infinite only where the overlap vanishes."""
        middle = 200
        self.assertEqual(self.steps[middle], 0.0)
        self.assertEqual(self.slice.overlaps[middle, 0], 0.0)
        self.assertEqual(self.slice.loss_none[middle], math.inf)
        self.assertEqual(int(np.sum(~np.isfinite(self.slice.loss_none))), 1)

    def test_overlap_changes_sign(self):
        """The first overlap is negative before the pole and positive after."""
        overlap = self.slice.overlaps[:, 0]
        self.assertTrue(np.all(overlap[:200] < 0))
        self.assertTrue(np.all(overlap[201:] > 0))

    def test_smoothing_bounds(self):
        """Smoothed curves are finite, below the unregularized one and ordered in eps."""
        curves = self.slice.loss_smooth
        for eps, values in curves.items():
            self.assertTrue(np.all(np.isfinite(values)))
            self.assertTrue(np.all(values <= self.slice.loss_none))
        self.assertTrue(np.all(curves[0.1] <= curves[0.025]))
        self.assertTrue(np.all(curves[0.025] <= curves[0.001]))

    def test_csv_columns(self):
        """CSV lists the step, every overlap, then losses by decreasing eps."""
        with tempfile.TemporaryDirectory() as tmp:
            path = self.slice.to_csv(Path(tmp) / 'slice.csv')
            with open(path, newline='') as f:
                rows = list(csv.reader(f))
        self.assertEqual(
            rows[0],
            ['step', 'overlap_0', 'overlap_1', 'overlap_2', 'loss_none',
             'loss_eps_0.1', 'loss_eps_0.025', 'loss_eps_0.001']
        )
        self.assertEqual(len(rows), 402)
        self.assertEqual(rows[201][4], 'inf')

    def test_direction_along_tensor(self):
        """A direction parallel to T has no tangent part."""
        with self.assertRaises(DegenerateError):
            landscape_slice(self.problem, self.problem.tensor, self.steps)


class TestZeroCrossings(unittest.TestCase):
    """Test sign-change detection."""

    def test_known_crossing(self):
        """The constructed overlap crosses zero at s = 0."""
        problem, direction = vanishing_overlap_problem(8, 3, seed=1)
        crossings = zero_crossings(problem, direction, -1.0, 1.0, 1001)
        first = [s for sample, s in crossings if sample == 0]
        self.assertEqual(len(first), 1)
        self.assertAlmostEqual(first[0], 0.0, delta=1e-12)

    def test_crossings_are_roots(self):
        """Every reported parameter zeroes its overlap."""
        problem, direction = vanishing_overlap_problem(6, 5, seed=2)
        crossings = zero_crossings(problem, direction, -3.0, 3.0, 601)
        self.assertEqual([s for _, s in crossings], sorted(s for _, s in crossings))
        for sample, s in crossings:
            point = slice_points(problem, direction, [s])[0]
            self.assertLess(abs(point @ problem.envs[sample]), 1e-10)


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
