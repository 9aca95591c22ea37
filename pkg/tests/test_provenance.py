#!/usr/bin/env python3
"""
Unit tests for tnbm.provenance_helper and tnbm.benchmark
"""

import json
import os
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'scripts'))

from tnbm import provenance_helper
from tnbm.benchmark import TimingRecord, fit_exponent, hvp_grid, time_dense_solve


class TestConfigHash(unittest.TestCase):
    """Test canonical hashing of configurations."""

    def test_key_order_irrelevant(self):
        """Dicts with the same content hash identically."""
        a = {'training': {'n_sweeps': 5}, 'model': {'bond_dim': 4}}
        b = {'model': {'bond_dim': 4}, 'training': {'n_sweeps': 5}}
        self.assertEqual(provenance_helper.config_hash(a), provenance_helper.config_hash(b))

    def test_value_change(self):
        """Any value change changes the hash."""
        a = {'model': {'bond_dim': 4}}
        b = {'model': {'bond_dim': 5}}
        self.assertNotEqual(provenance_helper.config_hash(a), provenance_helper.config_hash(b))
        self.assertEqual(len(provenance_helper.config_hash(a)), 64)


class TestRunManifest(unittest.TestCase):
    """Test manifest creation and updates."""

    def test_lifecycle(self):
        """Artifacts are appended and the final status is recorded."""
        config = {'experiment': {'name': 'toy'}}
        manifest = provenance_helper.create_run_manifest('toy', config, ['summary.json'])
        self.assertEqual(manifest['config_hash'], provenance_helper.config_hash(config))
        self.assertIn('numpy_version', manifest['environment'])
        self.assertIn('git_commit', manifest)

        provenance_helper.update_run_manifest(manifest, 'summary.json', 'run_summary', success=True)
        provenance_helper.update_run_manifest(
            manifest, 'newton/seed_0.csv', 'seed_trace', success=False, error='boom'
        )
        provenance_helper.finalize_run_manifest(manifest, 'partial', 1.5)
        self.assertEqual([a['success'] for a in manifest['artifacts_generated']], [True, False])
        self.assertEqual(manifest['artifacts_generated'][1]['error'], 'boom')
        self.assertEqual(manifest['status'], 'partial')

        with tempfile.TemporaryDirectory() as tmp:
            path = provenance_helper.save_manifest(manifest, Path(tmp) / 'run' / 'manifest.json')
            with open(path) as f:
                self.assertEqual(json.load(f)['wall_time_seconds'], 1.5)


class TestBenchmark(unittest.TestCase):
    """Test timing helpers on tiny sizes."""

    def test_fit_exponent(self):
        """A power law is recovered exactly."""
        sizes = [10, 20, 40, 80]
        self.assertAlmostEqual(fit_exponent(sizes, [3e-6 * s ** 1.5 for s in sizes]), 1.5, places=10)

    def test_records(self):
        """Grid and dense timings produce positive records."""
        records = hvp_grid([4, 8], [5], repeats=2)
        self.assertEqual([(r.operation, r.dim, r.n_samples) for r in records], [('hvp', 4, 5), ('hvp', 8, 5)])
        dense = time_dense_solve(6, 5, repeats=2)
        self.assertIsInstance(dense, TimingRecord)
        self.assertEqual(dense.operation, 'dense_solve')
        self.assertTrue(all(r.seconds >= 0 for r in records + [dense]))


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
