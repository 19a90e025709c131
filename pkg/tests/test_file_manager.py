import unittest
import os
import shutil
import sys

import numpy as np

# Adjust import path if running tests from project root
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from DiracDecay.decay import DecaySeries
from DiracDecay.discretize import KernelSpec, assemble, build_grid
from DiracDecay.file_manager import (SNAPSHOT_HEADER, build_manifest, gnuplot_stub,
                                     load_decay_csv, load_manifest, load_operator_snapshot,
                                     load_pair_snapshot, load_report, save_decay_csv,
                                     save_fits_csv, save_manifest, save_operator_snapshot,
                                     save_pair_snapshot, save_report, scan_reports)
from DiracDecay.propagator import EvolutionKernel, build_probes
from DiracDecay.threshold import ThresholdReport

TEST_RUNS_DIR = os.path.join(os.path.dirname(__file__), "temp_test_runs")


def _report(classification="regular", rank_S1=0, rank_S2=0):
    return ThresholdReport(classification=classification, rank_S1=rank_S1, rank_S2=rank_S2,
                           sigma_min_T=0.42, sigma_max_T=3.1, tolerance=3.1e-6,
                           residuals=[0.01] * rank_S1, moments=[0.5] * rank_S1,
                           tail_ratios=[0.02] * rank_S1, coupling=1.0)


class TestFileManager(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        # Create a temporary directory for run output
        if os.path.exists(TEST_RUNS_DIR):
            shutil.rmtree(TEST_RUNS_DIR)
        os.makedirs(TEST_RUNS_DIR, exist_ok=True)
        cls.grid = build_grid(8, 3.0)

    @classmethod
    def tearDownClass(cls):
        if os.path.exists(TEST_RUNS_DIR):
            shutil.rmtree(TEST_RUNS_DIR)

    def setUp(self):
        # Clear out any files from previous tests within this class
        for item in os.listdir(TEST_RUNS_DIR):
            item_path = os.path.join(TEST_RUNS_DIR, item)
            if os.path.isfile(item_path):
                os.unlink(item_path)
            elif os.path.isdir(item_path):
                shutil.rmtree(item_path)

    def test_01_save_and_load_report(self):
        path = os.path.join(TEST_RUNS_DIR, "threshold_report.md")
        self.assertTrue(save_report(_report("p_resonance", 1, 0), path, self.grid,
                                    {'s_star': 2.5}))
        loaded = load_report(path)
        self.assertIsNotNone(loaded)
        self.assertEqual(loaded['classification'], "p_resonance")
        self.assertEqual(loaded['rank_S1'], 1)
        self.assertEqual(loaded['grid'], {'n_per_axis': 8, 'L': 3.0})
        self.assertEqual(loaded['s_star'], 2.5)
        self.assertIn("| φ | residual | moment | tail ratio |", loaded['body'])

    def test_02_load_report_without_front_matter(self):
        path = os.path.join(TEST_RUNS_DIR, "plain.md")
        with open(path, 'w', encoding='utf-8') as f:
            f.write("# Just notes\n")
        self.assertIsNone(load_report(path))
        self.assertIsNone(load_report(os.path.join(TEST_RUNS_DIR, "missing.md")))

    def test_03_scan_reports(self):
        save_report(_report(), os.path.join(TEST_RUNS_DIR, "a.md"))
        save_report(_report("eigenvalue", 1, 1), os.path.join(TEST_RUNS_DIR, "b.md"))
        with open(os.path.join(TEST_RUNS_DIR, "notes.txt"), 'w') as f:
            f.write("ignored")
        reports = scan_reports(TEST_RUNS_DIR)
        self.assertEqual([r['classification'] for r in reports], ["regular", "eigenvalue"])
        self.assertTrue(reports[0]['path'].endswith("a.md"))
        self.assertEqual(scan_reports(os.path.join(TEST_RUNS_DIR, "nope")), [])

    def test_04_operator_snapshot(self):
        op = assemble(KernelSpec("RD", 1, 0.3), self.grid)
        path = os.path.join(TEST_RUNS_DIR, "snapshots", "rd.ddsnap")
        self.assertTrue(save_operator_snapshot(op, path, t=12.5))
        loaded = load_operator_snapshot(path)
        self.assertEqual(loaded['N'], self.grid.N)
        self.assertEqual(loaded['tag'], "RD")
        self.assertEqual(loaded['lam'], 0.3)
        self.assertEqual(loaded['t'], 12.5)
        np.testing.assert_array_equal(loaded['blocks'], op.kernel_blocks())
        expected_size = SNAPSHOT_HEADER.itemsize + self.grid.N ** 2 * 4 * 16
        self.assertEqual(os.path.getsize(path), expected_size)

    def test_05_pair_snapshot(self):
        probes = build_probes(3.0, 1.0)
        rng = np.random.default_rng(5)
        blocks = rng.standard_normal((probes.P, 2, 2)) + 1j * rng.standard_normal((probes.P, 2, 2))
        kernel = EvolutionKernel(16.0, blocks, probes, "stone_low_energy")
        path = os.path.join(TEST_RUNS_DIR, "pair.ddpair")
        self.assertTrue(save_pair_snapshot(kernel, path))
        loaded = load_pair_snapshot(path)
        self.assertEqual((loaded['P'], loaded['t'], loaded['tag']),
                         (probes.P, 16.0, "stone_low_energy"))
        np.testing.assert_array_equal(loaded['x'], probes.x)
        np.testing.assert_array_equal(loaded['blocks'], blocks)

    def test_06_truncated_snapshot(self):
        path = os.path.join(TEST_RUNS_DIR, "short.ddpair")
        with open(path, 'wb') as f:
            f.write(b"DDPAIR01" + b"\x00" * 10)
        self.assertIsNone(load_pair_snapshot(path))
        with open(path, 'wb') as f:
            f.write(b"NOTASNAP" * 8)
        self.assertIsNone(load_operator_snapshot(path))

    def test_07_decay_tables(self):
        t = np.array([4.0, 8.0, 16.0, 32.0, 64.0])
        series = DecaySeries(0.5, t, t ** -1.0, "free").fit()
        csv_path = os.path.join(TEST_RUNS_DIR, "decay.csv")
        self.assertTrue(save_decay_csv([series], csv_path))
        rows = load_decay_csv(csv_path)
        self.assertEqual(len(rows), 5)
        self.assertEqual(rows[2], {'t': 16.0, 'norm': 1.0 / 16.0, 'gamma': 0.5,
                                   'provenance': "free"})
        fits_path = os.path.join(TEST_RUNS_DIR, "fits.csv")
        self.assertTrue(save_fits_csv([series], fits_path))
        with open(fits_path, 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "gamma,provenance,exponent,stderr,t_min,t_max")
        gamma, provenance, exponent = lines[1].split(",")[:3]
        self.assertEqual((gamma, provenance), ("0.5", "free"))
        self.assertAlmostEqual(float(exponent), -1.0, places=10)

    def test_08_gnuplot_stub(self):
        stub = gnuplot_stub("decay.csv", 0.5, "free")
        self.assertIn("set logscale xy", stub)
        self.assertIn("strcol(4) eq 'free'", stub)
        self.assertIn("$3==0.5", stub)

    def test_09_manifest(self):
        manifest = build_manifest({'grid': {'n_per_axis': 8}}, "abc123", "classify", True,
                                  {'classification': "regular"})
        path = os.path.join(TEST_RUNS_DIR, "manifest.yaml")
        self.assertTrue(save_manifest(manifest, path))
        loaded = load_manifest(path)
        self.assertEqual(loaded['command'], "classify")
        self.assertEqual(loaded['config_hash'], "abc123")
        self.assertTrue(loaded['serial'])
        self.assertIn('numpy', loaded['versions'])
        self.assertEqual(loaded['classification'], "regular")
        self.assertIsNone(load_manifest(os.path.join(TEST_RUNS_DIR, "absent.yaml")))


if __name__ == '__main__':
    unittest.main()
