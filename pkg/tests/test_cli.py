import unittest
import contextlib
import io
import os
import shutil
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from DiracDecay.cli import (CLASSIFICATION_EXIT, FT_VERDICT_WINDOW, build_parser, main,
                           selftest_checks)
from DiracDecay.decay import default_times
from DiracDecay.discretize import BlockOperator, build_grid
from DiracDecay.file_manager import (load_decay_csv, load_manifest, load_operator_snapshot,
                                    load_pair_snapshot, load_report)

ACCEPTANCE = os.environ.get("DIRACDECAY_ACCEPTANCE") == "1"
TEST_CLI_DIR = os.path.join(os.path.dirname(__file__), "temp_test_cli")

WEAK_CONFIG = """potential:
  coupling: 0.05
grid:
  n_per_axis: 10
  L: 4.0
"""

FREE_CONFIG = """potential:
  family: zero
evolution:
  t_min: 8.0
  t_max: 128.0
  gammas: [0.0, 0.5]
  probe_rho_max: 10.0
"""

WELL_CONFIG = """grid:
  n_per_axis: 10
  L: 4.0
tune:
  target: eigenvalue
"""

RESONANCE_CONFIG = """potential:
  amplitude: [[-1.5, 0.0], [0.0, -0.5]]
  coupling: 1.0
grid:
  n_per_axis: 10
  L: 4.0
tune:
  target: resonance
evolution:
  t_min: 8.0
  t_max: 64.0
  probe_rho_max: 8.0
  probe_step: 2.0
"""


def _write(name: str, text: str) -> str:
    path = os.path.join(TEST_CLI_DIR, name)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path


def _run(argv) -> int:
    with contextlib.redirect_stdout(io.StringIO()):
        return main(argv)


class TestCommandLine(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        if os.path.exists(TEST_CLI_DIR):
            shutil.rmtree(TEST_CLI_DIR)
        os.makedirs(TEST_CLI_DIR, exist_ok=True)

    @classmethod
    def tearDownClass(cls):
        if os.path.exists(TEST_CLI_DIR):
            shutil.rmtree(TEST_CLI_DIR)

    def test_01_parser(self):
        args = build_parser().parse_args(["classify", "--grid-n", "16", "--serial", "-v"])
        self.assertEqual(args.command, "classify")
        self.assertEqual(args.grid_n, 16)
        self.assertTrue(args.serial)
        self.assertTrue(args.verbose)
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                build_parser().parse_args(["simulate"])
        self.assertEqual(CLASSIFICATION_EXIT["mixed"], 12)

    def test_02_selftest(self):
        self.assertTrue(all(selftest_checks().values()))
        self.assertEqual(_run(["selftest"]), 0)

    def test_03_classify_weak_potential(self):
        out = os.path.join(TEST_CLI_DIR, "classify")
        code = _run(["classify", "--config", _write("weak.yaml", WEAK_CONFIG), "--out", out,
                     "--serial", "--html"])
        self.assertEqual(code, 0)
        manifest = load_manifest(os.path.join(out, "manifest.yaml"))
        self.assertEqual(manifest['command'], "classify")
        self.assertEqual(manifest['classification'], "regular")
        self.assertEqual(manifest['config']['grid']['n_per_axis'], 10)
        self.assertEqual(load_report(os.path.join(out, "threshold_report.md"))['rank_S1'], 0)
        self.assertFalse(os.path.exists(os.path.join(out, "snapshots", "basis_S1.ddsnap")))
        self.assertTrue(os.path.exists(os.path.join(out, "classify.html")))

    def test_04_invalid_config(self):
        bad = _write("bad.yaml", "grid:\n  n_per_axis: 15\n")
        out = os.path.join(TEST_CLI_DIR, "bad")
        self.assertEqual(_run(["classify", "--config", bad, "--out", out]), 2)
        missing = os.path.join(TEST_CLI_DIR, "missing.yaml")
        self.assertEqual(_run(["evolve", "--config", missing, "--out", out]), 2)

    def test_05_free_evolution(self):
        out = os.path.join(TEST_CLI_DIR, "evolve")
        code = _run(["evolve", "--config", _write("free.yaml", FREE_CONFIG), "--out", out,
                     "--serial"])
        self.assertEqual(code, 0)
        rows = load_decay_csv(os.path.join(out, "decay.csv"))
        self.assertEqual(len(rows), 2 * 9)
        self.assertEqual({r['provenance'] for r in rows}, {"free"})
        self.assertTrue(all(r['norm'] > 0 for r in rows))
        self.assertTrue(os.path.exists(os.path.join(out, "fits.csv")))
        self.assertTrue(os.path.exists(os.path.join(out, "decay_free_gamma0.5.gp")))
        self.assertTrue(os.path.isdir(os.path.join(out, "snapshots")))
        self.assertEqual(load_manifest(os.path.join(out, "manifest.yaml"))['command'], "evolve")

    @unittest.skipUnless(ACCEPTANCE, "set DIRACDECAY_ACCEPTANCE=1 for the long runs")
    def test_06_free_check(self):
        out = os.path.join(TEST_CLI_DIR, "free_check")
        self.assertEqual(_run(["free-check", "--out", out, "--serial"]), 0)
        self.assertTrue(os.path.exists(os.path.join(out, "free-check.md")))

    def test_07_tune_writes_kernel_projector(self):
        out = os.path.join(TEST_CLI_DIR, "tune")
        code = _run(["tune", "--config", _write("well.yaml", WELL_CONFIG), "--out", out,
                     "--serial"])
        self.assertEqual(code, 0)
        rank = load_report(os.path.join(out, "threshold_report.md"))['rank_S1']
        self.assertGreaterEqual(rank, 1)
        snapshot = load_operator_snapshot(os.path.join(out, "snapshots", "basis_S1.ddsnap"))
        self.assertEqual(snapshot['tag'], "S1")
        self.assertEqual(snapshot['N'], 100)
        P = BlockOperator.from_kernel_blocks(build_grid(10, 4.0), snapshot['blocks']).matrix
        np.testing.assert_allclose(P @ P, P, atol=1e-10)
        np.testing.assert_allclose(P, P.conj().T, atol=1e-10)
        self.assertAlmostEqual(np.trace(P).real, rank, places=8)
        self.assertTrue(os.path.exists(os.path.join(out, "snapshots", "basis_S2.ddsnap")))

    def test_08_ft_verdict_window(self):
        times = default_times(*FT_VERDICT_WINDOW)
        self.assertEqual(times[0], 10.0)
        self.assertLessEqual(times[-1], 1000.0)
        self.assertGreater(times[-1], 1000.0 / np.sqrt(2.0))

    @unittest.skipUnless(ACCEPTANCE, "set DIRACDECAY_ACCEPTANCE=1 for the long runs")
    def test_09_resonant_evolution_writes_finite_rank_terms(self):
        tuned = os.path.join(TEST_CLI_DIR, "tune_resonance")
        self.assertEqual(_run(["tune", "--config", _write("res.yaml", RESONANCE_CONFIG),
                               "--out", tuned, "--serial"]), 0)
        s_star = load_manifest(os.path.join(tuned, "manifest.yaml"))['s_star']
        self.assertTrue(os.path.exists(os.path.join(tuned, "snapshots", "basis_Q.ddsnap")))
        out = os.path.join(TEST_CLI_DIR, "evolve_resonance")
        config = _write("res_evolve.yaml",
                        RESONANCE_CONFIG.replace("coupling: 1.0", f"coupling: {s_star!r}"))
        self.assertEqual(_run(["evolve", "--config", config, "--out", out, "--serial"]), 0)
        snapshots = sorted(f for f in os.listdir(os.path.join(out, "snapshots"))
                           if f.startswith("finite_rank_"))
        self.assertEqual(len(snapshots), len(default_times(8.0, 64.0)))
        term = load_pair_snapshot(os.path.join(out, "snapshots", snapshots[0]))
        self.assertEqual(term['tag'], "finite_rank")
        self.assertEqual(term['t'], 8.0)
        self.assertGreater(np.max(np.abs(term['blocks'])), 0.0)
        with open(os.path.join(out, "evolve.md"), encoding='utf-8') as f:
            self.assertIn("t ∈ [10, 1000]", f.read())


if __name__ == '__main__':
    unittest.main()
