import unittest
import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from DiracDecay.errors import DomainError, SingularPointError, ValidationError
from DiracDecay.specfun import hankel1
from DiracDecay.freeops import (ALPHA1, ALPHA2, CutoffSpec, alpha_dot, block_norm,
                                dirac_algebra_check, dirac_radial, dirac_radial_pair,
                                dirac_resolvent, expansion_kernel, expansion_radial, mu0,
                                mu0_derivative_radial, mu0_radial, radial_block,
                                schrodinger_resolvent, separation, smooth_cutoff,
                                smooth_cutoff_derivative)


class TestFreeOperators(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.cutoff = CutoffSpec(0.1)
        cls.x = np.array([0.3, -1.2])
        cls.y = np.array([2.1, 0.4])

    def test_01_dirac_algebra(self):
        self.assertTrue(dirac_algebra_check())
        e = np.array([0.6, 0.8])
        np.testing.assert_allclose(alpha_dot(e) @ alpha_dot(e), np.eye(2), atol=1e-15)
        np.testing.assert_array_equal(alpha_dot([1.0, 0.0]), ALPHA1)
        np.testing.assert_array_equal(alpha_dot([0.0, 1.0]), ALPHA2)

    def test_02_cutoff(self):
        c = self.cutoff
        self.assertEqual(smooth_cutoff(0.05, c), 1.0)
        self.assertEqual(smooth_cutoff(-0.1, c), 1.0)
        self.assertEqual(smooth_cutoff(0.2, c), 0.0)
        self.assertEqual(smooth_cutoff(0.35, c), 0.0)
        for u in (0.1, 0.37, 0.5, 0.8):
            total = smooth_cutoff(0.1 + u * 0.1, c) + smooth_cutoff(0.2 - u * 0.1, c)
            self.assertAlmostEqual(total, 1.0, places=14)
        self.assertEqual(smooth_cutoff(0.137, c), smooth_cutoff(-0.137, c))
        with self.assertRaises(ValidationError):
            CutoffSpec(0.0)

    def test_03_cutoff_derivative(self):
        c, h = self.cutoff, 1e-7
        for lam in (0.12, 0.15, -0.17):
            fd = (smooth_cutoff(lam + h, c) - smooth_cutoff(lam - h, c)) / (2 * h)
            self.assertAlmostEqual(smooth_cutoff_derivative(lam, c), fd, delta=1e-6)
        self.assertEqual(smooth_cutoff_derivative(0.05, c), 0.0)

    def test_04_resolvent_jump_is_mu0(self):
        r = np.array([0.5, 3.0, 17.0])
        for lam in (0.4, -0.4):
            ap, bp = dirac_radial('+', lam, r)
            am, bm = dirac_radial('-', lam, r)
            a0, b0 = mu0_radial(lam, r, None)
            np.testing.assert_allclose(ap - am, a0, rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(bp - bm, b0, rtol=1e-12, atol=1e-15)

    def test_05_pair_matches_single_sign(self):
        r = np.array([0.2, 1.0, 9.0])
        for lam in (0.3, -1.1):
            pair = dirac_radial_pair(lam, r)
            for s in (1, -1):
                a, b = dirac_radial(s, lam, r)
                np.testing.assert_allclose(pair[s][0], a, rtol=1e-14)
                np.testing.assert_allclose(pair[s][1], b, rtol=1e-14)
        with self.assertRaises(DomainError):
            dirac_radial_pair(0.0, r)
        with self.assertRaises(SingularPointError):
            dirac_radial_pair(0.3, np.array([0.0, 1.0]))

    def test_06_outgoing_incoming_adjoint(self):
        lam = 0.7
        plus = dirac_resolvent('+', lam, self.y, self.x)
        minus = dirac_resolvent('-', lam, self.x, self.y)
        np.testing.assert_allclose(plus.conj().T, minus, rtol=1e-13)

    def test_07_mu0_is_anti_hermitian(self):
        for lam in (0.13, -0.05):
            d_xy = mu0(lam, self.x, self.y, self.cutoff)
            d_yx = mu0(lam, self.y, self.x, self.cutoff)
            np.testing.assert_allclose(d_xy, -d_yx.conj().T, atol=1e-15)

    def test_08_mu0_derivative(self):
        r, h = np.array([0.0, 2.0, 11.0]), 1e-7
        for lam in (0.08, 0.14, -0.16):
            a, b = mu0_derivative_radial(lam, r, self.cutoff)
            ap, bp = mu0_radial(lam + h, r, self.cutoff)
            am, bm = mu0_radial(lam - h, r, self.cutoff)
            np.testing.assert_allclose(a, (ap - am) / (2 * h), atol=1e-7)
            np.testing.assert_allclose(b, (bp - bm) / (2 * h), atol=1e-7)

    def test_09_schrodinger_resolvent(self):
        r, _ = separation(self.x, self.y)
        value = schrodinger_resolvent('+', 2.0, self.x, self.y)
        self.assertAlmostEqual(value, 0.25j * hankel1(0, 2.0 * float(r)), places=14)
        self.assertAlmostEqual(schrodinger_resolvent('-', 2.0, self.x, self.y), np.conj(value),
                               places=14)
        with self.assertRaises(DomainError):
            schrodinger_resolvent('+', 0.0, self.x, self.y)
        with self.assertRaises(SingularPointError):
            schrodinger_resolvent('+', 1.0, self.x, self.x)

    def test_10_expansion_kernels(self):
        r = np.array([0.5, 2.0])
        a, b = expansion_radial("G00", r)
        np.testing.assert_allclose(b, 1j / (2 * np.pi * r))
        np.testing.assert_array_equal(a, 0)
        a, _ = expansion_radial("G10", r)
        np.testing.assert_allclose(a, -np.log(r) / (2 * np.pi))
        a, b = expansion_radial("G20", np.array([0.0]))
        self.assertEqual(b[0], 0)
        with self.assertRaises(SingularPointError):
            expansion_radial("G00", np.array([0.0]))
        with self.assertRaises(ValidationError):
            expansion_radial("G99", r)

    def test_11_block_norm(self):
        e = np.array([0.6, -0.8])
        for a, b in ((1.0, 0.5), (0.3j, -2.0), (1 + 1j, 0.2 - 0.7j)):
            block = radial_block(a, b, e)
            self.assertAlmostEqual(float(block_norm(a, b)), np.linalg.norm(block, 2), places=12)

    def test_12_expansion_kernel_blocks(self):
        x = np.array([[0.3, -1.2], [2.0, 0.5]])
        y = np.array([0.1, 0.4])
        np.testing.assert_allclose(expansion_kernel("G21", x, y), -2j * alpha_dot(x - y))
        np.testing.assert_allclose(expansion_kernel("G00", y, x), -expansion_kernel("G00", x, y))
        identity = np.broadcast_to(np.eye(2), (2, 2, 2))
        np.testing.assert_allclose(expansion_kernel("G11", x, y), identity)

    def test_13_mu0_bound_on_lattice(self):
        r = np.geomspace(1e-2, 1e3, 16)
        ratios = []
        for lam in np.concatenate([np.geomspace(1e-3, 0.19, 12), -np.geomspace(1e-3, 0.19, 12)]):
            a, b = mu0_radial(lam, r, self.cutoff)
            bound = abs(lam) * (1.0 + abs(lam) * r) ** -0.5
            ratios.append(np.asarray(block_norm(a, b)) / bound)
        ratios = np.concatenate(ratios)
        self.assertLess(np.max(ratios), 1.0)
        self.assertGreater(np.max(ratios), 0.25)

    def test_14_resolvent_bound_on_lattice(self):
        r = np.geomspace(1e-2, 1e2, 13)
        for s in (1, -1):
            ratios = []
            for lam in np.geomspace(1e-3, 1.0, 7):
                a, b = dirac_radial(s, lam, r)
                ratios.append(np.asarray(block_norm(a, b)) / (lam + 1.0 / r))
            ratios = np.concatenate(ratios)
            self.assertLess(np.max(ratios), 1.0)
            self.assertGreater(np.max(ratios), 0.05)


if __name__ == '__main__':
    unittest.main()
