import unittest
from fractions import Fraction

import numpy as np

from dynamics_errors import BackendMismatchError, InexactDivisionError, InvalidInputError, ZeroPolynomialError
from polyhom import (
    HomPoly,
    ProjPoint,
    RootList,
    chordal_distance,
    dehomogenize,
    divide_exact,
    evaluate,
    exact_sqrt,
    from_roots,
    gcd,
    mul,
    projectively_equal,
    roots,
    sphere_vector,
    substitute,
)
from scalar_field import EXACT, FLOAT, GaussianRational as G


def poly(*coeffs, backend=None):
    return HomPoly.from_coeffs(list(coeffs), backend)


class ProjPointTest(unittest.TestCase):
    """Canonical forms of points of P^1"""

    def test_canonical_form(self):
        """(2:4) becomes (1/2:1) and (3:0) becomes infinity"""
        self.assertEqual(ProjPoint.of(G(2), G(4)), ProjPoint.affine(Fraction(1, 2)))
        self.assertTrue(ProjPoint.of(G(3), G(0)).is_infinity)
        self.assertIsNone(ProjPoint.infinity().value)
        self.assertEqual(ProjPoint.affine(5).value, G(5))

    def test_origin_is_not_a_point(self):
        with self.assertRaises(InvalidInputError):
            ProjPoint.of(G(0), G(0))

    def test_sphere_vector(self):
        """0 at the south pole, infinity at the north pole, 1 on the equator"""
        np.testing.assert_allclose(sphere_vector(ProjPoint.affine(0)), [0, 0, -1])
        np.testing.assert_allclose(sphere_vector(ProjPoint.infinity()), [0, 0, 1])
        np.testing.assert_allclose(sphere_vector(ProjPoint.affine(1)), [1, 0, 0], atol=1e-15)

    def test_chordal_distance(self):
        self.assertAlmostEqual(chordal_distance(ProjPoint.affine(0), ProjPoint.infinity()), 1.0)
        self.assertAlmostEqual(chordal_distance(ProjPoint.affine(2), ProjPoint.affine(2)), 0.0)


class RootsTest(unittest.TestCase):
    """Projective roots with multiplicity"""

    def test_exact_roots_with_infinity(self):
        """z^2 w (z - w)^2: roots 0 and 1 twice, infinity once"""
        z = poly(1, 0)
        w = poly(0, 1)
        p = mul(mul(mul(z, z), w), mul(z - w, z - w))
        rl = roots(p)
        self.assertEqual(rl.total, 5)
        self.assertEqual(rl.multiplicity_of(ProjPoint.affine(0)), 2)
        self.assertEqual(rl.multiplicity_of(ProjPoint.affine(1)), 2)
        self.assertEqual(rl.multiplicity_of(ProjPoint.infinity()), 1)
        self.assertTrue(all(pt.is_exact for pt in rl.points()))

    def test_gaussian_roots_stay_exact(self):
        """z^2 + w^2 has the roots i and -i in Q(i)"""
        rl = roots(poly(1, 0, 1))
        self.assertEqual(rl.multiplicity_of(ProjPoint.affine(G(0, 1))), 1)
        self.assertEqual(rl.multiplicity_of(ProjPoint.affine(G(0, -1))), 1)

    def test_irrational_roots_are_flagged(self):
        """z^2 - 2 w^2 has roots outside Q(i), returned in floating form"""
        rl = roots(poly(1, 0, -2))
        self.assertEqual(rl.total, 2)
        self.assertTrue(all(not pt.is_exact for pt in rl.points()))
        self.assertAlmostEqual(sorted(abs(complex(p.z)) for p in rl.points())[0], 2 ** 0.5)

    def test_float_clusters(self):
        """A floating double root is reported once with multiplicity 2"""
        p = poly(1 + 0j, -2, 1)
        rl = roots(p)
        self.assertEqual(len(rl), 1)
        self.assertEqual(rl.entries[0][1], 2)
        self.assertAlmostEqual(complex(rl.entries[0][0].z), 1.0, places=6)

    def test_zero_polynomial(self):
        with self.assertRaises(ZeroPolynomialError):
            roots(HomPoly.zero_poly(3))

    def test_from_roots_inverts_roots(self):
        p = poly(0, 2, -2, 0)  # 2 z w (z - w)
        q = from_roots(roots(p), 1, EXACT)
        self.assertTrue(projectively_equal(p, q))


class GcdDivisionTest(unittest.TestCase):
    """gcd and exact division"""

    def test_gcd_exact(self):
        """gcd(z w, z^2) = z"""
        self.assertEqual(gcd(poly(0, 1, 0), poly(1, 0, 0)), poly(1, 0))

    def test_gcd_keeps_root_at_infinity(self):
        """gcd(w^2, z w) = w"""
        self.assertEqual(gcd(poly(0, 0, 1), poly(0, 1, 0)), poly(0, 1))

    def test_divide_exact(self):
        """(z^2 - w^2) / (z - w) = z + w"""
        self.assertEqual(divide_exact(poly(1, 0, -1), poly(1, -1)), poly(1, 1))

    def test_divide_with_remainder(self):
        with self.assertRaises(InexactDivisionError):
            divide_exact(poly(1, 0, 1), poly(1, -1))

    def test_float_gcd(self):
        """gcd of floating (z - 1)(z - 2) and (z - 1)(z + 3) is z - 1"""
        a = poly(1 + 0j, -3, 2)
        b = poly(1 + 0j, 2, -3)
        g = gcd(a, b)
        self.assertEqual(g.degree, 1)
        self.assertAlmostEqual(complex(g.coeffs[1]), -1.0, places=6)

    def test_backends_do_not_mix(self):
        with self.assertRaises(BackendMismatchError):
            gcd(poly(1, 0), poly(1 + 0j, 0))


class SubstituteTest(unittest.TestCase):
    """p(A, B)"""

    def test_substitute_square(self):
        """z^2 evaluated at (z + w, w) is (z + w)^2"""
        p = poly(1, 0, 0)
        out = substitute(p, poly(1, 1), poly(0, 1))
        self.assertEqual(out, poly(1, 2, 1))

    def test_exact_sqrt(self):
        self.assertEqual(exact_sqrt(G(-4)), G(0, 2))
        self.assertEqual(exact_sqrt(G(0, 2)), G(1, 1))
        self.assertIsNone(exact_sqrt(G(2)))


class RootListTest(unittest.TestCase):
    def test_combine_merges_duplicates(self):
        rl = RootList.combine([(ProjPoint.affine(1), 2), (ProjPoint.affine(1), 3), (ProjPoint.infinity(), 1)])
        self.assertEqual(rl.multiplicity_of(ProjPoint.affine(1)), 5)
        self.assertEqual(rl.total, 6)
        self.assertEqual(rl.scaled(2).total, 12)

    def test_backend_tags(self):
        self.assertEqual(poly(1, 2).backend, EXACT)
        self.assertEqual(poly(1.5, 2).backend, FLOAT)


class EvaluateTest(unittest.TestCase):
    """Values at affine representatives"""

    def test_values(self):
        self.assertEqual(evaluate(HomPoly.monomial(2, 1), ProjPoint.affine(2)), G(4))
        self.assertEqual(evaluate(poly(0, 1, 0), ProjPoint.infinity()), G(0))
        self.assertEqual(evaluate(poly(1, 0, 0, -1), ProjPoint.affine(1)), G(0))

    def test_backend_mismatch(self):
        with self.assertRaises(BackendMismatchError):
            evaluate(poly(1, 0), ProjPoint.affine(1).to_float())

    def test_dehomogenize(self):
        self.assertEqual(dehomogenize(poly(0, 1, -1)), [G(1), G(-1)])
