import random
import unittest
from fractions import Fraction

import pytest

from dynamics_config import override_settings
from dynamics_errors import (
    DegreeBudgetError,
    DegreeMismatchError,
    IndeterminatePairError,
    IndeterminatePointError,
    InvalidInputError,
    ZeroPolynomialError,
)
from polyhom import HomPoly, ProjPoint, RootList, from_roots, mul
from ratbar import (
    Mobius,
    compose,
    conjugate,
    degenerate_polynomial,
    degenerate_polynomial_depth,
    depth_of_iterate,
    direct_iterate,
    holes_of,
    in_indeterminacy,
    iterate,
    local_degree,
    local_degree_record,
    normalize,
    pair_distance,
    projectively_same,
)
from scalar_field import EXACT


def hp(*coeffs):
    return HomPoly.from_coeffs(list(coeffs))


def h_map():
    """h = (zw : z^2)"""
    return normalize(hp(0, 1, 0), hp(1, 0, 0))


class NormalizeTest(unittest.TestCase):
    """Splitting (P:Q) into holes and phi"""

    def test_h_example(self):
        """(zw : z^2) has one hole at 0 and phi = 1/z"""
        f = h_map()
        self.assertEqual(f.degree, 2)
        self.assertEqual(f.phi_degree, 1)
        self.assertEqual(holes_of(f), [(ProjPoint.affine(0), 1)])
        self.assertEqual(f.phi.apply(ProjPoint.affine(2)), ProjPoint.affine(Fraction(1, 2)))
        self.assertTrue(f.is_boundary)

    def test_pair_is_recovered(self):
        """H * phi equals the input up to scale"""
        P = hp(1, -1, 0, 0)  # z^2 (z - w)
        Q = hp(0, 1, -1, 0)  # z w (z - w)
        f = normalize(P, Q)
        self.assertEqual(mul(f.P, Q), mul(f.Q, P))
        self.assertEqual(f.hole_depth(ProjPoint.affine(0)), 1)
        self.assertEqual(f.hole_depth(ProjPoint.affine(1)), 1)
        self.assertEqual(f.phi_degree, 1)

    def test_rejects_bad_pairs(self):
        with self.assertRaises(ZeroPolynomialError):
            normalize(HomPoly.zero_poly(2), HomPoly.zero_poly(2))
        with self.assertRaises(DegreeMismatchError):
            normalize(hp(1, 0), hp(1, 0, 0))

    def test_interior_point(self):
        f = normalize(hp(1, 0, 1), hp(0, 1, 0))
        self.assertFalse(f.is_boundary)
        self.assertEqual(f.phi_degree, 2)

    def test_indeterminacy_locus(self):
        """A constant phi is indeterminate exactly when its value is a hole"""
        self.assertTrue(in_indeterminacy(normalize(hp(0, 1, 0), HomPoly.zero_poly(2))))
        self.assertTrue(in_indeterminacy(normalize(hp(0, 0, 1), HomPoly.zero_poly(2))))
        # (z^2 : 0): holes at 0 only, phi is constant at infinity
        self.assertFalse(in_indeterminacy(normalize(hp(1, 0, 0), HomPoly.zero_poly(2))))
        self.assertFalse(in_indeterminacy(normalize(hp(0, 0, 1), hp(0, 1, 0))))


class IterateTest(unittest.TestCase):
    """The product formula for f^n"""

    def test_h_squared(self):
        """h^2 = (z^3 w : z^2 w^2)"""
        h2 = iterate(h_map(), 2)
        expected = normalize(hp(0, 1, 0, 0, 0), hp(0, 0, 1, 0, 0))
        self.assertTrue(projectively_same(h2, expected))
        self.assertEqual(h2.hole_depth(ProjPoint.affine(0)), 2)
        self.assertEqual(h2.hole_depth(ProjPoint.infinity()), 1)

    def test_depth_formula(self):
        """d_0(f^n) = (5^n - 3^n)/2 for f = (z^4 w : z w^4)"""
        f = normalize(hp(0, 1, 0, 0, 0, 0), hp(0, 0, 0, 0, 1, 0))
        for n in range(1, 7):
            self.assertEqual(depth_of_iterate(f, ProjPoint.affine(0), n), (5 ** n - 3 ** n) // 2)
        for n in range(1, 4):
            self.assertEqual(iterate(f, n).hole_depth(ProjPoint.affine(0)), (5 ** n - 3 ** n) // 2)

    def test_iterate_needs_positive_n(self):
        with self.assertRaises(InvalidInputError):
            iterate(h_map(), 0)

    def test_indeterminate_point(self):
        f = normalize(hp(0, 1, 0), HomPoly.zero_poly(2))
        with self.assertRaises(IndeterminatePointError):
            iterate(f, 2)
        with self.assertRaises(IndeterminatePointError):
            depth_of_iterate(f, ProjPoint.affine(0), 2)

    def test_degree_budget(self):
        f = normalize(hp(1, 0, 1), hp(0, 1, 0))
        with override_settings(degree_budget=16):
            with self.assertRaises(DegreeBudgetError):
                iterate(f, 5)

    def test_compose_indeterminate_pair(self):
        """phi_g constant at a hole of f"""
        g = normalize(HomPoly.zero_poly(2), hp(0, 1, 0))  # phi_g = 0, a hole of h
        with self.assertRaises(IndeterminatePairError):
            compose(h_map(), g)

    def test_compose_matches_iterate(self):
        h = h_map()
        self.assertTrue(projectively_same(compose(h, h), iterate(h, 2)))

    def test_conjugation_moves_holes(self):
        """Conjugating h by z -> z + 1 moves the hole to 1"""
        f = conjugate(h_map(), Mobius.translation(1))
        self.assertEqual(f.hole_depth(ProjPoint.affine(1)), 1)
        self.assertEqual(f.hole_depth(ProjPoint.affine(0)), 0)
        self.assertEqual(f.phi.apply(ProjPoint.affine(2)), ProjPoint.affine(2))

    def test_conjugation_by_dilation(self):
        """z -> 2z turns phi = 1/z into 4/z and keeps the hole at 0"""
        f = conjugate(h_map(), Mobius.dilation(2))
        self.assertEqual(f.hole_depth(ProjPoint.affine(0)), 1)
        self.assertEqual(f.phi.apply(ProjPoint.affine(1)), ProjPoint.affine(4))

    def test_float_copy_is_close(self):
        f = iterate(h_map(), 2)
        self.assertLess(pair_distance(f, f.to_float()), 1e-12)


class LocalDegreeTest(unittest.TestCase):
    """m_z(phi^n) along forward orbits"""

    def test_z_squared(self):
        phi = normalize(hp(1, 0, 0), hp(0, 0, 1)).phi
        self.assertEqual(local_degree(phi, ProjPoint.affine(0), 3), 8)
        self.assertEqual(local_degree(phi, ProjPoint.affine(1), 3), 1)
        self.assertEqual(local_degree(phi, ProjPoint.affine(5), 0), 1)
        record = local_degree_record(phi, ProjPoint.infinity(), 2)
        self.assertEqual(record.value, 4)

    def test_constant_map(self):
        phi = normalize(hp(1, 0, 0), HomPoly.zero_poly(2)).phi
        self.assertEqual(local_degree(phi, ProjPoint.affine(1), 2), 0)


class IterateOracleTest(unittest.TestCase):
    """Product-formula iterates agree with naive substitution"""

    def _random_point(self, rng: random.Random):
        d = rng.randint(1, 3)
        k = rng.randint(0, d - 1)
        e = d - k
        pts = [
            rng.choice([ProjPoint.infinity(), ProjPoint.affine(rng.randint(-3, 3))]) for _ in range(k)
        ]
        H = from_roots(RootList.combine((pt, 1) for pt in pts), 1, EXACT) if k else HomPoly.constant(1)
        p = HomPoly.from_coeffs([rng.randint(-3, 3) for _ in range(e + 1)])
        q = HomPoly.from_coeffs([rng.randint(-3, 3) for _ in range(e + 1)])
        if p.is_zero or q.is_zero:
            return None
        f = normalize(mul(H, p), mul(H, q))
        if f.in_indeterminacy():
            return None
        return f

    @pytest.mark.slow
    def test_random_maps(self):
        rng = random.Random(20240611)
        checked = 0
        while checked < 100:
            f = self._random_point(rng)
            if f is None:
                continue
            n = rng.randint(1, 3)
            self.assertTrue(projectively_same(iterate(f, n), direct_iterate(f, n)), f"{f.P} : {f.Q}, n={n}")
            checked += 1


class DegeneratePolynomialTest(unittest.TestCase):
    """p = (w^k Q : w^d)"""

    def test_depth_at_infinity(self):
        p = degenerate_polynomial(hp(1, 0, 1), 1)
        self.assertEqual(p.degree, 3)
        self.assertEqual(p.hole_depth(ProjPoint.infinity()), 1)
        for n in range(1, 4):
            self.assertEqual(
                iterate(p, n).hole_depth(ProjPoint.infinity()), degenerate_polynomial_depth(3, 1, n)
            )

    def test_closed_form(self):
        self.assertEqual(degenerate_polynomial_depth(3, 1, 2), 5)
        self.assertEqual(degenerate_polynomial_depth(2, 1, 3), 7)

    def test_rejects_q_vanishing_at_infinity(self):
        with self.assertRaises(InvalidInputError):
            degenerate_polynomial(hp(0, 1, 1), 1)
