import unittest
from fractions import Fraction

from dynamics_errors import DegreeMismatchError, ParseError
from poly_parser import parse_homogeneous, parse_path
from polyhom import HomPoly
from scalar_field import EXACT, FLOAT, GaussianRational as G


class ParseHomogeneousTest(unittest.TestCase):
    """Shorthand input for homogeneous polynomials"""

    def test_implicit_products(self):
        """"zw" and "3zw - w^2" read as products"""
        self.assertEqual(parse_homogeneous("zw"), HomPoly.from_coeffs([0, 1, 0]))
        self.assertEqual(parse_homogeneous("3zw - w^2"), HomPoly.from_coeffs([0, 3, -1]))

    def test_degree_from_input(self):
        self.assertEqual(parse_homogeneous("z^3 - w^3").degree, 3)

    def test_affine_input_is_homogenized(self):
        """z^2 + 3 with degree 2 is z^2 + 3 w^2"""
        self.assertEqual(parse_homogeneous("z^2 + 3", 2), HomPoly.from_coeffs([1, 0, 3]))

    def test_affine_input_below_degree(self):
        """z - 1 as a degree-3 polynomial has a double root at infinity"""
        p = parse_homogeneous("z - 1", 3)
        self.assertEqual(p, HomPoly.from_coeffs([0, 0, 1, -1]))

    def test_gaussian_coefficients(self):
        p = parse_homogeneous("z + 1/2 i", 1)
        self.assertEqual(p.coeffs, (G(1), G(0, Fraction(1, 2))))
        self.assertEqual(p.backend, EXACT)

    def test_decimal_makes_float(self):
        p = parse_homogeneous("0.5 z^2 + w^2")
        self.assertEqual(p.backend, FLOAT)
        self.assertAlmostEqual(complex(p.coeffs[0]), 0.5)

    def test_mixed_degree_with_w_is_rejected(self):
        """Short terms in w cannot be homogenized unambiguously"""
        with self.assertRaises(DegreeMismatchError):
            parse_homogeneous("z^2 + w", 2)
        with self.assertRaises(DegreeMismatchError):
            parse_homogeneous("w", 2)

    def test_degree_too_high(self):
        with self.assertRaises(DegreeMismatchError):
            parse_homogeneous("z^3", 2)

    def test_syntax_errors(self):
        with self.assertRaises(ParseError):
            parse_homogeneous("z^^2")
        with self.assertRaises(ParseError):
            parse_homogeneous("x + z")
        with self.assertRaises(ParseError):
            parse_homogeneous("1/z", 1)
        with self.assertRaises(ParseError):
            parse_homogeneous("   ")

    def test_field_is_reported(self):
        with self.assertRaises(ParseError) as ctx:
            parse_homogeneous("q", 2, field="P")
        self.assertEqual(ctx.exception.field, "P")


class ParsePathTest(unittest.TestCase):
    """Polynomials in z, w, t split by powers of t"""

    def test_ascending_powers(self):
        terms = parse_path("z^2 + t*z*w - t^2 w^2", 2)
        self.assertEqual(len(terms), 3)
        self.assertEqual(terms[0], HomPoly.from_coeffs([1, 0, 0]))
        self.assertEqual(terms[1], HomPoly.from_coeffs([0, 1, 0]))
        self.assertEqual(terms[2], HomPoly.from_coeffs([0, 0, -1]))

    def test_missing_power_is_zero(self):
        terms = parse_path("t^2 z^2 + w^2", 2)
        self.assertTrue(terms[1].is_zero)
