import unittest
from fractions import Fraction

from dynamics_errors import IndeterminatePointError, NotBoundaryPointError
from measure_service import (
    atoms_as_dict,
    balanced_defect,
    boundary_measure,
    hole_orbit_atoms,
    mass_at,
    mass_via_depths,
    weak_distance,
)
from boundary_families import F_family
from polyhom import HomPoly, ProjPoint
from ratbar import degenerate_polynomial, from_map, iterate, normalize

ZERO = ProjPoint.affine(0)
INF = ProjPoint.infinity()


def hp(*coeffs):
    return HomPoly.from_coeffs(list(coeffs))


def h_map():
    """(zw : z^2): hole at 0, phi = 1/z"""
    return normalize(hp(0, 1, 0), hp(1, 0, 0))


class MassAtTest(unittest.TestCase):
    """Exact atom masses from the forward orbit"""

    def test_periodic_orbit_is_exact(self):
        f = h_map()
        at_zero = mass_at(f, ZERO)
        at_inf = mass_at(f, INF)
        self.assertTrue(at_zero.exact)
        self.assertEqual(at_zero.value, Fraction(2, 3))
        self.assertEqual(at_inf.value, Fraction(1, 3))
        self.assertEqual(at_zero.error_bound, 0)

    def test_point_off_the_hole_orbits(self):
        self.assertEqual(mass_at(h_map(), ProjPoint.affine(5)).value, 0)

    def test_wandering_orbit_carries_a_bound(self):
        """(2z(z-w) : w(z-w)) has phi = 2z, so the orbit of 1 never closes up"""
        f = normalize(hp(2, -2, 0), hp(0, 1, -1))
        est = mass_at(f, ProjPoint.affine(1), depth_n=5)
        self.assertFalse(est.exact)
        self.assertEqual(est.value, Fraction(1, 2))
        self.assertEqual(est.error_bound, Fraction(1, 64))

    def test_constant_phi(self):
        """(z^2 : 0) is all mass at its hole"""
        f = normalize(hp(1, 0, 0), HomPoly.zero_poly(2))
        mu = boundary_measure(f)
        self.assertEqual(mu.atoms, ((ZERO, Fraction(1)),))
        self.assertEqual(mu.tail_bound, 0)

    def test_hole_free_map_has_no_mass(self):
        """z^2: 0 and infinity are superattracting fixed points without holes"""
        z_squared = from_map(hp(1, 0, 0), hp(0, 0, 1))
        for pt in (ZERO, INF, ProjPoint.affine(1)):
            est = mass_at(z_squared, pt)
            self.assertEqual(est.value, 0)
            self.assertTrue(est.exact)

    def test_indeterminate_point(self):
        f = normalize(hp(0, 1, 0), HomPoly.zero_poly(2))
        with self.assertRaises(IndeterminatePointError):
            mass_at(f, ZERO)


class BoundaryMeasureTest(unittest.TestCase):
    """Truncated mu_f"""

    def test_partial_sums_and_tail(self):
        mu = boundary_measure(h_map(), depth_n=10)
        self.assertTrue(mu.is_normalized())
        self.assertEqual(mu.tail_bound, Fraction(1, 2 ** 11))
        self.assertLessEqual(mu.mass_of(ZERO), Fraction(2, 3))
        self.assertGreater(mu.mass_of(ZERO) + mu.tail_bound, Fraction(2, 3))
        pt, _ = mu.max_atom()
        self.assertEqual(pt, ZERO)

    def test_interior_point_is_rejected(self):
        with self.assertRaises(NotBoundaryPointError):
            boundary_measure(normalize(hp(1, 0, 0), hp(0, 0, 1)))

    def test_atoms_as_dict(self):
        mu = boundary_measure(normalize(hp(1, 0, 0), HomPoly.zero_poly(2)))
        self.assertEqual(atoms_as_dict(mu), {str(ZERO): Fraction(1)})

    def test_weak_distance_to_itself(self):
        mu = boundary_measure(h_map(), depth_n=8)
        self.assertEqual(weak_distance(mu, mu), 0.0)

    def test_weak_distance_between_point_masses(self):
        a = boundary_measure(normalize(hp(1, 0, 0), HomPoly.zero_poly(2)))
        b = boundary_measure(normalize(HomPoly.zero_poly(2), hp(0, 0, 1)))
        self.assertEqual(b.mass_of(INF), 1)
        self.assertGreater(weak_distance(a, b), 0.9)


class DepthFormulaTest(unittest.TestCase):
    """mu_f({z}) as a limit of normalized depths"""

    def test_depth_ratio(self):
        f = h_map()
        self.assertEqual(mass_via_depths(f, ZERO, 3), Fraction(5, 8))
        self.assertAlmostEqual(float(mass_via_depths(f, ZERO, 20)), 2 / 3, places=5)

    def test_balance_relation(self):
        f = h_map()
        for z in (ZERO, INF, ProjPoint.affine(3)):
            self.assertEqual(balanced_defect(f, z).value, 0)

    def test_hole_orbit_atoms(self):
        atoms = dict((str(pt), est.value) for pt, est in hole_orbit_atoms(h_map()))
        self.assertEqual(atoms, {str(ZERO): Fraction(2, 3), str(INF): Fraction(1, 3)})


def fixture_atoms():
    """(map, point) pairs covering hole orbits of the standard boundary points"""
    h = h_map()
    p = degenerate_polynomial(hp(1, 0, 1), 1)
    F = F_family(2, 1, 2)
    return [(h, ZERO), (h, INF), (p, INF), (F, ZERO), (F, INF)]


class MeasureInvariantsTest(unittest.TestCase):
    """Relations every atom mass satisfies"""

    def test_iterates_share_the_measure(self):
        for f, z in fixture_atoms():
            for n in (2, 3):
                with self.subTest(degree=f.degree, point=str(z), n=n):
                    self.assertEqual(mass_at(iterate(f, n), z).value, mass_at(f, z).value)

    def test_depth_ratios_approach_the_mass(self):
        for f, z in fixture_atoms():
            exact = mass_at(f, z)
            self.assertTrue(exact.exact)
            for n in (1, 4, 8):
                with self.subTest(degree=f.degree, point=str(z), n=n):
                    gap = exact.value - mass_via_depths(f, z, n)
                    self.assertGreaterEqual(gap, 0)
                    self.assertLessEqual(gap, Fraction(f.phi_degree, f.degree) ** n)

    def test_hole_free_depths(self):
        z_squared = from_map(hp(1, 0, 0), hp(0, 0, 1))
        self.assertEqual(mass_via_depths(z_squared, ZERO, 5), 0)
