import math
import unittest
from fractions import Fraction

import numpy as np
import pytest

from dynamics_config import override_settings
from dynamics_errors import ConstraintViolationError, InvalidInputError
from maxent_service import (
    boundary_limit_experiment,
    chi_closed_form,
    cross_ratio_witness,
    default_counterexample_poly,
    degree_d_counterexample,
    depth_for_tail,
    f_a_n_limit,
    j_invariant,
    preimage_cross_ratio,
    pushforward_empirical,
    sample_max_entropy,
    sylvester_condition,
    witnesses_differ,
    x2_limit,
)
from measure_service import weak_distance
from moduli_service import DiskFamily, basilica_disk, nf_family_for_tau2
from polyhom import HomPoly, ProjPoint
from ratbar import from_map, normalize


def hp(*coeffs):
    return HomPoly.from_coeffs(list(coeffs))


def lambda_two_path() -> DiskFamily:
    """(2z(z-w) + t w^2 : w(z-w) + t z^2), which tends to Lambda_2"""
    return DiskFamily.coeff_path([hp(2, -2, 0), hp(0, 0, 1)], [hp(0, 1, -1), hp(1, 0, 0)])


def majority(outcomes) -> bool:
    outcomes = list(outcomes)
    return sum(outcomes) * 2 > len(outcomes)


class SamplerTest(unittest.TestCase):
    """Backward random iteration"""

    def setUp(self):
        self.z_squared = from_map(hp(1, 0, 0), hp(0, 0, 1))
        self.basilica = from_map(hp(1, 0, -1), hp(0, 0, 1))

    def test_same_seed_same_samples(self):
        a = sample_max_entropy(self.basilica, n_samples=200, seed=5, burn_in=10, n_walks=4)
        b = sample_max_entropy(self.basilica, n_samples=200, seed=5, burn_in=10, n_walks=4)
        np.testing.assert_array_equal(a.zs, b.zs)
        np.testing.assert_array_equal(a.ws, b.ws)
        c = sample_max_entropy(self.basilica, n_samples=200, seed=6, burn_in=10, n_walks=4)
        self.assertFalse(np.array_equal(a.zs, c.zs))

    def test_workers_do_not_change_samples(self):
        serial = sample_max_entropy(self.basilica, n_samples=300, seed=1, burn_in=10, n_walks=3)
        with override_settings(workers=2):
            threaded = sample_max_entropy(self.basilica, n_samples=300, seed=1, burn_in=10, n_walks=3)
        np.testing.assert_array_equal(serial.zs, threaded.zs)

    def test_unit_circle(self):
        """mu for z^2 is Lebesgue measure on the unit circle"""
        emp = sample_max_entropy(self.z_squared, n_samples=500, seed=2)
        self.assertEqual(len(emp.zs), 500)
        self.assertEqual(emp.fraction_where(lambda x: np.abs(np.abs(x) - 1) < 1e-6), 1.0)

    def test_rejects_unsuitable_maps(self):
        with self.assertRaises(InvalidInputError):
            sample_max_entropy(normalize(hp(0, 1, 0), hp(1, 0, 0)), n_samples=10)
        with self.assertRaises(InvalidInputError):
            sample_max_entropy(from_map(hp(1, 0), hp(0, 1)), n_samples=10)
        with self.assertRaises(InvalidInputError):
            sample_max_entropy(self.z_squared, n_samples=0)

    def test_invariance_under_pushforward(self):
        emp = sample_max_entropy(self.basilica, n_samples=4000, seed=11)
        pushed = pushforward_empirical(self.basilica, emp)
        self.assertLessEqual(weak_distance(pushed, emp), 0.05)


class LimitHelpersTest(unittest.TestCase):
    def test_depth_for_tail(self):
        self.assertEqual(depth_for_tail(normalize(hp(0, 1, 0), hp(1, 0, 0))), 7)
        self.assertEqual(depth_for_tail(normalize(hp(1, 0, 0), HomPoly.zero_poly(2))), 0)

    def test_sylvester_condition(self):
        self.assertLess(sylvester_condition(from_map(hp(1, 0, -1), hp(0, 0, 1))), 100)
        self.assertGreater(sylvester_condition(normalize(hp(0, 1, 0), hp(1, 0, 0))), 1e12)

    def test_tau_infinity_has_no_limit(self):
        limit = x2_limit(nf_family_for_tau2(2, "inf"))
        self.assertTrue(limit.is_infinite)
        self.assertEqual(limit.to_dict()["limit"], "inf")

    def test_non_root_of_unity_boundary(self):
        limit = x2_limit(DiskFamily.boundary([3, 1]))
        self.assertTrue(limit.is_infinite)


class ExperimentTest(unittest.TestCase):
    """Weak-limit experiments along disks"""

    def test_short_run(self):
        report = boundary_limit_experiment(lambda_two_path(), [0.05, 0.1], n_samples=300, seed=3)
        self.assertEqual([r.t for r in report.rows], [0.1, 0.05])
        self.assertEqual(report.achieved_range, (0.1, 0.05))
        self.assertFalse(report.stopped_early)
        self.assertTrue(all(d is not None for d in report.distances))
        self.assertEqual(len(report.rows[0].to_csv_row()), 3)

    def test_needs_a_limit(self):
        with self.assertRaises(InvalidInputError):
            boundary_limit_experiment(DiskFamily.line(0, 1), [0.1])

    @pytest.mark.slow
    def test_converges_to_lambda_two(self):
        def final_distance(seed):
            report = boundary_limit_experiment(lambda_two_path(), [0.1, 0.01, 0.001], n_samples=4000, seed=seed)
            return report.distances[-1]

        self.assertTrue(majority(final_distance(seed) <= 0.1 for seed in (1, 2, 3)))

    @pytest.mark.slow
    def test_basilica_limit_is_barycentered(self):
        limit = x2_limit(basilica_disk())
        self.assertFalse(limit.is_infinite)
        self.assertTrue(limit.barycenter.centered)
        self.assertIn("q = 2", limit.reason)

    @pytest.mark.slow
    def test_tau_infinity_splits_the_mass(self):
        family = nf_family_for_tau2(2, "inf")
        grid = [0.1, 0.03, 0.01, 0.003, 0.001]

        def annulus(seed):
            return boundary_limit_experiment(family, grid, n_samples=3000, seed=seed, barycentered=True).annulus

        self.assertTrue(majority(annulus(seed) for seed in (1, 2, 3)))


class CounterexampleTest(unittest.TestCase):
    """Degree-d families whose iterates do not extend continuously"""

    def test_components(self):
        cx = degree_d_counterexample(2, 1, Fraction(1, 10))
        self.assertEqual(cx.g.degree, 2)
        self.assertTrue(cx.g_limit.in_indeterminacy())
        self.assertEqual(cx.f_a.degree, 4)
        self.assertIsNone(cx.h)
        big = degree_d_counterexample(5, 1, Fraction(1, 10))
        self.assertEqual(big.h.degree, 5)
        self.assertEqual(big.h_a.degree, 25)
        with self.assertRaises(ConstraintViolationError):
            degree_d_counterexample(1, 1, Fraction(1, 10))

    def test_iterate_limits(self):
        P = default_counterexample_poly(2)
        self.assertEqual(f_a_n_limit(P, 1, 1).degree, 3)
        self.assertEqual(f_a_n_limit(P, 1, 2).degree, 9)
        self.assertEqual(f_a_n_limit(P, 1, 3).degree, 27)
        with self.assertRaises(InvalidInputError):
            f_a_n_limit(P, 1, 0)

    def test_harmonic_j(self):
        pts = [ProjPoint.affine(0), ProjPoint.infinity(), ProjPoint.affine(1), ProjPoint.affine(-1)]
        self.assertAlmostEqual(j_invariant(*pts), 27 / 4)
        self.assertTrue(math.isinf(abs(j_invariant(pts[0], pts[1], pts[2], pts[2]))))

    def test_fixed_point_witnesses(self):
        w = cross_ratio_witness(2, [1, 2], "fixed")
        self.assertTrue(witnesses_differ(w["1"], w["2"]))

    def test_constant_value_witnesses(self):
        w = cross_ratio_witness(5, [0, 1, 2], "constant")
        for a, b in (("0", "1"), ("0", "2"), ("1", "2")):
            self.assertTrue(witnesses_differ(w[a], w[b]), (a, b))

    def test_preimage_cross_ratio(self):
        chi = preimage_cross_ratio(1, 3)
        expected = chi_closed_form(1, 3)
        self.assertTrue(abs(chi - expected) < 1e-9 or abs(chi - 1 / expected) < 1e-9)

    def test_unknown_kind(self):
        with self.assertRaises(InvalidInputError):
            cross_ratio_witness(2, [1], "other")

    def test_witness_comparison(self):
        self.assertFalse(witnesses_differ([1 + 0j, complex(math.inf)], [1 + 1e-12j, complex(math.inf)]))
        self.assertTrue(witnesses_differ([1 + 0j], [1 + 0j, 2 + 0j]))
        self.assertTrue(witnesses_differ([complex(math.inf)], [2 + 0j]))
