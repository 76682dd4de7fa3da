import unittest

import numpy as np

from barycenter_service import (
    BarycenterStatus,
    SphereMeasure,
    barycenter_normalize,
    euclidean_center,
    kabsch,
    normalize_batch,
    pushforward,
    rotation_aligned_distance,
    separating_annulus_test,
    smallest_half_cap,
    stereo,
    stereo_inv,
)
from dynamics_config import override_settings
from dynamics_errors import InvalidInputError
from measure_service import weak_distance
from polyhom import ProjPoint, chordal_distance
from ratbar import Mobius


def rotation(angle_z: float, angle_x: float) -> np.ndarray:
    cz, sz = np.cos(angle_z), np.sin(angle_z)
    cx, sx = np.cos(angle_x), np.sin(angle_x)
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return Rz @ Rx


def fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    theta = np.pi * (1 + 5 ** 0.5) * k
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def clustered(radius: float) -> SphereMeasure:
    """Half the mass within the given chordal radius of the north pole, half on the equator"""
    polar = 2 * np.arcsin(radius)
    ring = [
        [np.sin(polar) * np.cos(a), np.sin(polar) * np.sin(a), np.cos(polar)]
        for a in np.linspace(0, 2 * np.pi, 9, endpoint=False)
    ]
    equator = [[np.cos(a), np.sin(a), 0.0] for a in np.linspace(0, 2 * np.pi, 10, endpoint=False)]
    return SphereMeasure.from_vectors(np.array([[0.0, 0.0, 1.0]] + ring + equator))


class SphereMeasureTest(unittest.TestCase):
    """Probability measures on S^2"""

    def test_validation(self):
        with self.assertRaises(InvalidInputError):
            SphereMeasure(np.array([[0, 0, 1.0]]), np.array([0.5]))
        with self.assertRaises(InvalidInputError):
            SphereMeasure(np.array([[0, 0, 2.0]]), np.array([1.0]))
        with self.assertRaises(InvalidInputError):
            SphereMeasure(np.zeros((0, 3)), np.zeros(0))

    def test_stereographic_round_trip(self):
        pt = ProjPoint.affine(2 + 1j)
        self.assertLess(chordal_distance(stereo_inv(stereo(pt)), pt), 1e-12)
        self.assertTrue(stereo_inv([0, 0, 1]).is_infinity)

    def test_pushforward_by_identity(self):
        mu = SphereMeasure.from_vectors(fibonacci_sphere(12))
        nu = pushforward(mu, Mobius.identity().to_float())
        np.testing.assert_allclose(nu.vectors, mu.vectors, atol=1e-12)


class BarycenterTest(unittest.TestCase):
    """Conformal barycenter normalization"""

    def test_already_centered(self):
        octahedron = np.vstack([np.eye(3), -np.eye(3)])
        result = barycenter_normalize(SphereMeasure.from_vectors(octahedron))
        self.assertEqual(result.status, BarycenterStatus.CENTERED)
        self.assertEqual(result.iterations, 0)

    def test_heavy_atom(self):
        mu = SphereMeasure.from_vectors(np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]]), np.array([0.6, 0.2, 0.2]))
        result = barycenter_normalize(mu)
        self.assertEqual(result.status, BarycenterStatus.ATOM_OBSTRUCTION)
        self.assertTrue(result.witness.is_infinity)

    def test_antipodal_half_atoms(self):
        mu = SphereMeasure.from_vectors(np.array([[0, 0, 1.0], [0, 0, -1.0]]))
        result = barycenter_normalize(mu)
        self.assertEqual(result.status, BarycenterStatus.DEGENERATE)
        self.assertEqual(result.to_dict()["status"], "Degenerate")

    def test_moves_center_to_origin(self):
        mu = SphereMeasure.from_vectors(fibonacci_sphere(30) + np.array([0.3, 0.0, 0.4]))
        result = barycenter_normalize(mu)
        self.assertTrue(result.centered)
        self.assertLess(np.linalg.norm(euclidean_center(result.pushforward)), 1e-8)

    def test_equivariance(self):
        """Normalizing A_* mu agrees with normalizing mu up to a rotation, over random pairs"""
        for seed in range(20):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                mu = SphereMeasure.from_vectors(rng.normal(size=(40, 3)), rng.uniform(0.5, 1.5, size=40))
                m = np.zeros((2, 2))
                while abs(np.linalg.det(m)) < 0.1:
                    m = np.eye(2) + 0.5 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
                A = Mobius.from_matrix(m)
                a = barycenter_normalize(mu).mobius.to_matrix()
                b = barycenter_normalize(pushforward(mu, A)).mobius.to_matrix()
                m = m / np.sqrt(np.linalg.det(m))
                U = b @ m @ np.linalg.inv(a)
                U = U / np.sqrt(np.linalg.det(U))
                np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-8)

    def test_batch_is_independent_of_workers(self):
        rng = np.random.default_rng(3)
        measures = [SphereMeasure.from_vectors(rng.normal(size=(6, 3))) for _ in range(4)]
        serial = [r.center_norm for r in normalize_batch(measures)]
        with override_settings(workers=2):
            threaded = [r.center_norm for r in normalize_batch(measures)]
        self.assertEqual(serial, threaded)


class ConcentrationTest(unittest.TestCase):
    """Detecting mass that splits into two halves"""

    def test_half_cap(self):
        self.assertAlmostEqual(smallest_half_cap(clustered(0.1), 0.01), 0.1, places=9)

    def test_shrinking_clusters(self):
        sequence = [clustered(r) for r in (0.2, 0.1, 0.05, 0.02, 0.01)]
        self.assertTrue(separating_annulus_test(sequence))

    def test_uniform_measures(self):
        uniform = SphereMeasure.from_vectors(fibonacci_sphere(200))
        self.assertFalse(separating_annulus_test([uniform, uniform, uniform]))
        self.assertFalse(separating_annulus_test([uniform]))


class AlignmentTest(unittest.TestCase):
    """Comparing measures up to rotation"""

    def test_kabsch_recovers_rotation(self):
        R = rotation(0.7, 0.3)
        source = fibonacci_sphere(5)
        np.testing.assert_allclose(kabsch(source, source @ R.T, np.ones(5)), R, atol=1e-10)

    def test_rotated_copy_is_close(self):
        mu = SphereMeasure.from_vectors(
            np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]]), np.array([0.45, 0.35, 0.2])
        )
        nu = mu.rotated(rotation(0.7, 0.3))
        self.assertGreater(weak_distance(mu, nu), 0.1)
        self.assertLess(rotation_aligned_distance(mu, nu), 1e-6)
