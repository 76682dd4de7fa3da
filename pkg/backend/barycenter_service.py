"""
Conformal barycenter normalization of probability measures on the sphere.

The Riemann sphere is identified with S^2 by stereographic projection
with 0 at the south pole and infinity at the north pole. A measure is
normalized by a Mobius map A with E(A_* mu) = 0, where E is the
Euclidean center of mass.
"""

import contextvars
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dynamics_config import get_settings
from dynamics_errors import BarycenterConvergenceError, InvalidInputError
from measure_service import AtomicMeasure, weak_distance
from polyhom import ProjPoint, sphere_vector
from ratbar import Mobius

logger = logging.getLogger(__name__)

EPS_UNIT = 1e-9
EPS_MASS = 1e-9
# hyperbolic step cap of 0.5 in the ball model: |h| <= tanh(0.25)
MAX_STEP_HEIGHT = float(np.tanh(0.25))
DEGENERATE_NORM = 1 - 1e-3
CLUSTER_RADIUS = 0.05
CLUSTER_SLACK = 0.05


def stereo(pt: ProjPoint) -> np.ndarray:
    return sphere_vector(pt)


def stereo_inv(v: Sequence[float]) -> ProjPoint:
    x, y, z = (float(c) for c in v)
    if z >= 0:
        # (1 + Z : X - iY) is stable near the north pole
        return ProjPoint.of(complex(1 + z), complex(x, -y))
    return ProjPoint.of(complex(x, y), complex(1 - z))


def _to_homogeneous(V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X, Y, Z = V[:, 0], V[:, 1], V[:, 2]
    north = Z >= 0
    zc = np.where(north, 1 + Z, X + 1j * Y)
    wc = np.where(north, X - 1j * Y, 1 - Z)
    return zc.astype(complex), wc.astype(complex)


def _from_homogeneous(zc: np.ndarray, wc: np.ndarray) -> np.ndarray:
    zw = zc * np.conj(wc)
    n2 = np.abs(zc) ** 2 + np.abs(wc) ** 2
    return np.stack([2 * zw.real / n2, 2 * zw.imag / n2, (np.abs(zc) ** 2 - np.abs(wc) ** 2) / n2], axis=1)


def push_vectors(matrix: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Apply the Mobius map with the given 2x2 matrix to unit vectors"""
    if len(V) == 0:
        return V
    zc, wc = _to_homogeneous(V)
    nz = matrix[0, 0] * zc + matrix[0, 1] * wc
    nw = matrix[1, 0] * zc + matrix[1, 1] * wc
    return _from_homogeneous(nz, nw)


@dataclass(frozen=True, eq=False)
class SphereMeasure:
    """Weighted unit vectors in R^3 with total mass 1"""

    vectors: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(V) != len(w):
            raise InvalidInputError("measure", "vectors and weights differ in length")
        if len(w) == 0:
            raise InvalidInputError("measure", "a probability measure needs at least one atom")
        if np.any(w <= 0):
            raise InvalidInputError("measure", "masses must be positive")
        if abs(w.sum() - 1) > EPS_MASS:
            raise InvalidInputError("measure", f"masses sum to {w.sum():.12g}, not 1")
        if np.max(np.abs(np.linalg.norm(V, axis=1) - 1)) > EPS_UNIT:
            raise InvalidInputError("measure", "vectors must lie on the unit sphere")
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def from_atomic(mu: AtomicMeasure) -> "SphereMeasure":
        """Listed atoms of mu, renormalized to total mass 1"""
        V, w = mu.weighted_vectors()
        return SphereMeasure(V, w / w.sum())

    @staticmethod
    def from_vectors(V: np.ndarray, weights: Optional[np.ndarray] = None) -> "SphereMeasure":
        V = np.asarray(V, dtype=float)
        V = V / np.linalg.norm(V, axis=1, keepdims=True)
        if weights is None:
            weights = np.full(len(V), 1.0 / len(V))
        weights = np.asarray(weights, dtype=float)
        return SphereMeasure(V, weights / weights.sum())

    def weighted_vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vectors, self.weights

    def rotated(self, R: np.ndarray) -> "SphereMeasure":
        return SphereMeasure(self.vectors @ np.asarray(R).T, self.weights)

    def to_dict(self) -> List[dict]:
        return [{"v": v.tolist(), "mass": float(m)} for v, m in zip(self.vectors, self.weights)]


def euclidean_center(mu: SphereMeasure) -> np.ndarray:
    return mu.weights @ mu.vectors


def pushforward(mu: SphereMeasure, A: Mobius) -> SphereMeasure:
    return SphereMeasure(push_vectors(A.to_matrix(), mu.vectors), mu.weights)


def cap_masses(mu: SphereMeasure, centers: np.ndarray, radius: float) -> np.ndarray:
    """Mass of each chordal cap {x : |x - c|/2 <= radius}"""
    dist = np.linalg.norm(centers[:, None, :] - mu.vectors[None, :, :], axis=2) / 2
    return (dist <= radius).astype(float) @ mu.weights


def _merged_atoms(mu: SphereMeasure, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Coincident vectors merged (within chordal tol)"""
    order = np.argsort(-mu.weights, kind="stable")
    centers: List[np.ndarray] = []
    masses: List[float] = []
    for i in order:
        v = mu.vectors[i]
        for j, c in enumerate(centers):
            if np.linalg.norm(v - c) / 2 <= tol:
                masses[j] += mu.weights[i]
                break
        else:
            centers.append(v)
            masses.append(float(mu.weights[i]))
        if len(centers) > 256:
            break
    return np.array(centers), np.array(masses)


def antipodal_clusters(mu: SphereMeasure, radius: float = CLUSTER_RADIUS, slack: float = CLUSTER_SLACK) -> bool:
    """Two antipodal caps each carrying at least 1/2 - slack"""
    top = np.argsort(-mu.weights, kind="stable")[:64]
    centers = mu.vectors[top]
    masses = cap_masses(mu, centers, radius)
    best = centers[int(np.argmax(masses))]
    here, there = cap_masses(mu, np.array([best, -best]), radius)
    return here >= 0.5 - slack and there >= 0.5 - slack


class BarycenterStatus(Enum):
    CENTERED = "Centered"
    ATOM_OBSTRUCTION = "AtomObstruction"
    DEGENERATE = "Degenerate"


@dataclass
class BarycenterResult:
    status: BarycenterStatus
    iterations: int
    center_norm: float
    mobius: Optional[Mobius] = None
    pushforward: Optional[SphereMeasure] = field(default=None, repr=False)
    witness: Optional[ProjPoint] = None
    note: str = ""

    @property
    def centered(self) -> bool:
        return self.status == BarycenterStatus.CENTERED

    def to_dict(self) -> dict:
        out = {
            "status": self.status.value,
            "iterations": self.iterations,
            "center_norm": self.center_norm,
            "note": self.note,
        }
        if self.mobius is not None:
            out["mobius"] = [[[c.real, c.imag] for c in row] for row in self.mobius.to_matrix()]
        if self.witness is not None:
            out["witness"] = str(self.witness)
        return out


def _translation(u: np.ndarray, h: float) -> np.ndarray:
    """Hyperbolic translation along the axis through u moving the point h u to the origin"""
    R = Mobius.rotation_to_south(stereo_inv(u)).to_matrix()
    lam = (1 + h) / (1 - h)
    D = np.array([[lam, 0], [0, 1]], dtype=complex)
    M = np.linalg.inv(R) @ D @ R
    return M / np.sqrt(np.linalg.det(M))


def barycenter_normalize(
    mu: SphereMeasure, tol: Optional[float] = None, max_iter: Optional[int] = None
) -> BarycenterResult:
    """Find A with E(A_* mu) = 0 by damped translations toward the center of mass"""
    settings = get_settings()
    tol = settings.tol_bc if tol is None else tol
    max_iter = settings.max_bc_iter if max_iter is None else max_iter

    centers, masses = _merged_atoms(mu, settings.tol_root)
    heavy = int(np.argmax(masses))
    if masses[heavy] >= 0.5 - settings.tol_atom:
        witness = stereo_inv(centers[heavy])
        anti = cap_masses(mu, np.array([-centers[heavy]]), settings.tol_root)[0]
        if anti >= 0.5 - settings.tol_atom:
            logger.info(f"Two antipodal atoms of mass 1/2 at {witness}")
            return BarycenterResult(
                BarycenterStatus.DEGENERATE, 0, float(np.linalg.norm(euclidean_center(mu))), witness=witness,
                note="antipodal pair of half-mass atoms",
            )
        return BarycenterResult(
            BarycenterStatus.ATOM_OBSTRUCTION, 0, float(np.linalg.norm(euclidean_center(mu))), witness=witness,
            note=f"atom of mass {masses[heavy]:.12g}",
        )

    total = np.eye(2, dtype=complex)
    V = mu.vectors
    E = mu.weights @ V
    norm = float(np.linalg.norm(E))
    step = 1.0
    stalled = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            result = SphereMeasure(V, mu.weights)
            logger.debug(f"Barycenter found after {it - 1} steps, |E| = {norm:.3g}")
            return BarycenterResult(
                BarycenterStatus.CENTERED, it - 1, norm, Mobius.from_matrix(total), result
            )
        u = E / norm
        h = min(step * norm, MAX_STEP_HEIGHT)
        T = _translation(u, h)
        V_new = push_vectors(T, V)
        E_new = mu.weights @ V_new
        norm_new = float(np.linalg.norm(E_new))
        if norm_new < norm:
            total = T @ total
            total /= np.sqrt(np.linalg.det(total))
            V, E, norm = V_new, E_new, norm_new
            step = min(1.0, step * 1.5)
        else:
            step /= 2
        stalled = stalled + 1 if norm > DEGENERATE_NORM else 0
        if stalled >= 20 and antipodal_clusters(SphereMeasure(V, mu.weights)):
            logger.info(f"Measure splits into antipodal halves after {it} steps")
            return BarycenterResult(
                BarycenterStatus.DEGENERATE, it, norm, Mobius.from_matrix(total), SphereMeasure(V, mu.weights),
                note="mass splits into two antipodal halves",
            )
        if step < 1e-12:
            break

    logger.error(f"Barycenter iteration stopped at |E| = {norm:.3g} after {max_iter} steps")
    raise BarycenterConvergenceError(f"|E| = {norm:.3g} after {max_iter} iterations (step {step:.2g})")


def normalize_batch(measures: Sequence[SphereMeasure]) -> List[BarycenterResult]:
    workers = get_settings().workers
    if workers <= 1:
        return [barycenter_normalize(m) for m in measures]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(contextvars.copy_context().run, barycenter_normalize, m) for m in measures]
        return [f.result() for f in futures]


def smallest_half_cap(mu: SphereMeasure, slack: float, n_centers: int = 200) -> float:
    """Radius of the smallest cap (centered at a support point) carrying 1/2 - slack"""
    stride = max(1, len(mu.vectors) // n_centers)
    order = np.argsort(-mu.weights, kind="stable")
    centers = mu.vectors[order[::stride][:n_centers]]
    best = np.inf
    for c in centers:
        dist = np.linalg.norm(mu.vectors - c, axis=1) / 2
        idx = np.argsort(dist, kind="stable")
        cum = np.cumsum(mu.weights[idx])
        k = int(np.searchsorted(cum, 0.5 - slack))
        best = min(best, float(dist[idx[min(k, len(idx) - 1)]]))
    return best


def separating_annulus_test(mu_seq: Sequence[SphereMeasure], slack: float = 0.01) -> bool:
    """True when half of the mass collapses into caps of radius tending to 0

    The cap radii must shrink overall (one inversion allowed) and end
    below CLUSTER_RADIUS.
    """
    if len(mu_seq) < 2:
        return False
    radii = [smallest_half_cap(m, slack) for m in mu_seq]
    inversions = sum(1 for a, b in zip(radii, radii[1:]) if b > a)
    logger.debug(f"Half-mass cap radii: {[round(r, 5) for r in radii]}")
    return inversions <= 1 and radii[-1] < CLUSTER_RADIUS and radii[-1] < radii[0] / 2


def heavy_clusters(mu: SphereMeasure, radius: float, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy heaviest caps of the given radius: centers and masses"""
    remaining = np.ones(len(mu.weights), dtype=bool)
    masses, centers = [], []
    for _ in range(k):
        if not remaining.any():
            break
        w = np.where(remaining, mu.weights, 0.0)
        cand = np.argsort(-w, kind="stable")[:64]
        caps = np.linalg.norm(mu.vectors[cand][:, None, :] - mu.vectors[None, :, :], axis=2) / 2 <= radius
        caps &= remaining[None, :]
        cap_mass = caps.astype(float) @ mu.weights
        best = int(np.argmax(cap_mass))
        # centroid of the cap, pushed back to the sphere
        c = mu.weights[caps[best]] @ mu.vectors[caps[best]]
        centers.append(c / np.linalg.norm(c))
        masses.append(float(cap_mass[best]))
        remaining &= ~caps[best]
    return np.array(centers).reshape(-1, 3), np.array(masses)


def kabsch(source: np.ndarray, target: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Proper rotation R minimizing sum w |R s - t|^2"""
    H = (source * weights[:, None]).T @ target
    U, _, Vt = np.linalg.svd(H)
    sign = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    return Vt.T @ np.diag([1.0, 1.0, sign]) @ U.T


def rotation_aligned_distance(
    mu: SphereMeasure, nu, radius: Optional[float] = None, k: int = 4
) -> float:
    """weak_distance(R mu, nu) for the rotation R aligning the heaviest clusters

    nu may be any measure exposing weighted_vectors(). All pairings of
    the k heaviest clusters are tried and the best alignment is kept.
    """
    radius = get_settings().r_cap if radius is None else radius
    V, w = nu.weighted_vectors()
    target = SphereMeasure.from_vectors(V, w)
    ca, ma = heavy_clusters(mu, radius, k)
    cb, mb = heavy_clusters(target, radius, k)
    n = min(len(ca), len(cb))
    best = weak_distance(mu, nu)
    for perm in permutations(range(len(cb)), n):
        src, dst = ca[:n], cb[list(perm)]
        weights = np.minimum(ma[:n], mb[list(perm)]) + 1e-12
        R = kabsch(src, dst, weights)
        best = min(best, weak_distance(mu.rotated(R), nu))
    return best
