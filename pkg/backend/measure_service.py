"""
Atomic measures mu_f of boundary points.

mu_f = sum_n d^-(n+1) sum_{H_f(h)=0} sum_{phi^n(z)=h} delta_z (with
multiplicities). Masses are exact Fractions; truncation leaves a tail of
exactly (deg phi / d)^(N+1).
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from dynamics_config import get_settings
from dynamics_errors import IndeterminatePointError, NotBoundaryPointError
from polyhom import PointIndex, ProjPoint, RootList, same_point, sphere_vector
from ratbar import RatbarPoint, depth_of_iterate, pullback_divisor

logger = logging.getLogger(__name__)

Mass = Union[Fraction, float]


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite list of atoms plus a bound on the mass not listed"""

    atoms: Tuple[Tuple[ProjPoint, Mass], ...]
    tail_bound: Mass = Fraction(0)

    @property
    def listed_mass(self) -> Mass:
        return sum((m for _, m in self.atoms), Fraction(0))

    def mass_of(self, pt: ProjPoint, tol: Optional[float] = None) -> Mass:
        return sum((m for p, m in self.atoms if same_point(p, pt, tol)), Fraction(0))

    def top(self, n: int) -> List[Tuple[ProjPoint, Mass]]:
        return sorted(self.atoms, key=lambda a: (-float(a[1]), a[0].sort_key()))[:n]

    def max_atom(self) -> Tuple[Optional[ProjPoint], Mass]:
        if not self.atoms:
            return None, Fraction(0)
        pt, m = self.top(1)[0]
        return pt, m

    def weighted_vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.atoms:
            return np.zeros((0, 3)), np.zeros(0)
        vectors = np.array([sphere_vector(pt) for pt, _ in self.atoms])
        weights = np.array([float(m) for _, m in self.atoms])
        return vectors, weights

    def is_normalized(self, eps: float = 1e-12) -> bool:
        total = self.listed_mass + self.tail_bound
        if isinstance(total, Fraction):
            return total == 1
        return 1 - eps <= total <= 1 + eps


@dataclass(frozen=True)
class MassEstimate:
    """A mass with a rigorous error bound (0 when exact)"""

    value: Mass
    error_bound: Mass
    exact: bool

    def __float__(self):
        return float(self.value)


def _require_measure(f: RatbarPoint):
    if f.in_indeterminacy():
        raise IndeterminatePointError("mu_f is undefined on the indeterminacy locus")


def boundary_measure(f: RatbarPoint, depth_n: Optional[int] = None) -> AtomicMeasure:
    """mu_f truncated after depth_n preimage levels, with the exact geometric tail"""
    settings = get_settings()
    depth_n = settings.depth_n if depth_n is None else depth_n
    if not f.is_boundary:
        raise NotBoundaryPointError("f has no holes, so mu_f is not atomic")
    _require_measure(f)

    d, e = f.degree, f.phi_degree
    if e == 0:
        atoms = tuple((pt, Fraction(m, d)) for pt, m in f.holes)
        return AtomicMeasure(atoms=atoms, tail_bound=Fraction(0))

    index = PointIndex()
    masses: List[Fraction] = []
    level: RootList = f.holes
    enumerated = -1
    for n in range(depth_n + 1):
        if n > 0:
            level = pullback_divisor(f.phi, level)
        if len(index) + len(level) > settings.max_atoms:
            logger.warning(
                f"Atom budget {settings.max_atoms} reached at level {n}; folding the rest into the tail"
            )
            break
        weight = Fraction(1, d ** (n + 1))
        for pt, m in level:
            idx = index.add(pt)
            if idx == len(masses):
                masses.append(m * weight)
            else:
                masses[idx] += m * weight
        enumerated = n

    tail = Fraction(e, d) ** (enumerated + 1)
    atoms = tuple(
        sorted(zip(index.points, masses), key=lambda a: a[0].sort_key())
    )
    logger.debug(f"mu_f: {len(atoms)} atoms through level {enumerated}, tail {tail}")
    return AtomicMeasure(atoms=atoms, tail_bound=tail)


def mass_at(f: RatbarPoint, z: ProjPoint, depth_n: Optional[int] = None) -> MassEstimate:
    """mu_f({z}) = (1/d) sum_n m_z(phi^n) d_{phi^n(z)}(f) / d^n

    The forward orbit of z is followed with cycle detection; once it is
    periodic the remaining terms form a geometric series and the value is
    exact. Otherwise the partial sum carries the bound (e/d)^(N+1).
    """
    depth_n = get_settings().depth_n if depth_n is None else depth_n
    _require_measure(f)
    if not f.is_boundary:
        return MassEstimate(Fraction(0), Fraction(0), True)
    d, e = f.degree, f.phi_degree

    orbit: List[ProjPoint] = []
    terms: List[Fraction] = []
    mults: List[int] = []
    m = 1
    x = z
    for n in range(depth_n + 1):
        if m == 0:
            return MassEstimate(sum(terms, Fraction(0)), Fraction(0), True)
        for i, prev in enumerate(orbit):
            if same_point(prev, x):
                period = n - i
                cycle_mult = Fraction(m, mults[i])
                ratio = cycle_mult / Fraction(d) ** period
                head = sum(terms[:i], Fraction(0))
                cycle = sum(terms[i:], Fraction(0))
                # ratio < 1 whenever the cycle meets a hole, since deg phi < d
                tail = cycle / (1 - ratio) if cycle else Fraction(0)
                return MassEstimate(head + tail, Fraction(0), True)
        orbit.append(x)
        mults.append(m)
        terms.append(Fraction(m * f.hole_depth(x), d ** (n + 1)))
        m *= f.phi.local_degree(x)
        x = f.phi.apply(x)

    bound = Fraction(e, d) ** (depth_n + 1)
    return MassEstimate(sum(terms, Fraction(0)), bound, False)


def mass_via_depths(f: RatbarPoint, z: ProjPoint, n_max: int) -> Fraction:
    """d_z(f^n) / d^n at n = n_max"""
    return Fraction(depth_of_iterate(f, z, n_max), f.degree ** n_max)


def hole_orbit_atoms(f: RatbarPoint, levels: Optional[int] = None) -> List[Tuple[ProjPoint, MassEstimate]]:
    """Points on the first backward levels of the holes, with their masses

    A point first reached at level k has mass at most (e/d)^k, so the
    default level count covers every atom that can weigh 1/2 or more.
    """
    _require_measure(f)
    d, e = f.degree, f.phi_degree
    if levels is None:
        levels = 1
        while Fraction(e, d) ** levels >= Fraction(1, 2):
            levels += 1
    index = PointIndex()
    level = f.holes
    for n in range(levels):
        if n > 0:
            if f.phi.is_constant:
                break
            level = pullback_divisor(f.phi, level)
        for pt, _ in level:
            index.add(pt)
    return [(pt, mass_at(f, pt)) for pt in index.points]


def balanced_defect(f: RatbarPoint, z: ProjPoint) -> MassEstimate:
    """d mu({z}) - sum_{phi(y)=z} m_y mu({y}) - d_z(f), which vanishes"""
    d = f.degree
    lhs = mass_at(f, z)
    value = d * lhs.value - f.hole_depth(z)
    bound = d * lhs.error_bound
    if not f.phi.is_constant:
        for y, m in f.phi.preimages(z):
            my = mass_at(f, y)
            value -= m * my.value
            bound += m * my.error_bound
    return MassEstimate(value, bound, lhs.exact and bound == 0)


def _cap_table(centers: np.ndarray, vectors: np.ndarray, r_cap: float) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((len(centers), 0), dtype=bool)
    # chordal distance is half the Euclidean distance between sphere images
    dist = np.linalg.norm(centers[:, None, :] - vectors[None, :, :], axis=2)
    return dist <= 2.0 * r_cap


def weak_distance(mu, nu: AtomicMeasure, r_cap: Optional[float] = None, top_n: Optional[int] = None) -> float:
    """Cap discrepancy around the heaviest atoms of nu, plus the mass left outside the caps

    Both arguments expose weighted_vectors(); the result is the larger of
    the worst cap mismatch and the mismatch outside the union of caps.
    """
    settings = get_settings()
    r_cap = settings.r_cap if r_cap is None else r_cap
    top_n = settings.top_atoms if top_n is None else top_n

    vm, wm = mu.weighted_vectors()
    vn, wn = nu.weighted_vectors()
    if len(wn) == 0:
        return float(abs(wm.sum() - wn.sum()))
    order = np.argsort(-wn, kind="stable")[:top_n]
    centers = vn[order]

    in_m = _cap_table(centers, vm, r_cap)
    in_n = _cap_table(centers, vn, r_cap)
    mu_caps = in_m.astype(float) @ wm if len(wm) else np.zeros(len(centers))
    nu_caps = in_n.astype(float) @ wn
    cap_term = float(np.max(np.abs(mu_caps - nu_caps)))

    mu_inside = float(wm[in_m.any(axis=0)].sum()) if len(wm) else 0.0
    nu_inside = float(wn[in_n.any(axis=0)].sum())
    outside_term = abs((1.0 - mu_inside) - (1.0 - nu_inside))
    return max(cap_term, outside_term)


def atoms_as_dict(mu: AtomicMeasure) -> Dict[str, Mass]:
    return {str(pt): m for pt, m in mu.atoms}
