"""
Measures of maximal entropy by backward random iteration, and the
desk-scale weak-limit experiments built on them.

A walk starts at a random point and repeatedly jumps to one of the d
preimages of its current position, chosen uniformly with multiplicity.
After burn-in its positions are distributed according to mu_f.
"""

import contextvars
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from barycenter_service import (
    BarycenterResult,
    SphereMeasure,
    barycenter_normalize,
    rotation_aligned_distance,
    separating_annulus_test,
)
from boundary_families import (
    F_family,
    as_point,
    check_counterexample_poly,
    f_a_limit,
    g_family,
    g_limit,
    h_a_limit,
    h_family,
)
from dynamics_config import get_settings
from dynamics_errors import (
    ConstraintViolationError,
    ExceptionalStartError,
    InvalidInputError,
    RootFindingError,
)
from measure_service import AtomicMeasure, boundary_measure, weak_distance
from moduli_service import (
    ROOT_OF_UNITY_SEARCH,
    DiskFamily,
    DiskKind,
    ModuliPoint2,
    map_from_sigma,
    match_indeterminacy,
    path_eval,
    scalar_sqrt,
    tau_squared,
)
from polyhom import HomPoly, ProjPoint, derivative_z, mul, roots
from ratbar import RatbarPoint, compose, iterate, normalize
from scalar_field import EXACT

logger = logging.getLogger(__name__)

ROOT_EPS = 1e-14
EXCEPTIONAL_SPREAD = 1e-9
MAX_CONDITION = 1e12
TAIL_TARGET = 0.01


# ---------------------------------------------------------------------------
# empirical measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Sample points as unit homogeneous pairs (z, w), in walk order"""

    zs: np.ndarray = field(repr=False)
    ws: np.ndarray = field(repr=False)
    seed: int = 0
    burn_in: int = 0
    n_samples: int = 0

    @property
    def points(self) -> List[ProjPoint]:
        return [ProjPoint.of(complex(z), complex(w)) for z, w in zip(self.zs, self.ws)]

    @property
    def vectors(self) -> np.ndarray:
        zw = self.zs * np.conj(self.ws)
        n2 = np.abs(self.zs) ** 2 + np.abs(self.ws) ** 2
        return np.stack(
            [2 * zw.real / n2, 2 * zw.imag / n2, (np.abs(self.zs) ** 2 - np.abs(self.ws) ** 2) / n2], axis=1
        )

    def weighted_vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.zs)
        return self.vectors, np.full(n, 1.0 / n)

    def to_sphere_measure(self) -> SphereMeasure:
        V, w = self.weighted_vectors()
        return SphereMeasure(V, w)

    def fraction_where(self, mask_fn) -> float:
        """Share of samples whose affine coordinate satisfies mask_fn (infinity excluded)"""
        finite = np.abs(self.ws) > 0
        x = np.where(finite, self.zs / np.where(finite, self.ws, 1), np.inf)
        return float(np.mean(finite & mask_fn(x)))


def _unit(z: complex, w: complex) -> Tuple[complex, complex]:
    n = math.hypot(abs(z), abs(w))
    return z / n, w / n


def _preimages(pc: np.ndarray, qc: np.ndarray, y: Tuple[complex, complex]) -> List[Tuple[complex, complex]]:
    """Roots of y_w P - y_z Q with multiplicity; stripped leading terms are roots at infinity"""
    c = y[1] * pc - y[0] * qc
    scale = np.max(np.abs(c))
    if scale == 0:
        raise RootFindingError("backward equation vanishes identically")
    lead = 0
    while lead < len(c) - 1 and abs(c[lead]) <= ROOT_EPS * scale:
        lead += 1
    finite = np.roots(c[lead:]) if len(c) - lead > 1 else np.array([], dtype=complex)
    if not np.all(np.isfinite(finite)):
        raise RootFindingError(f"non-finite preimage for target {y}")
    out = [(1 + 0j, 0j)] * lead
    for r in finite:
        out.append(_unit(complex(r), 1 + 0j) if abs(r) <= 1 else _unit(1 + 0j, 1 / complex(r)))
    return out


def _walk(pc: np.ndarray, qc: np.ndarray, count: int, burn_in: int, rng: np.random.Generator) -> np.ndarray:
    start = rng.standard_normal(2) @ np.array([1, 1j])
    y = _unit(complex(start), 1 + 0j)
    out = np.empty((count, 2), dtype=complex)
    history = []
    for step in range(burn_in + count):
        pre = _preimages(pc, qc, y)
        y = pre[int(rng.integers(len(pre)))]
        if step < burn_in:
            history.append(y)
        else:
            out[step - burn_in] = y
        if step == burn_in - 1 and burn_in > 1:
            H = np.array(history)
            spread = np.max(np.abs(H[:, 0] * H[0, 1] - H[:, 1] * H[0, 0]))
            if spread < EXCEPTIONAL_SPREAD:
                raise ExceptionalStartError("backward orbit stayed on one point through burn-in")
    return out


def _run_walk(pc, qc, count, burn_in, seed, walk) -> np.ndarray:
    for attempt in Retrying(
        stop=stop_after_attempt(5), retry=retry_if_exception_type(ExceptionalStartError), reraise=True
    ):
        with attempt:
            n = attempt.retry_state.attempt_number
            if n > 1:
                logger.warning(f"Walk {walk}: exceptional start, reseeding (attempt {n})")
            rng = np.random.default_rng([seed, walk, n - 1])
            return _walk(pc, qc, count, burn_in, rng)
    raise ExceptionalStartError(f"walk {walk} found no usable start")


def sample_max_entropy(
    f: RatbarPoint,
    n_samples: Optional[int] = None,
    seed: int = 0,
    burn_in: Optional[int] = None,
    n_walks: Optional[int] = None,
) -> EmpiricalMeasure:
    """Backward random iteration of a map without holes

    The sample count is split across n_walks independent walks, each
    seeded by (seed, walk index, attempt).
    """
    settings = get_settings()
    n_samples = settings.n_samples if n_samples is None else n_samples
    burn_in = settings.burn_in if burn_in is None else burn_in
    n_walks = settings.n_walks if n_walks is None else n_walks
    if f.is_boundary:
        raise InvalidInputError("f", "the sampler needs a map without holes")
    if f.phi_degree < 2:
        raise InvalidInputError("f", "the sampler needs degree at least 2")
    if n_samples < 1 or n_walks < 1:
        raise InvalidInputError("n_samples", "sample and walk counts must be positive")

    pc, qc = f.phi.p.to_numpy(), f.phi.q.to_numpy()
    n_walks = min(n_walks, n_samples)
    counts = [n_samples // n_walks + (1 if i < n_samples % n_walks else 0) for i in range(n_walks)]
    jobs = [(pc, qc, counts[i], burn_in, seed, i) for i in range(n_walks)]

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            futures = [pool.submit(contextvars.copy_context().run, _run_walk, *job) for job in jobs]
            parts = [fut.result() for fut in futures]
    else:
        parts = [_run_walk(*job) for job in jobs]
    samples = np.concatenate(parts)
    logger.debug(f"Sampled {n_samples} points in {n_walks} walks (seed {seed})")
    return EmpiricalMeasure(samples[:, 0], samples[:, 1], seed, burn_in, n_samples)


def pushforward_empirical(f: RatbarPoint, emp: EmpiricalMeasure) -> EmpiricalMeasure:
    """Image of every sample under f"""
    pc, qc = f.phi.p.to_numpy(), f.phi.q.to_numpy()
    d = len(pc) - 1
    powers = np.arange(d + 1)
    Z = emp.zs[:, None] ** (d - powers)[None, :]
    W = emp.ws[:, None] ** powers[None, :]
    nz, nw = (Z * W) @ pc, (Z * W) @ qc
    norm = np.hypot(np.abs(nz), np.abs(nw))
    return EmpiricalMeasure(nz / norm, nw / norm, emp.seed, emp.burn_in, emp.n_samples)


# ---------------------------------------------------------------------------
# predicted limits
# ---------------------------------------------------------------------------


def depth_for_tail(f: RatbarPoint, target: float = TAIL_TARGET) -> int:
    """Least truncation depth leaving a tail of mass below target"""
    e, d = f.phi_degree, f.degree
    if e == 0:
        return 0
    return max(0, math.ceil(math.log(target) / math.log(e / d)))


def sylvester_condition(f: RatbarPoint) -> float:
    """Condition number of the Sylvester matrix of (P, Q); infinite on the boundary"""
    p, q = f.P.to_numpy(), f.Q.to_numpy()
    d = len(p) - 1
    S = np.zeros((2 * d, 2 * d), dtype=complex)
    for i in range(d):
        S[i, i : i + d + 1] = p
        S[d + i, i : i + d + 1] = q
    return float(np.linalg.cond(S))


@dataclass
class X2Limit:
    """Limit of a family in Mbar_2 x (barycentered measures / SO(3)), or infinity"""

    base: ModuliPoint2
    measure: Optional[SphereMeasure] = field(default=None, repr=False)
    barycenter: Optional[BarycenterResult] = None
    reason: str = ""

    @property
    def is_infinite(self) -> bool:
        return self.measure is None

    def to_dict(self) -> dict:
        return {
            "base": [str(x) for x in self.base.to_list()],
            "limit": "inf" if self.is_infinite else self.measure.to_dict(),
            "reason": self.reason,
        }


def x2_limit(family: DiskFamily, n_samples: Optional[int] = None, seed: int = 0) -> X2Limit:
    """Base point in Mbar_2 plus the limit of the barycentered measures"""
    base = family.base_point()
    if not base.is_boundary:
        f0 = map_from_sigma(base.x1, base.x2)
        bc = barycenter_normalize(sample_max_entropy(f0, n_samples, seed).to_sphere_measure())
        return X2Limit(base, bc.pushforward, bc, "interior base point")

    found = match_indeterminacy(base, ROOT_OF_UNITY_SEARCH, min_q=1)
    if found is None or found[0] == 1:
        logger.info(f"Base {base} is not [Lambda_zeta] for a root of unity zeta != 1")
        return X2Limit(base, reason="multiplier at the boundary is not a nontrivial root of unity")
    q = found[0]
    tau = tau_squared(family, q)
    if tau.is_infinite:
        return X2Limit(base, reason=f"tau^2 = infinity at q = {q}")
    F = F_family(q, scalar_sqrt(tau.value.z), q)
    mu = boundary_measure(F, depth_for_tail(F))
    bc = barycenter_normalize(SphereMeasure.from_atomic(mu))
    if not bc.centered:
        logger.error(f"Barycentered limit failed for F_(q={q}): {bc.status.value}")
    return X2Limit(base, bc.pushforward, bc, f"q = {q}, tau^2 = {tau.value}")


def _default_limit(family: DiskFamily) -> Optional[RatbarPoint]:
    if family.kind != DiskKind.COEFF_PATH:
        return None
    f0 = normalize(path_eval(family.P, 0), path_eval(family.Q, 0))
    if not f0.is_boundary or f0.in_indeterminacy():
        return None
    return f0


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentRow:
    t: float
    measure: EmpiricalMeasure = field(repr=False)
    distance: Optional[float]
    barycenter_status: Optional[str] = None
    normalized: Optional[SphereMeasure] = field(default=None, repr=False)

    def to_csv_row(self) -> List[str]:
        dist = "" if self.distance is None else f"{self.distance:.6g}"
        return [f"{self.t:.6g}", dist, self.barycenter_status or ""]


@dataclass
class ExperimentReport:
    rows: List[ExperimentRow]
    stopped_early: bool = False
    annulus: Optional[bool] = None

    @property
    def achieved_range(self) -> Tuple[float, float]:
        ts = [r.t for r in self.rows]
        return (max(ts), min(ts)) if ts else (math.nan, math.nan)

    @property
    def distances(self) -> List[float]:
        return [r.distance for r in self.rows if r.distance is not None]

    def decreasing(self, inversions: int = 1) -> bool:
        d = self.distances
        return sum(1 for a, b in zip(d, d[1:]) if b > a) <= inversions


def boundary_limit_experiment(
    family: DiskFamily,
    t_grid: Sequence[float],
    n_samples: Optional[int] = None,
    seed: int = 0,
    depth_n: Optional[int] = None,
    barycentered: bool = False,
    limit: Optional[Union[RatbarPoint, AtomicMeasure, SphereMeasure]] = None,
) -> ExperimentReport:
    """Sample mu_{f_t} along a decreasing t-grid and measure the distance to the predicted limit

    Plain runs compare with the atomic measure of the Ratbar limit.
    Barycentered runs normalize every sample and compare modulo rotations
    with the X_2 limit; when that limit is infinity the report carries
    the separating annulus verdict instead.
    """
    target = None
    if barycentered:
        if limit is None:
            x2 = x2_limit(family, n_samples, seed)
            target = x2.measure
        else:
            target = limit
    else:
        f0 = limit if limit is not None else _default_limit(family)
        if f0 is None:
            raise InvalidInputError("limit", "no Ratbar limit outside I(2) is known for this family")
        if isinstance(f0, RatbarPoint):
            target = boundary_measure(f0, depth_for_tail(f0) if depth_n is None else depth_n)
        else:
            target = f0

    rows: List[ExperimentRow] = []
    stopped = False
    for t in sorted(t_grid, reverse=True):
        f_t = family.at(t)
        if f_t.is_boundary:
            logger.warning(f"f_t has holes at t={t}; stopping the grid")
            stopped = True
            break
        cond = sylvester_condition(f_t)
        if cond > MAX_CONDITION:
            logger.warning(f"Condition number {cond:.3g} at t={t}; stopping the grid")
            stopped = True
            break
        emp = sample_max_entropy(f_t, n_samples, seed)
        if not barycentered:
            rows.append(ExperimentRow(t, emp, weak_distance(emp, target)))
        else:
            bc = barycenter_normalize(emp.to_sphere_measure())
            normalized = bc.pushforward
            dist = None
            if target is not None and normalized is not None:
                dist = rotation_aligned_distance(normalized, target)
            rows.append(ExperimentRow(t, emp, dist, bc.status.value, normalized))
        logger.info(f"t={t:.4g}: distance {rows[-1].distance}")

    annulus = None
    if barycentered and target is None:
        seq = [r.normalized for r in rows if r.normalized is not None]
        annulus = separating_annulus_test(seq)
    return ExperimentReport(rows, stopped, annulus)


# ---------------------------------------------------------------------------
# degree-d counterexamples
# ---------------------------------------------------------------------------


def default_counterexample_poly(degree: int) -> HomPoly:
    """z^k - w^k: distinct roots, nonzero at 0 and at infinity"""
    return HomPoly.monomial(degree, 0, EXACT) - HomPoly.monomial(0, degree, EXACT)


@dataclass
class Counterexample:
    """The families g_{a,t}, h_{a,t} at one (a, t) with their limits"""

    d: int
    a: object
    t: object
    g: RatbarPoint
    g_limit: RatbarPoint
    f_a: RatbarPoint
    h: Optional[RatbarPoint] = None
    h_a: Optional[RatbarPoint] = None


def degree_d_counterexample(d: int, a, t, P: Optional[HomPoly] = None, Ph: Optional[HomPoly] = None) -> Counterexample:
    """g_{a,t}, its limit g, the limit f_a of its second iterates and, for d >= 5, h_{a,t} and h_a"""
    if d < 2:
        raise ConstraintViolationError("the counterexample needs d >= 2", field="d")
    P = default_counterexample_poly(d - 1) if P is None else P
    P = check_counterexample_poly(P, d - 1)
    out = Counterexample(d, a, t, g_family(P, a, t), g_limit(P), f_a_limit(P, a))
    if d >= 5:
        Ph = default_counterexample_poly(d - 2) if Ph is None else Ph
        out.h = h_family(Ph, a, t)
        out.h_a = h_a_limit(Ph, a)
    return out


def f_a_n_limit(P: HomPoly, a, n: int) -> RatbarPoint:
    """lim g_{a,t}^n: f_a^(n/2) for even n, g o f_a^((n-1)/2) for odd n"""
    if n < 1:
        raise InvalidInputError("n", "n must be at least 1")
    if n == 1:
        return g_limit(P)
    half = iterate(f_a_limit(P, a), n // 2)
    return half if n % 2 == 0 else compose(g_limit(P), half)


# ---------------------------------------------------------------------------
# cross-ratio witnesses
# ---------------------------------------------------------------------------


def _bracket(x: ProjPoint, y: ProjPoint) -> complex:
    return complex(x.z) * complex(y.w) - complex(x.w) * complex(y.z)


def j_invariant(a: ProjPoint, b: ProjPoint, c: ProjPoint, d: ProjPoint) -> complex:
    """(chi^2 - chi + 1)^3 / (chi^2 (chi - 1)^2), symmetric in the four points; inf when two coincide"""
    num, den = _bracket(d, a) * _bracket(c, b), _bracket(d, b) * _bracket(c, a)
    scale = max(abs(num), abs(den))
    if scale == 0 or abs(num) <= 1e-14 * scale or abs(den) <= 1e-14 * scale or abs(num - den) <= 1e-14 * scale:
        return complex(math.inf)
    chi = num / den
    return (chi * chi - chi + 1) ** 3 / (chi * chi * (chi - 1) ** 2)


def _finite(points) -> List[ProjPoint]:
    return [p for p, _ in points if not p.is_infinity]


def _fixed_points(phi_p: HomPoly, phi_q: HomPoly) -> List[ProjPoint]:
    """Finite fixed points of (p : q), roots of z q - w p"""
    z = HomPoly.monomial(1, 0, phi_p.backend)
    w = HomPoly.monomial(0, 1, phi_p.backend)
    return _finite(roots(mul(z, phi_q) - mul(w, phi_p)))


def _critical_points(phi_p: HomPoly, phi_q: HomPoly) -> List[ProjPoint]:
    """Finite zeros of the Wronskian p_z q - p q_z"""
    wr = mul(derivative_z(phi_p), phi_q) - mul(phi_p, derivative_z(phi_q))
    return _finite(roots(wr))


def _sorted_values(values: List[complex]) -> List[complex]:
    return sorted(values, key=lambda v: (math.isinf(abs(v)), round(v.real, 8), round(v.imag, 8)))


def fixed_point_witness(P: HomPoly, a) -> List[complex]:
    """j-invariants of three marked points of f_a with each moving fixed point of phi_a

    Marked points are the holes (infinity and the roots of P), plus the
    critical points of phi_a when d = 2.
    """
    f = f_a_limit(P, a)
    marked = [p for p, _ in f.holes]
    if P.degree == 1:
        marked += _critical_points(f.phi.p, f.phi.q)
    moving = _fixed_points(f.phi.p, f.phi.q)
    vals = [j_invariant(*trio, y) for trio in combinations(marked, 3) for y in moving]
    return _sorted_values(vals)


def preimage_witness(P: HomPoly, a) -> List[complex]:
    """j-invariants of infinity, two roots of P and a preimage of the first root under phi_a"""
    f = f_a_limit(P, a)
    rts = [p for p, _ in roots(f.phi.q) if not p.is_infinity]
    alpha = rts[0]
    pre = [p for p, _ in f.phi.preimages(alpha)]
    inf = ProjPoint.infinity(f.backend)
    if len(rts) < 2:
        if len(pre) < 2:
            return [complex(math.inf)]
        return _sorted_values([j_invariant(inf, alpha, pre[0], pre[1])])
    vals = [j_invariant(inf, r1, r2, y) for r1, r2 in combinations(rts, 2) for y in pre]
    return _sorted_values(vals)


def constant_value_witness(P: HomPoly, a) -> List[complex]:
    """j-invariants of infinity, two roots of P and the constant value a of h_a"""
    h = h_a_limit(P, a)
    value = h.phi.constant_value()
    inf = ProjPoint.infinity(h.backend)
    rts = [p for p, _ in h.holes if not p.is_infinity]
    return _sorted_values([j_invariant(inf, r1, r2, value) for r1, r2 in combinations(rts, 2)])


def preimage_cross_ratio(alpha, a) -> complex:
    """chi(infinity, alpha, y_-, y_+) for the two preimages of alpha under phi_a, P = z - alpha"""
    P = HomPoly.from_coeffs([1, -alpha])
    pre = [p for p, _ in f_a_limit(P, a).phi.preimages(as_point(alpha))]
    if len(pre) != 2:
        raise ConstraintViolationError("alpha has a double preimage for this a", field="a")
    inf, al = ProjPoint.infinity(EXACT), as_point(alpha)
    return _bracket(pre[1], inf) * _bracket(pre[0], al) / (_bracket(pre[1], al) * _bracket(pre[0], inf))


def chi_closed_form(alpha, a) -> complex:
    """(a + alpha + sqrt(D)) / (a + alpha - sqrt(D)), D = (a - alpha)^2 + 4 alpha (a - alpha)"""
    a, alpha = complex(a), complex(alpha)
    root = np.sqrt(complex((a - alpha) ** 2 + 4 * alpha * (a - alpha)))
    return (a + alpha + root) / (a + alpha - root)


def cross_ratio_witness(
    d: int, a_values: Sequence, kind: str = "fixed", P: Optional[HomPoly] = None
) -> Dict[str, List[complex]]:
    """Conjugation invariants per parameter a

    kind "fixed" and "preimage" use f_a (P of degree d - 1); kind
    "constant" uses h_a (P of degree d - 2, d >= 5).
    """
    if kind == "constant":
        P = default_counterexample_poly(d - 2) if P is None else P
        fn = constant_value_witness
    elif kind in ("fixed", "preimage"):
        P = default_counterexample_poly(d - 1) if P is None else P
        fn = fixed_point_witness if kind == "fixed" else preimage_witness
    else:
        raise InvalidInputError("kind", f"unknown witness kind {kind!r}")
    return {str(a): fn(P, a) for a in a_values}


def witnesses_differ(u: Sequence[complex], v: Sequence[complex], tol: float = 1e-8) -> bool:
    """True when the two sorted invariant lists differ beyond tol (relative)"""
    if len(u) != len(v):
        return True
    for x, y in zip(u, v):
        if math.isinf(abs(x)) or math.isinf(abs(y)):
            if math.isinf(abs(x)) != math.isinf(abs(y)):
                return True
            continue
        if abs(x - y) > tol * max(1.0, abs(x), abs(y)):
            return True
    return False
