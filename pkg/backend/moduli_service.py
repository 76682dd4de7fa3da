"""
Degree-2 moduli computations.

Milnor coordinates (sigma_1 : sigma_2 : 1) on M_2, the boundary line
(1 : a + 1/a : 0) of classes [Lambda_a], tau^2 for disks through the
indeterminacy points and the limits of Phi_n(f) = [f^n] along such disks.
Extended complex values (tau^2 in particular) are carried as ProjPoint,
with (1:0) standing for infinity.
"""

import cmath
import contextvars
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from boundary_families import F_family, G_tau, P_family, as_point, lambda_iterate, lambda_map
from dynamics_config import get_settings
from dynamics_errors import (
    BaseLocusError,
    DegreeMismatchError,
    FiberUndeterminedError,
    InvalidInputError,
    InvariantViolation,
    NotBoundaryPointError,
    TauConvergenceError,
)
from polyhom import (
    FLOAT_INFINITY_RATIO,
    HomPoly,
    ProjPoint,
    derivative_w,
    derivative_z,
    evaluate,
    exact_sqrt,
    mul,
    roots,
    sub,
    vector_projective_distance,
)
from ratbar import Mobius, RatbarPoint, conjugate, from_map, iterate, normalize
from scalar_field import EXACT, FLOAT, GaussianRational, Scalar, backend_of, make

logger = logging.getLogger(__name__)

INFINITY = ProjPoint.infinity(EXACT)
# (2 cos(2 pi k/q)) is rational exactly for these orders
RATIONAL_TRACE_ORDERS = (1, 2, 3, 4, 6)
ROOT_OF_UNITY_SEARCH = 24


def _uniform(values: Sequence) -> List[Scalar]:
    """Lift scalars to a common backend: exact when every value is exact"""
    if all(isinstance(v, (int, Fraction, GaussianRational)) for v in values):
        return [make(v, EXACT) for v in values]
    return [complex(v) for v in values]


def scalar_sqrt(x: Scalar) -> Scalar:
    """Square root, exact in Q(i) when possible, else on the principal branch"""
    if isinstance(x, GaussianRational):
        root = exact_sqrt(x)
        if root is not None:
            return root
    return cmath.sqrt(complex(x))


def zeta_of(q: int, k: int = 1) -> Scalar:
    """e^(2 pi i k/q), exact for q in {1, 2, 4}"""
    k %= q
    if q == 1 or k == 0:
        return make(1, EXACT)
    if q == 2:
        return make(-1, EXACT)
    if q == 4:
        return GaussianRational(0, 1) if k == 1 else GaussianRational(0, -1)
    return cmath.exp(2j * math.pi * k / q)


# ---------------------------------------------------------------------------
# multipliers and Milnor coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplierTriple:
    """Multipliers at the three fixed points (with multiplicity)"""

    values: Tuple[Scalar, Scalar, Scalar]
    fixed_points: Tuple[ProjPoint, ...] = ()

    @property
    def backend(self) -> str:
        return backend_of(self.values[0])

    @property
    def sigma1(self) -> Scalar:
        a, b, c = self.values
        return a + b + c

    @property
    def sigma2(self) -> Scalar:
        a, b, c = self.values
        return a * b + a * c + b * c

    @property
    def sigma3(self) -> Scalar:
        a, b, c = self.values
        return a * b * c

    def residue_defect(self) -> float:
        """|sigma_3 - (sigma_1 - 2)|"""
        return abs(complex(self.sigma3 - (self.sigma1 - 2)))

    def labeled(self, zeta: Scalar) -> Tuple[complex, complex, complex]:
        """(alpha, beta, gamma): gamma the largest, alpha the one nearer zeta"""
        vals = sorted((complex(v) for v in self.values), key=abs)
        small, gamma = vals[:2], vals[2]
        z = complex(zeta)
        alpha, beta = sorted(small, key=lambda v: abs(v - z))
        return alpha, beta, gamma


def _multiplier_at(p: HomPoly, q: HomPoly, pt: ProjPoint) -> Scalar:
    if not (pt.is_exact and p.backend == EXACT):
        p, q, pt = p.to_float(), q.to_float(), pt.to_float()
    if pt.is_infinity:
        # chart u = 1/z: q(1,u)/p(1,u) has derivative q_1/p_0 at u = 0
        return q.coeffs[1] / p.coeffs[0]
    pv, qv = evaluate(p, pt), evaluate(q, pt)
    dp, dq = evaluate(derivative_z(p), pt), evaluate(derivative_z(q), pt)
    return (dp * qv - pv * dq) / (qv * qv)


def multipliers(f: RatbarPoint) -> MultiplierTriple:
    """Fixed-point multipliers of a degree-2 map without holes"""
    if f.is_boundary or f.phi_degree != 2:
        raise InvalidInputError("f", "multipliers need a degree-2 map without holes")
    p, q = f.phi.p, f.phi.q
    backend = f.backend
    fixed_eq = sub(mul(HomPoly.monomial(0, 1, backend), p), mul(HomPoly.monomial(1, 0, backend), q))
    values, points = [], []
    for pt, m in roots(fixed_eq):
        if m > 1:
            # a multiple fixed point is parabolic with multiplier 1
            values.extend([make(1, EXACT)] * m)
        else:
            values.append(_multiplier_at(p, q, pt))
        points.extend([pt] * m)
    triple = MultiplierTriple(tuple(_uniform(values)), tuple(points))

    settings = get_settings()
    defect = triple.residue_defect()
    if defect > settings.tol_sigma * max(1.0, abs(complex(triple.sigma1))):
        logger.error(f"Residue relation off by {defect:.3g} for multipliers {triple.values}")
        raise InvariantViolation(f"sigma_3 - (sigma_1 - 2) = {defect:.3g}")
    return triple


@dataclass(frozen=True)
class ModuliPoint2:
    """Point (x1 : x2 : x3) of Mbar_2 = P^2 in canonical form

    Interior points are (sigma_1 : sigma_2 : 1); boundary points are
    (1 : a + 1/a : 0), or (0 : 1 : 0) for a in {0, infinity}.
    """

    x1: Scalar
    x2: Scalar
    x3: Scalar

    @staticmethod
    def of(x1, x2, x3) -> "ModuliPoint2":
        x1, x2, x3 = _uniform([x1, x2, x3])
        if isinstance(x1, GaussianRational):
            if x3:
                return ModuliPoint2(x1 / x3, x2 / x3, make(1, EXACT))
            if x1:
                return ModuliPoint2(make(1, EXACT), x2 / x1, make(0, EXACT))
            if x2:
                return ModuliPoint2(make(0, EXACT), make(1, EXACT), make(0, EXACT))
            raise InvalidInputError("point", "(0:0:0) is not a point of P^2")
        scale = max(abs(x1), abs(x2), abs(x3))
        if scale == 0:
            raise InvalidInputError("point", "(0:0:0) is not a point of P^2")
        if abs(x3) > FLOAT_INFINITY_RATIO * scale:
            return ModuliPoint2(x1 / x3, x2 / x3, 1 + 0j)
        if abs(x1) > FLOAT_INFINITY_RATIO * scale:
            return ModuliPoint2(1 + 0j, x2 / x1, 0j)
        return ModuliPoint2(0j, 1 + 0j, 0j)

    @property
    def backend(self) -> str:
        return backend_of(self.x1)

    @property
    def is_boundary(self) -> bool:
        return not self.x3

    def boundary_parameter(self) -> ProjPoint:
        """a with [Lambda_a] = self, chosen with |a| >= 1"""
        if not self.is_boundary:
            raise NotBoundaryPointError(f"{self} is an interior point of M_2")
        if not self.x1:
            return ProjPoint.infinity(self.backend)
        c = self.x2
        s = scalar_sqrt(c * c - 4)
        if isinstance(s, GaussianRational):
            candidates = [(c + s) / 2, (c - s) / 2]
        else:
            candidates = [(complex(c) + s) / 2, (complex(c) - s) / 2]
        a = max(candidates, key=lambda r: (round(abs(complex(r)), 12), complex(r).imag))
        return ProjPoint.affine(a)

    def to_vector(self) -> np.ndarray:
        return np.array([complex(self.x1), complex(self.x2), complex(self.x3)])

    def distance(self, other: "ModuliPoint2") -> float:
        return vector_projective_distance(self.to_vector(), other.to_vector())

    def to_list(self) -> List[Scalar]:
        return [self.x1, self.x2, self.x3]

    def __str__(self):
        def fmt(x):
            return str(x) if isinstance(x, GaussianRational) else f"{complex(x):.10g}"

        return f"({fmt(self.x1)} : {fmt(self.x2)} : {fmt(self.x3)})"


def milnor_point(f: RatbarPoint) -> ModuliPoint2:
    m = multipliers(f)
    return ModuliPoint2.of(m.sigma1, m.sigma2, 1)


def boundary_point(a) -> ModuliPoint2:
    """[Lambda_a] = (1 : a + 1/a : 0); a and 1/a give the same point"""
    pt = as_point(a)
    if pt.is_infinity or pt.z == 0:
        return ModuliPoint2.of(0, 1, 0)
    return ModuliPoint2.of(1, pt.z + 1 / pt.z, 0)


def indeterminacy_set(n: int) -> List[ModuliPoint2]:
    """[Lambda_zeta] for primitive q-th roots zeta, 2 <= q <= n, one per pair zeta ~ 1/zeta"""
    if n < 2:
        raise InvalidInputError("n", "the indeterminacy set is defined for n >= 2")
    return [boundary_point_of_order(q, k) for q, k in _primitive_pairs(n)]


def _primitive_pairs(n: int, first: int = 2) -> List[Tuple[int, int]]:
    return [(q, k) for q in range(first, n + 1) for k in range(1, q // 2 + 1) if math.gcd(k, q) == 1]


def boundary_point_of_order(q: int, k: int = 1) -> ModuliPoint2:
    trace = 2 * math.cos(2 * math.pi * k / q)
    if q in RATIONAL_TRACE_ORDERS:
        return ModuliPoint2.of(1, int(round(trace)), 0)
    return ModuliPoint2.of(1, trace, 0)


def match_indeterminacy(base: ModuliPoint2, max_q: int, min_q: int = 2) -> Optional[Tuple[int, int]]:
    """(q, k) when base = [Lambda_zeta] for zeta = e^(2 pi i k/q) with min_q <= q <= max_q"""
    if not base.is_boundary or not base.x1:
        return None
    tol = get_settings().tol_tau_label
    pairs = _primitive_pairs(max_q, first=max(min_q, 2))
    if min_q <= 1:
        pairs = [(1, 0)] + pairs
    for q, k in pairs:
        target = ModuliPoint2.of(1, 2, 0) if q == 1 else boundary_point_of_order(q, k)
        if base.backend == EXACT and target.backend == EXACT:
            if base == target:
                return q, k
        elif abs(complex(base.x2) - complex(target.x2)) <= tol:
            return q, k
    return None


def cross_ratio(a: ProjPoint, b: ProjPoint, c: ProjPoint, d: ProjPoint) -> ProjPoint:
    """[d,a][c,b] / ([d,b][c,a]) with [x,y] = x_z y_w - x_w y_z; (0, inf, 1, x) gives x"""
    pts = [a, b, c, d]
    backend = EXACT if all(p.is_exact for p in pts) else FLOAT
    a, b, c, d = (p.to_backend(backend) for p in pts)

    def br(x, y):
        return x.z * y.w - x.w * y.z

    return ProjPoint.of(br(d, a) * br(c, b), br(d, b) * br(c, a))


def nf_map(alpha, beta) -> RatbarPoint:
    """f(z) = z((1-a)z + a(1-b)) / (b(1-a)z + (1-b)): fixed at 0, inf, 1 with multipliers a, b"""
    alpha, beta = _uniform([alpha, beta])
    if alpha == 1 or beta == 1 or alpha * beta == 1:
        raise InvalidInputError("alpha,beta", "normal form needs alpha, beta != 1 and alpha*beta != 1")
    backend = backend_of(alpha)
    one = make(1, backend)
    zero = make(0, backend)
    p = HomPoly((one - alpha, alpha * (one - beta), zero), backend)
    q = HomPoly((zero, beta * (one - alpha), one - beta), backend)
    return from_map(p, q)


def third_multiplier(alpha, beta) -> Scalar:
    """gamma from the residue relation: (alpha + beta - 2)/(alpha beta - 1)"""
    alpha, beta = _uniform([alpha, beta])
    return (alpha + beta - 2) / (alpha * beta - 1)


def map_from_sigma(sigma1, sigma2) -> RatbarPoint:
    """A representative of the class with Milnor coordinates (sigma1, sigma2)"""
    sigma1, sigma2 = _uniform([sigma1, sigma2])
    backend = backend_of(sigma1)
    one = make(1, backend)
    cubic = HomPoly((one, -sigma1, sigma2, -(sigma1 - 2)), backend)
    vals = _uniform([pt.z for pt, m in roots(cubic) for _ in range(m)])
    tol = get_settings().tol_root

    def badness(a, b):
        return min(abs(complex(1 - a)), abs(complex(1 - b)), abs(complex(1 - a * b)))

    pairs = [(vals[0], vals[1]), (vals[0], vals[2]), (vals[1], vals[2])]
    alpha, beta = max(pairs, key=lambda ab: badness(*ab))
    if badness(alpha, beta) > tol:
        return nf_map(alpha, beta)
    gamma = max(vals, key=lambda v: abs(complex(v - 1)))
    if abs(complex(gamma - 1)) <= tol:
        # triple parabolic point: z + 1/z
        return from_map(HomPoly.from_coeffs([1, 0, 1], backend), HomPoly.monomial(1, 1, backend))
    # double parabolic point at infinity: z + tau + 1/z with 1 - tau^2 = gamma
    return G_tau(scalar_sqrt(1 - gamma))


def critical_normal_form(f: RatbarPoint, fixed_point: Optional[ProjPoint] = None) -> Tuple[RatbarPoint, Mobius]:
    """Conjugate f so its critical points sit at +1, -1 and a chosen fixed point at 0"""
    if f.is_boundary or f.phi_degree != 2:
        raise InvalidInputError("f", "critical normal form needs a degree-2 map without holes")
    phi = f.phi.to_float()
    p, q = phi.p, phi.q
    jac = sub(mul(derivative_z(p), derivative_w(q)), mul(derivative_w(p), derivative_z(q)))
    crit = [pt for pt, m in roots(jac) for _ in range(m)]
    if len(crit) != 2:
        raise InvalidInputError("f", "expected two critical points")
    c1, c2 = crit
    if fixed_point is None:
        fixed_point = multipliers(f.to_float()).fixed_points[0]
    p0 = fixed_point.to_float()

    def br(x, y):
        return x.z * y.w - x.w * y.z

    k = br(c1, c2)
    m = br(c1, p0)
    # T sends p0 -> 0, c2 -> inf, c1 -> 1; U sends (0, inf, 1) -> (0, -1, 1)
    T = np.array([[k * p0.w, -k * p0.z], [m * c2.w, -m * c2.z]], dtype=complex)
    U = np.array([[1, 0], [-1, 2]], dtype=complex)
    M = Mobius.from_matrix(U @ T)
    return conjugate(f.to_float(), M), M


# ---------------------------------------------------------------------------
# disk families
# ---------------------------------------------------------------------------


def _series_eval(coeffs: Sequence[Scalar], t) -> Scalar:
    if isinstance(t, (float, complex)):
        coeffs = [complex(c) for c in coeffs]
    acc = coeffs[-1] * 0 if coeffs else 0
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def _series_mul(a: Sequence[Scalar], b: Sequence[Scalar]) -> List[Scalar]:
    out = [a[0] * 0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = out[i + j] + x * y
    return out


def _series_pow(a: Sequence[Scalar], k: int) -> List[Scalar]:
    out = [a[0] * 0 + 1]
    for _ in range(k):
        out = _series_mul(out, a)
    return out


def _series_order(coeffs: Sequence[Scalar], tol: float) -> Optional[int]:
    if coeffs and isinstance(coeffs[0], GaussianRational):
        return next((i for i, c in enumerate(coeffs) if c), None)
    scale = max([1.0] + [abs(complex(c)) for c in coeffs])
    return next((i for i, c in enumerate(coeffs) if abs(complex(c)) > tol * scale), None)


class DiskKind(Enum):
    NF = "nf"
    LINE = "line"
    CONIC = "conic"
    COEFF_PATH = "coeff_path"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class DiskFamily:
    """A holomorphic path t -> [f_t] in Mbar_2, evaluated for t in (0, t_max]

    nf          alpha(t), beta(t) polynomial, f_t the normal form with those multipliers
    line        (1 : -2 + a t : b t)
    conic       (1 : zeta + 1/zeta + a t : b^2 t^2), zeta = e^(2 pi i k/q)
    coeff_path  (P(t) : Q(t)) with P, Q polynomial in t (lists of HomPoly, ascending)
    boundary    [Lambda_alpha(t)], a path inside the boundary line
    """

    kind: DiskKind
    alpha: Tuple[Scalar, ...] = ()
    beta: Tuple[Scalar, ...] = ()
    a: Scalar = 0
    b: Scalar = 1
    q: int = 2
    k: int = 1
    P: Tuple[HomPoly, ...] = ()
    Q: Tuple[HomPoly, ...] = ()
    t_max: float = 1.0

    @staticmethod
    def nf(alpha: Sequence, beta: Sequence) -> "DiskFamily":
        vals = _uniform(list(alpha) + list(beta))
        return DiskFamily(DiskKind.NF, alpha=tuple(vals[: len(alpha)]), beta=tuple(vals[len(alpha):]))

    @staticmethod
    def line(a, b) -> "DiskFamily":
        a, b = _uniform([a, b])
        return DiskFamily(DiskKind.LINE, a=a, b=b, q=2)

    @staticmethod
    def conic(a, b, q: int, k: int = 1) -> "DiskFamily":
        if q < 3:
            raise InvalidInputError("q", "conic families approach [Lambda_zeta] with q >= 3")
        a, b = _uniform([a, b])
        return DiskFamily(DiskKind.CONIC, a=a, b=b, q=q, k=k)

    @staticmethod
    def coeff_path(P: Sequence[HomPoly], Q: Sequence[HomPoly]) -> "DiskFamily":
        if not P or not Q:
            raise InvalidInputError("P,Q", "coefficient paths need at least one term")
        degrees = {h.degree for h in list(P) + list(Q)}
        if degrees != {2}:
            raise DegreeMismatchError("coefficient-path terms must all have degree 2", field="P,Q")
        return DiskFamily(DiskKind.COEFF_PATH, P=tuple(P), Q=tuple(Q))

    @staticmethod
    def boundary(alpha: Sequence) -> "DiskFamily":
        return DiskFamily(DiskKind.BOUNDARY, alpha=tuple(_uniform(list(alpha))))

    def zeta(self) -> Scalar:
        return zeta_of(self.q, self.k)

    def _check_t(self, t):
        if not 0 < abs(complex(t)) <= self.t_max:
            raise InvalidInputError("t", f"t must lie in (0, {self.t_max}]")

    def sigma_at(self, t) -> ModuliPoint2:
        self._check_t(t)
        if self.kind == DiskKind.LINE:
            a, b, t = _uniform([self.a, self.b, t])
            return ModuliPoint2.of(1, -2 + a * t, b * t)
        if self.kind == DiskKind.CONIC:
            zeta, a, b, t = _uniform([self.zeta(), self.a, self.b, t])
            return ModuliPoint2.of(1, zeta + 1 / zeta + a * t, b * b * t * t)
        if self.kind == DiskKind.BOUNDARY:
            return boundary_point(_series_eval(self.alpha, t))
        if self.kind == DiskKind.NF:
            alpha, beta = _series_eval(self.alpha, t), _series_eval(self.beta, t)
            gamma = third_multiplier(alpha, beta)
            return ModuliPoint2.of(alpha + beta + gamma, alpha * beta + alpha * gamma + beta * gamma, 1)
        return milnor_point(self.at(t))

    def at(self, t) -> RatbarPoint:
        """A representative f_t"""
        self._check_t(t)
        if self.kind == DiskKind.NF:
            return nf_map(_series_eval(self.alpha, t), _series_eval(self.beta, t))
        if self.kind == DiskKind.COEFF_PATH:
            return normalize(path_eval(self.P, t), path_eval(self.Q, t))
        point = self.sigma_at(t)
        if point.is_boundary:
            return lambda_map(point.boundary_parameter())
        return map_from_sigma(point.x1, point.x2)

    def base_point(self) -> ModuliPoint2:
        """Delta(0)"""
        if self.kind == DiskKind.LINE:
            return ModuliPoint2.of(1, -2, 0)
        if self.kind == DiskKind.CONIC:
            return boundary_point_of_order(self.q, self.k)
        if self.kind == DiskKind.BOUNDARY:
            return boundary_point(self.alpha[0])
        if self.kind == DiskKind.NF:
            a0, b0 = self.alpha[0], self.beta[0]
            if abs(complex(1 - a0 * b0)) <= get_settings().tol_root:
                return boundary_point(a0)
            gamma = third_multiplier(a0, b0)
            return ModuliPoint2.of(a0 + b0 + gamma, a0 * b0 + a0 * gamma + b0 * gamma, 1)
        return _coeff_path_base(self)


def path_eval(terms: Sequence[HomPoly], t) -> HomPoly:
    backend = terms[0].backend
    if backend == EXACT and isinstance(t, (float, complex)):
        terms = [h.to_float() for h in terms]
        backend = FLOAT
    t = make(t, backend)
    acc = HomPoly.zero_poly(2, backend)
    for h in reversed(terms):
        acc = acc * t + h.to_backend(backend)
    return acc


def _coeff_path_base(family: DiskFamily) -> ModuliPoint2:
    f0 = normalize(path_eval(family.P, 0), path_eval(family.Q, 0))
    if not f0.is_boundary and f0.phi_degree == 2:
        return milnor_point(f0)
    settings = get_settings()
    ts = _t_grid(settings.tau_t0, min(settings.tau_levels, 14))
    pts = [family.sigma_at(t) for t in ts]
    use_x2_chart = abs(complex(pts[-1].x2)) > 1e6 * abs(complex(pts[-1].x1))
    if use_x2_chart:
        u = [complex(p.x1) / complex(p.x2) for p in pts]
        v = [complex(p.x3) / complex(p.x2) for p in pts]
    else:
        u = [complex(p.x2) / complex(p.x1) for p in pts]
        v = [complex(p.x3) / complex(p.x1) for p in pts]
    u0, _, _ = richardson_limit(ts, u, settings.tol_tau)
    v0, _, _ = richardson_limit(ts, v, settings.tol_tau)
    if abs(v0) <= settings.tol_tau_label:
        v0 = 0
    base = ModuliPoint2.of(u0, 1, v0) if use_x2_chart else ModuliPoint2.of(1, u0, v0)
    logger.debug(f"Extrapolated base point {base}")
    return base


def basilica_disk() -> DiskFamily:
    """(z^2 - w^2 : (-1 + t) z^2 + w^2), approaching [Lambda_-1] with tau^2 = 1"""
    z2 = HomPoly.monomial(2, 0, EXACT)
    w2 = HomPoly.monomial(0, 2, EXACT)
    return DiskFamily.coeff_path([z2 - w2], [w2 - z2, z2])


def nf_family_for_tau2(q: int, tau2, k: int = 1) -> DiskFamily:
    """alpha = zeta + t, beta = 1/zeta - t/zeta^2 + c t^2 with c tuned to the requested tau^2"""
    zeta = zeta_of(q, k)
    tau2 = tau2 if isinstance(tau2, ProjPoint) else as_point(tau2)
    if not tau2.is_infinity and tau2.z == 0:
        return DiskFamily.nf([zeta, 1], [1 / zeta, 2])
    if tau2.is_infinity:
        c = 1 / zeta ** 3
    else:
        vals = _uniform([zeta, tau2.z])
        zeta, t2 = vals
        c = (1 - q * q / t2) / zeta ** 3
    return DiskFamily.nf([zeta, 1], [1 / zeta, -1 / (zeta * zeta), c])


# ---------------------------------------------------------------------------
# tau^2
# ---------------------------------------------------------------------------


def _t_grid(t0: float, levels: int) -> List[float]:
    return [t0 * 2.0 ** -j for j in range(levels)]


def richardson_limit(
    nodes: Sequence[float], values: Sequence[complex], tol: float, max_order: int = 8
) -> Tuple[complex, float, bool]:
    """Polynomial extrapolation to 0 (Neville) along decreasing nodes

    Returns (estimate, error estimate, converged). Stops early once the
    error estimate has grown for three consecutive levels.
    """
    best = (complex(values[0]), math.inf)
    prev_row: List[complex] = []
    rising = 0
    last_err = math.inf
    for j, x_j in enumerate(nodes):
        row = [complex(values[j])]
        for k in range(1, min(j, max_order) + 1):
            x_lo = nodes[j - k]
            row.append((x_lo * row[k - 1] - x_j * prev_row[k - 1]) / (x_lo - x_j))
        prev_row = row
        if len(row) < 2:
            continue
        est, err = row[-1], abs(row[-1] - row[-2])
        if not (np.isfinite(est.real) and np.isfinite(est.imag)):
            break
        if err < best[1]:
            best = (est, err)
        if err <= tol * max(1.0, abs(est)):
            return est, err, True
        rising = rising + 1 if err > last_err else 0
        last_err = err
        if rising >= 3:
            break
    est, err = best
    return est, err, err <= tol * max(1.0, abs(est))


def _unity_gap(x: complex, q: int) -> complex:
    """x^q - 1 as a product over the q-th roots of unity"""
    out = 1 + 0j
    for j in range(q):
        out *= x - cmath.exp(2j * math.pi * j / q)
    return out


def _split_from_moduli(point: ModuliPoint2) -> Tuple[complex, complex, complex]:
    """(alpha, beta, eps) near the boundary from (1 : u : e), deflating the large multiplier

    The cubic e x^3 - x^2 + u x - (1 - 2e) factors as e (x - gamma)(x^2 - S x + Pr);
    S and Pr solve S = u + e (S^2 - Pr), Pr = (1 - 2e)/(1 - e S).
    """
    if not point.x1:
        raise BaseLocusError("the path leaves the chart x1 = 1")
    e = complex(point.x3) / complex(point.x1)
    u = complex(point.x2) / complex(point.x1)
    S, Pr = u, 1 + 0j
    for _ in range(200):
        Pr_next = (1 - 2 * e) / (1 - e * S)
        S_next = u + e * (S * S - Pr_next)
        done = abs(S_next - S) <= 1e-16 * max(1.0, abs(S))
        S, Pr = S_next, Pr_next
        if done:
            break
    eps = e * (2 - S) / (1 - e * S)
    disc = cmath.sqrt(S * S - 4 * Pr)
    big = (S + disc) / 2 if abs(S + disc) >= abs(S - disc) else (S - disc) / 2
    small = Pr / big if big else 0j
    return big, small, eps


def _tau_sample(family: DiskFamily, t: float) -> Tuple[complex, complex, complex]:
    """(alpha, beta, eps(t)) for the two multipliers tending to the boundary pair"""
    if family.kind == DiskKind.NF:
        alpha = complex(_series_eval(family.alpha, t))
        beta = complex(_series_eval(family.beta, t))
        prod = _series_mul(list(family.alpha), list(family.beta))
        eps = complex(1 - prod[0]) - complex(_series_eval(list(prod[1:]) or [0], t)) * t
        return alpha, beta, eps
    if family.kind in (DiskKind.LINE, DiskKind.CONIC):
        return _split_from_moduli(family.sigma_at(t))
    alpha, beta, gamma = multipliers(family.at(t)).labeled(1)
    return alpha, beta, (2 - alpha - beta) / gamma


def _evaluate_grid(fn: Callable, ts: Sequence[float]) -> list:
    workers = get_settings().workers
    if workers <= 1:
        return [fn(t) for t in ts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(contextvars.copy_context().run, fn, t) for t in ts]
        return [f.result() for f in futures]


@dataclass
class TauResult:
    value: ProjPoint
    method: str
    q: int
    error_estimate: float = 0.0
    label_gap: float = 0.0
    levels: int = 0

    @property
    def is_infinite(self) -> bool:
        return self.value.is_infinity


def tau_squared_closed_form(family: DiskFamily, q: Optional[int] = None) -> ProjPoint:
    """(b - a)/b on lines through [Lambda_-1]; -q^2 a^2 zeta^3 / (b^2 (zeta^2-1)^2 (zeta-1)^2) on conics"""
    if family.kind == DiskKind.LINE:
        if q not in (None, 2):
            raise BaseLocusError(f"lines pass through [Lambda_-1], not a point of order {q}")
        a, b = _uniform([family.a, family.b])
        if b == 0:
            return INFINITY
        return ProjPoint.affine((b - a) / b)
    if family.kind == DiskKind.CONIC:
        if q not in (None, family.q):
            raise BaseLocusError(f"conic is tangent at a point of order {family.q}, not {q}")
        zeta, a, b = _uniform([family.zeta(), family.a, family.b])
        if b == 0:
            return INFINITY
        qq = family.q
        return ProjPoint.affine(-(qq * qq) * a * a * zeta ** 3 / (b * b * (zeta * zeta - 1) ** 2 * (zeta - 1) ** 2))
    raise InvalidInputError("family", f"no closed form for {family.kind.value} families")


def _tau_series(family: DiskFamily, q: int) -> ProjPoint:
    """Exact limit of (alpha^q - 1)^2 / (1 - alpha beta) from the leading terms"""
    alpha, beta = list(family.alpha), list(family.beta)
    num = _series_pow(_series_add_const(_series_pow(alpha, q), -1), 2)
    prod = _series_mul(alpha, beta)
    eps = [1 - prod[0]] + [-c for c in prod[1:]]
    tol = get_settings().tol_root
    on, oe = _series_order(num, tol), _series_order(eps, tol)
    if oe is None:
        return INFINITY
    if on is None or on > oe:
        return ProjPoint.affine(make(0, backend_of(eps[0])))
    if on < oe:
        return INFINITY
    return ProjPoint.affine(num[on] / eps[oe])


def _series_add_const(a: List[Scalar], c) -> List[Scalar]:
    out = list(a)
    out[0] = out[0] + c
    return out


def _check_base(family: DiskFamily, q: int) -> Tuple[int, int]:
    base = family.base_point()
    match = match_indeterminacy(base, max(q, 2))
    if match is None or match[0] != q:
        logger.error(f"Disk base {base} is not [Lambda_zeta] for a primitive {q}-th root")
        raise BaseLocusError(f"base point {base} is not on the indeterminacy locus for q={q}")
    return match


def tau_squared(family: DiskFamily, q: int, numeric: bool = False) -> TauResult:
    """tau^2 = lim (alpha(t)^q - 1)^2 / (1 - alpha(t) beta(t)) along the disk"""
    if family.kind == DiskKind.BOUNDARY:
        return TauResult(INFINITY, "boundary", q)
    _check_base(family, q)
    if not numeric:
        if family.kind in (DiskKind.LINE, DiskKind.CONIC):
            return TauResult(tau_squared_closed_form(family, q), "closed_form", q)
        if family.kind == DiskKind.NF:
            return TauResult(_tau_series(family, q), "series", q)
    return tau_squared_numeric(family, q)


def tau_squared_numeric(family: DiskFamily, q: int) -> TauResult:
    """Richardson extrapolation on t_j = t0 2^-j of the symmetric quotient

    The symmetric combination ((A^2 + B^2)/2)/eps with A = alpha^q - 1 and
    B = beta^q - 1 is analytic in t. For q = 2 the labeled quotients are
    analytic in sqrt(t) with labels followed by continuation; both
    labelings must extrapolate to the same value.
    """
    settings = get_settings()
    k = _check_base(family, q)[1]
    zeta = complex(zeta_of(q, k))
    ts = _t_grid(min(settings.tau_t0, family.t_max), settings.tau_levels)
    samples = _evaluate_grid(lambda t: _tau_sample(family, t), ts)

    t_alpha, t_beta, t_sym = [], [], []
    prev = None
    for t, (x, y, eps) in zip(ts, samples):
        if q == 2 and prev is not None:
            target = -1 + (prev[0] + 1) * math.sqrt(t / prev[1])
            alpha, beta = (x, y) if abs(x - target) <= abs(y - target) else (y, x)
        else:
            alpha, beta = (x, y) if abs(x - zeta) <= abs(y - zeta) else (y, x)
        prev = (alpha, t)
        A, B = _unity_gap(alpha, q), _unity_gap(beta, q)
        t_alpha.append(A * A / eps)
        t_beta.append(B * B / eps)
        t_sym.append((A * A + B * B) / (2 * eps))

    value, err, ok = richardson_limit(ts, t_sym, settings.tol_tau)
    if not ok or abs(value) > 1 / settings.tol_tau:
        inv, inv_err, inv_ok = richardson_limit(ts, [1 / v for v in t_sym], settings.tol_tau)
        if inv_ok and abs(inv) <= settings.tol_tau_label:
            logger.info(f"tau^2 = infinity (1/tau^2 -> {abs(inv):.2g})")
            return TauResult(INFINITY, "richardson", q, inv_err, 0.0, len(ts))
        logger.error(f"tau^2 extraction did not settle: error estimate {err:.3g}")
        raise TauConvergenceError(f"tau^2 sequence did not converge (error estimate {err:.3g})")

    nodes = [math.sqrt(t) for t in ts] if q == 2 else ts
    va, _, _ = richardson_limit(nodes, t_alpha, settings.tol_tau)
    vb, _, _ = richardson_limit(nodes, t_beta, settings.tol_tau)
    gap = abs(va - vb)
    if gap > settings.tol_tau_label * max(1.0, abs(value)):
        logger.error(f"Root labelings give tau^2 = {va:.8g} and {vb:.8g}")
        raise TauConvergenceError(f"labelings disagree by {gap:.3g}")
    logger.debug(f"tau^2 = {value:.10g} (error {err:.2g}, label gap {gap:.2g})")
    return TauResult(ProjPoint.affine(value), "richardson", q, err, gap, len(ts))


# ---------------------------------------------------------------------------
# iterate limits
# ---------------------------------------------------------------------------


class LimitKind(Enum):
    INTERIOR = "interior"
    LAMBDA = "lambda"
    F = "F"
    P = "P"


@dataclass
class LimitClass:
    """The class lim [f_t^n] in Mbar_{2^n}, with a representative"""

    kind: LimitKind
    n: int
    base: ModuliPoint2
    representative: RatbarPoint = field(repr=False)
    q: Optional[int] = None
    tau: Optional[Scalar] = None
    parameter: Optional[ProjPoint] = None

    def member(self) -> Optional["FamilyMember"]:
        if self.kind == LimitKind.F:
            return FamilyMember("F", self.q, self.n, self.tau)
        if self.kind == LimitKind.P:
            return FamilyMember("P", self.q, self.n)
        return None


def limit_from_data(
    base: ModuliPoint2, n: int, q: Optional[int] = None, tau2: Optional[ProjPoint] = None
) -> LimitClass:
    """Limit class at level n from the base point and, on I(Phi_n), the fiber (q, tau^2)"""
    if n < 1:
        raise InvalidInputError("n", "n must be at least 1")
    if not base.is_boundary:
        rep = iterate(map_from_sigma(base.x1, base.x2), n)
        return LimitClass(LimitKind.INTERIOR, n, base, rep)

    found = match_indeterminacy(base, max(n, ROOT_OF_UNITY_SEARCH), min_q=1)
    if found is None or found[0] == 1 or found[0] > n:
        param = base.boundary_parameter() if found is None else ProjPoint.affine(zeta_of(*found))
        return LimitClass(LimitKind.LAMBDA, n, base, lambda_iterate(param, n), parameter=param)

    order = found[0]
    if q is not None and q != order:
        raise BaseLocusError(f"fiber order {q} does not match the base point order {order}")
    if tau2 is None:
        raise FiberUndeterminedError(f"base {base} lies on I(Phi_{n}); tau^2 is needed")
    if tau2.is_infinity:
        return LimitClass(LimitKind.P, n, base, P_family(order, n), q=order)
    tau = scalar_sqrt(tau2.z)
    return LimitClass(LimitKind.F, n, base, F_family(order, tau, n), q=order, tau=tau)


def classify_limit(family: DiskFamily, n: int) -> LimitClass:
    """lim_{t->0} [f_t^n]"""
    base = family.base_point()
    match = match_indeterminacy(base, n)
    if match is None:
        return limit_from_data(base, n)
    q = match[0]
    tau = tau_squared(family, q)
    logger.info(f"Disk through [Lambda_zeta], q={q}: tau^2 = {tau.value} ({tau.method})")
    return limit_from_data(base, n, q, tau.value)


@dataclass(frozen=True)
class FamilyMember:
    """F_{q,tau,n} (kind "F") or P_{q,n} (kind "P")"""

    kind: str
    q: int
    n: int
    tau: Optional[Scalar] = None

    @property
    def degree(self) -> int:
        return 2 ** self.n

    def realize(self) -> RatbarPoint:
        if self.kind == "F":
            return F_family(self.q, self.tau, self.n)
        return P_family(self.q, self.n)

    def marked_points(self) -> Tuple[ProjPoint, ProjPoint, ProjPoint, ProjPoint]:
        """0, infinity and the roots p+, p- of z^2 + tau z + 1"""
        tau = complex(self.tau)
        s = cmath.sqrt(tau * tau - 4)
        return (
            ProjPoint.affine(0j),
            ProjPoint.infinity(FLOAT),
            ProjPoint.affine((-tau + s) / 2),
            ProjPoint.affine((-tau - s) / 2),
        )

    def invariant(self) -> Optional[complex]:
        """chi + 1/chi for chi = cross_ratio(0, inf, p+, p-); equals tau^2 - 2"""
        if self.kind != "F":
            return None
        chi = cross_ratio(*self.marked_points())
        if chi.is_infinity or chi.z == 0:
            return complex("inf")
        value = complex(chi.z) + 1 / complex(chi.z)
        expected = complex(self.tau) ** 2 - 2
        if abs(value - expected) > get_settings().tol_root * max(1.0, abs(expected)):
            raise InvariantViolation(f"chi + 1/chi = {value} but tau^2 - 2 = {expected}")
        return value

    def depth_at_zero(self) -> int:
        return self.realize().hole_depth(ProjPoint.affine(0))


def distinguish_classes(f: FamilyMember, g: FamilyMember) -> bool:
    """True when the two members are conjugate"""
    if f.degree != g.degree:
        raise DegreeMismatchError(f"degrees {f.degree} and {g.degree} differ")
    for m in (f, g):
        if m.n < m.q:
            raise InvalidInputError("n", f"n={m.n} is below the period q={m.q}")
    if f.kind != g.kind:
        logger.info(f"Depths at 0 differ: {f.depth_at_zero()} vs {g.depth_at_zero()}")
        return False
    if f.q != g.q:
        return False
    if f.kind == "P":
        return True
    a, b = f.invariant(), g.invariant()
    return abs(a - b) <= get_settings().tol_root * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# points of Mhat_2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MhatPoint:
    """base plus, on the indeterminacy points, the fiber coordinates (q, tau^2)"""

    base: ModuliPoint2
    q: Optional[int] = None
    tau2: Optional[ProjPoint] = None

    @property
    def has_fiber(self) -> bool:
        return self.q is not None

    def expand(self, N: int) -> List[LimitClass]:
        """([f], [f^2], ..., [f^N])"""
        return [limit_from_data(self.base, n, self.q, self.tau2) for n in range(1, N + 1)]

    def to_dict(self) -> dict:
        def enc(x):
            return str(x) if isinstance(x, GaussianRational) else [complex(x).real, complex(x).imag]

        tau2 = None
        if self.tau2 is not None:
            tau2 = "inf" if self.tau2.is_infinity else enc(self.tau2.z)
        return {"base": [enc(x) for x in self.base.to_list()], "q": self.q, "tau2": tau2}


def mhat_point(family: DiskFamily, N: int) -> MhatPoint:
    """The point of Mhat_2 reached along the disk, determined by its first N entries"""
    base = family.base_point()
    match = match_indeterminacy(base, max(N, ROOT_OF_UNITY_SEARCH))
    if match is None:
        return MhatPoint(base)
    q = match[0]
    if N < q:
        raise FiberUndeterminedError(f"N={N} is below the order q={q} of the base point")
    return MhatPoint(base, q, tau_squared(family, q).value)
