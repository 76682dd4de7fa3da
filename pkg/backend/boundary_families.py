"""
Closed-form boundary points of Ratbar_d used throughout the moduli work:
the Lambda_a line, the iterate limits F_{q,tau,n} and P_{q,n}, the reduced
map G_tau, the degree-d counterexample families and the basilica family.
"""

import logging
from fractions import Fraction
from typing import Union

from dynamics_errors import ConstraintViolationError, InvalidInputError
from polyhom import HomPoly, ProjPoint, RootList, mul, normalize as normalize_poly, power, roots
from ratbar import RatbarPoint, ReducedMap, compose, from_map, iterate, normalize
from scalar_field import EXACT, FLOAT, GaussianRational, Scalar, make

logger = logging.getLogger(__name__)

ExtendedValue = Union[ProjPoint, Scalar, int, Fraction, str]


def as_point(a: ExtendedValue) -> ProjPoint:
    """Read an extended complex number: a ProjPoint, a scalar or "inf" """
    if isinstance(a, ProjPoint):
        return a
    if isinstance(a, str):
        if a.strip().lower() in ("inf", "infinity", "oo"):
            return ProjPoint.infinity(EXACT)
        raise InvalidInputError("a", f"unrecognized extended value {a!r}")
    return ProjPoint.affine(a)


def _z(backend):
    return HomPoly.monomial(1, 0, backend)


def _w(backend):
    return HomPoly.monomial(0, 1, backend)


def _const_map(value: ProjPoint) -> ReducedMap:
    b = value.backend
    return ReducedMap(HomPoly.constant(value.z, b), HomPoly.constant(value.w, b))


def _zw_power_point(k_zero: int, k_inf: int, backend: str, phi: ReducedMap, degree: int) -> RatbarPoint:
    """Boundary point with holes 0 and infinity of the given depths and H = z^k0 w^kinf"""
    holes = RootList.combine(
        [(ProjPoint.affine(make(0, backend)), k_zero), (ProjPoint.infinity(backend), k_inf)]
    )
    h = mul(power(_z(backend), k_zero), power(_w(backend), k_inf))
    return RatbarPoint(degree=degree, phi=phi, holes=holes, h_builder=lambda: h)


# ---------------------------------------------------------------------------
# Lambda_a
# ---------------------------------------------------------------------------


def lambda_map(a: ExtendedValue) -> RatbarPoint:
    """Lambda_a in Ratbar_2: z -> a z with a hole at 1 (special forms at 0, 1, infinity)"""
    pt = as_point(a)
    backend = pt.backend
    one_pt = ProjPoint.affine(make(1, backend))
    minus_one = ProjPoint.affine(make(-1, backend))
    z, w = _z(backend), _w(backend)

    if pt.is_infinity or pt.z == 0:
        value = ProjPoint.infinity(backend) if pt.is_infinity else ProjPoint.affine(make(0, backend))
        holes = RootList.combine([(one_pt, 1), (minus_one, 1)])
        h = mul(z + w, z - w)
        return RatbarPoint(degree=2, phi=_const_map(value), holes=holes, h_builder=lambda: h)

    holes = RootList(((one_pt, 1),))
    h = z - w
    if pt.is_exact and pt.z == 1:
        phi = ReducedMap(z + w, w)
    else:
        phi = ReducedMap(HomPoly.monomial(1, 0, backend, pt.z), w)
    return RatbarPoint(degree=2, phi=phi, holes=holes, h_builder=lambda: h)


def lambda_iterate(a: ExtendedValue, n: int) -> RatbarPoint:
    """Lambda_a^n = (a^n z prod_i (z - w/a^i)^(2^(n-1-i)) : w prod ...)"""
    if n < 1:
        raise InvalidInputError("n", "n must be at least 1")
    pt = as_point(a)
    if pt.is_infinity or pt.z == 0 or (pt.is_exact and pt.z == 1):
        return iterate(lambda_map(pt), n)
    backend = pt.backend
    av = pt.z
    w = _w(backend)
    pairs = []
    for i in range(n):
        pairs.append((ProjPoint.affine(make(1, backend) / av ** i), 2 ** (n - 1 - i)))
    holes = RootList.combine(pairs)
    phi = ReducedMap(HomPoly.monomial(1, 0, backend, av ** n), w)

    def build_h() -> HomPoly:
        h = HomPoly.constant(1, backend)
        for p, m in pairs:
            h = mul(h, power(HomPoly.linear(p, backend), m))
        return h

    return RatbarPoint(degree=2 ** n, phi=phi, holes=holes, h_builder=build_h)


# ---------------------------------------------------------------------------
# F_{q,tau,n}, P_{q,n} and G_tau
# ---------------------------------------------------------------------------


def _scalar_backend(x) -> str:
    return EXACT if isinstance(x, (int, Fraction, GaussianRational)) else FLOAT


def G_tau(tau) -> RatbarPoint:
    """z + tau + 1/z as the degree-2 map (z^2 + tau z w + w^2 : z w)"""
    backend = _scalar_backend(tau)
    p = HomPoly.from_coeffs([1, tau, 1], backend)
    return from_map(p, HomPoly.monomial(1, 1, backend))


def _prefix_point(n: int, backend: str) -> RatbarPoint:
    """(z^(2^(n-1)) w^(2^(n-1)) : 0), the common value of F and P before the period"""
    k = 2 ** (n - 1)
    return _zw_power_point(k, k, backend, _const_map(ProjPoint.infinity(backend)), 2 ** n)


def F_family(q: int, tau, n: int) -> RatbarPoint:
    """F_{q,tau,n}: limit of the n-th iterates along a disk with finite tau^2"""
    if q < 2 or n < 1:
        raise InvalidInputError("q" if q < 2 else "n", "need q >= 2 and n >= 1")
    backend = _scalar_backend(tau)
    if n < q:
        return _prefix_point(n, backend)
    if n == q:
        k = 2 ** (q - 1) - 1
        return _zw_power_point(k, k, backend, G_tau(tau).phi, 2 ** q)
    m, r = divmod(n, q)
    base = F_family(q, tau, q)
    if m > 1:
        base = iterate(base, m)
    return base if r == 0 else compose(F_family(q, tau, r), base)


def P_family(q: int, n: int, backend: str = EXACT) -> RatbarPoint:
    """P_{q,n}: limit of the n-th iterates along a disk with tau^2 = infinity"""
    if q < 2 or n < 1:
        raise InvalidInputError("q" if q < 2 else "n", "need q >= 2 and n >= 1")
    if n < q:
        return _prefix_point(n, backend)
    if n == q:
        k = 2 ** (q - 1)
        z, w = _z(backend), _w(backend)
        return _zw_power_point(k, k - 1, backend, ReducedMap(z + w, w), 2 ** q)
    m, r = divmod(n, q)
    base = P_family(q, q, backend)
    if m > 1:
        base = iterate(base, m)
    return base if r == 0 else compose(P_family(q, r, backend), base)


def F_depth_at_zero(q: int, m: int) -> int:
    """d_0(F_{q,tau,qm}) = (2^(q-1) - 1)(2^(qm) - 1)/(2^q - 1)"""
    return (2 ** (q - 1) - 1) * (2 ** (q * m) - 1) // (2 ** q - 1)


def F_atom_mass(q: int) -> Fraction:
    """mu_{F_{q,tau,q}} at 0 and at infinity"""
    return Fraction(2 ** (q - 1) - 1, 2 ** q - 1)


# ---------------------------------------------------------------------------
# degree-d counterexample families
# ---------------------------------------------------------------------------


def _promote(P: HomPoly, *values) -> HomPoly:
    if any(_scalar_backend(v) == FLOAT for v in values):
        return P.to_float()
    return P


def check_counterexample_poly(P: HomPoly, degree: int, field: str = "P") -> HomPoly:
    """Distinct roots, P(0,1) != 0 and P(1,0) != 0; returned monic in z"""
    if P.degree != degree:
        raise ConstraintViolationError(f"{field} must have degree {degree}, got {P.degree}", field=field)
    if P.is_zero or not P.coeffs[0] or not P.coeffs[-1]:
        raise ConstraintViolationError(f"{field} must not vanish at 0 or at infinity", field=field)
    if any(m > 1 for _, m in roots(P)):
        raise ConstraintViolationError(f"{field} must have distinct roots", field=field)
    return normalize_poly(P)


def g_family(P: HomPoly, a, t) -> RatbarPoint:
    """g_{a,t} = (a t z^d + w P : t z^d) in Rat_d"""
    d = P.degree + 1
    P = _promote(check_counterexample_poly(P, d - 1), a, t)
    backend = P.backend
    a, t = make(a, backend), make(t, backend)
    zd = HomPoly.monomial(d, 0, backend)
    wP = mul(_w(backend), P)
    return normalize(zd * (a * t) + wP, zd * t)


def g_limit(P: HomPoly) -> RatbarPoint:
    """g = (w P : 0): phi constant at infinity, which is a hole"""
    d = P.degree + 1
    P = check_counterexample_poly(P, d - 1)
    return normalize(mul(_w(P.backend), P), HomPoly.zero_poly(d, P.backend))


def f_a_limit(P: HomPoly, a) -> RatbarPoint:
    """f_a = (w^(d-1) P^(d-1) (a w P + z^d) : w^d P^d), the limit of g_{a,t}^2"""
    d = P.degree + 1
    P = _promote(check_counterexample_poly(P, d - 1), a)
    backend = P.backend
    a = make(a, backend)
    w = _w(backend)
    wP = mul(w, P)
    phi = ReducedMap(wP * a + HomPoly.monomial(d, 0, backend), wP)
    holes = RootList.combine(
        [(ProjPoint.infinity(backend), d - 1)] + [(r, (d - 1) * m) for r, m in roots(P)]
    )
    return RatbarPoint(degree=d * d, phi=phi, holes=holes, h_builder=lambda: power(wP, d - 1))


def h_family(P: HomPoly, a, t) -> RatbarPoint:
    """h_{a,t} = (a t z^d + w^2 P : t z^d) in Rat_d, d >= 5"""
    d = P.degree + 2
    if d < 5:
        raise ConstraintViolationError("the h family needs d >= 5", field="P")
    P = _promote(check_counterexample_poly(P, d - 2), a, t)
    backend = P.backend
    a, t = make(a, backend), make(t, backend)
    zd = HomPoly.monomial(d, 0, backend)
    w2P = mul(HomPoly.monomial(0, 2, backend), P)
    return normalize(zd * (a * t) + w2P, zd * t)


def h_a_limit(P: HomPoly, a) -> RatbarPoint:
    """h_a = (a w^(2d) P^d : w^(2d) P^d): phi constant at a, holes infinity (2d) and roots of P (d)"""
    d = P.degree + 2
    if d < 5:
        raise ConstraintViolationError("the h family needs d >= 5", field="P")
    P = check_counterexample_poly(P, d - 2)
    backend = P.backend
    value = as_point(a)
    if value.backend != backend:
        backend = FLOAT
        P, value = P.to_float(), value.to_float()
    w2P = mul(HomPoly.monomial(0, 2, backend), P)
    holes = RootList.combine(
        [(ProjPoint.infinity(backend), 2 * d)] + [(r, d * m) for r, m in roots(P)]
    )
    return RatbarPoint(degree=d * d, phi=_const_map(value), holes=holes, h_builder=lambda: power(w2P, d))


# ---------------------------------------------------------------------------
# basilica family
# ---------------------------------------------------------------------------


def basilica_map(t) -> RatbarPoint:
    """f_t = (z^2 - w^2 : c z^2 + w^2) with c = -1 + t"""
    backend = _scalar_backend(t)
    c = make(-1, backend) + make(t, backend)
    p = HomPoly((make(1, backend), make(0, backend), make(-1, backend)), backend)
    q = HomPoly((c, make(0, backend), make(1, backend)), backend)
    return normalize(p, q)
