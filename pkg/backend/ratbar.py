"""
Points of Ratbar_d.

A point f = (P:Q) is kept in factored form f = H_f * phi_f: the reduced
map phi_f = (P/H : Q/H) and the holes of f (roots of H = gcd(P, Q) with
their depths). P, Q and H are materialized lazily, so iterates of high
degree can still answer depth and mass queries.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Tuple

import numpy as np

from dynamics_config import get_settings
from dynamics_errors import (
    DegreeBudgetError,
    DegreeMismatchError,
    IndeterminatePairError,
    IndeterminatePointError,
    InvalidInputError,
    SingularMobiusError,
    ZeroPolynomialError,
)
from polyhom import (
    HomPoly,
    ProjPoint,
    RootList,
    add,
    chordal_distance,
    divide_exact,
    evaluate,
    from_roots,
    gcd,
    mul,
    normalize as normalize_poly,
    power,
    projectively_equal,
    roots,
    scale,
    substitute,
    vector_projective_distance,
)
from scalar_field import EXACT, FLOAT, GaussianRational, Scalar, is_zero, make

logger = logging.getLogger(__name__)


def _common_backend(*backends: str) -> str:
    return EXACT if all(b == EXACT for b in backends) else FLOAT


# ---------------------------------------------------------------------------
# Mobius transformations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mobius:
    """(z:w) -> (a z + b w : c z + d w)"""

    a: Scalar
    b: Scalar
    c: Scalar
    d: Scalar

    def __post_init__(self):
        if is_zero(self.det(), 0.0):
            raise SingularMobiusError("Mobius matrix has zero determinant")

    @staticmethod
    def of(a, b, c, d) -> "Mobius":
        exact = not any(isinstance(x, (complex, float)) for x in (a, b, c, d))
        backend = EXACT if exact else FLOAT
        return Mobius(*(make(x, backend) for x in (a, b, c, d)))

    @staticmethod
    def identity(backend: str = EXACT) -> "Mobius":
        return Mobius(make(1, backend), make(0, backend), make(0, backend), make(1, backend))

    @staticmethod
    def from_matrix(m) -> "Mobius":
        m = np.asarray(m, dtype=complex)
        return Mobius(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    @staticmethod
    def dilation(lam) -> "Mobius":
        return Mobius.of(lam, 0, 0, 1)

    @staticmethod
    def translation(b) -> "Mobius":
        return Mobius.of(1, b, 0, 1)

    @staticmethod
    def rotation_to_south(pt: ProjPoint) -> "Mobius":
        """Rotation of the sphere (SU(2)) taking pt to 0"""
        alpha, beta = complex(pt.z), complex(pt.w)
        n = np.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        alpha, beta = alpha / n, beta / n
        return Mobius(beta, -alpha, alpha.conjugate(), beta.conjugate())

    @property
    def backend(self) -> str:
        exact = all(isinstance(x, GaussianRational) for x in (self.a, self.b, self.c, self.d))
        return EXACT if exact else FLOAT

    def det(self) -> Scalar:
        return self.a * self.d - self.b * self.c

    def to_float(self) -> "Mobius":
        return Mobius(*(complex(x) for x in (self.a, self.b, self.c, self.d)))

    def to_matrix(self) -> np.ndarray:
        return np.array([[complex(self.a), complex(self.b)], [complex(self.c), complex(self.d)]])

    def apply(self, pt: ProjPoint) -> ProjPoint:
        m = self if (pt.is_exact and self.backend == EXACT) else self.to_float()
        p = pt if m.backend == EXACT else pt.to_float()
        return ProjPoint.of(m.a * p.z + m.b * p.w, m.c * p.z + m.d * p.w)

    def compose(self, other: "Mobius") -> "Mobius":
        """self after other (matrix product)"""
        s, o = self, other
        if _common_backend(s.backend, o.backend) == FLOAT:
            s, o = s.to_float(), o.to_float()
        return Mobius(
            s.a * o.a + s.b * o.c,
            s.a * o.b + s.b * o.d,
            s.c * o.a + s.d * o.c,
            s.c * o.b + s.d * o.d,
        )

    def inverse(self) -> "Mobius":
        """Adjugate; equal to the inverse up to scale"""
        return Mobius(self.d, -self.b, -self.c, self.a)

    def linear_forms(self, backend: Optional[str] = None) -> Tuple[HomPoly, HomPoly]:
        """(a z + b w, c z + d w) as degree-one polynomials"""
        m = self if backend in (None, self.backend) else self.to_float()
        b = m.backend
        return HomPoly((m.a, m.b), b), HomPoly((m.c, m.d), b)


# ---------------------------------------------------------------------------
# reduced maps
# ---------------------------------------------------------------------------


def identity_map(backend: str = EXACT) -> "ReducedMap":
    return ReducedMap(HomPoly.monomial(1, 0, backend), HomPoly.monomial(0, 1, backend))


def root_multiplicity(poly: HomPoly, pt: ProjPoint) -> int:
    """Multiplicity of pt as a root of poly"""
    if poly.is_zero:
        raise ZeroPolynomialError(field="poly")
    if poly.backend == EXACT and pt.is_exact:
        linear = HomPoly.linear(pt)
        m = 0
        while poly.degree > 0 and not evaluate(poly, pt):
            poly = divide_exact(poly, linear)
            m += 1
        return m
    radius = get_settings().tol_cluster
    return sum(m for r, m in roots(poly.to_float()) if chordal_distance(r, pt) <= radius)


@dataclass(frozen=True)
class ReducedMap:
    """A map (p:q) with p, q coprime homogeneous polynomials of equal degree"""

    p: HomPoly
    q: HomPoly

    def __post_init__(self):
        if self.p.degree != self.q.degree:
            raise DegreeMismatchError(
                f"map components have degrees {self.p.degree} and {self.q.degree}"
            )
        if self.p.backend != self.q.backend:
            raise InvalidInputError("backend", "map components use different backends")

    @property
    def backend(self) -> str:
        return self.p.backend

    @property
    def degree(self) -> int:
        return self.p.degree

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def constant_value(self) -> Optional[ProjPoint]:
        if not self.is_constant:
            return None
        return ProjPoint.of(self.p.coeffs[0], self.q.coeffs[0])

    def to_float(self) -> "ReducedMap":
        return ReducedMap(self.p.to_float(), self.q.to_float())

    def apply(self, pt: ProjPoint) -> ProjPoint:
        if self.is_constant:
            return self.constant_value()
        m = self if (pt.is_exact and self.backend == EXACT) else self.to_float()
        x = pt if m.backend == EXACT else pt.to_float()
        return ProjPoint.of(evaluate(m.p, x), evaluate(m.q, x))

    def compose(self, inner: "ReducedMap") -> "ReducedMap":
        """self after inner"""
        outer = self
        if _common_backend(outer.backend, inner.backend) == FLOAT:
            outer, inner = outer.to_float(), inner.to_float()
        return ReducedMap(
            substitute(outer.p, inner.p, inner.q), substitute(outer.q, inner.p, inner.q)
        )

    def equation(self, target: ProjPoint) -> HomPoly:
        """target_w * p - target_z * q, whose roots are the preimages of target"""
        m = self if (target.is_exact and self.backend == EXACT) else self.to_float()
        t = target.to_backend(m.backend)
        return add(scale(m.p, t.w), scale(m.q, -t.z))

    def preimages(self, target: ProjPoint) -> RootList:
        """Points y with phi(y) = target, weighted by local degree"""
        if self.is_constant:
            value = self.constant_value()
            if value.is_exact and target.is_exact:
                hit = value == target
            else:
                hit = chordal_distance(value, target) <= get_settings().tol_root
            if hit:
                raise IndeterminatePointError(f"constant map takes the value {target} everywhere")
            return RootList()
        return roots(self.equation(target))

    def local_degree(self, pt: ProjPoint) -> int:
        if self.is_constant:
            return 0
        return root_multiplicity(self.equation(self.apply(pt)), pt)

    def coefficient_vector(self) -> np.ndarray:
        return np.concatenate([self.p.to_numpy(), self.q.to_numpy()])


@dataclass(frozen=True)
class LocalDegree:
    """m_z(phi^n) together with its inputs"""

    phi: ReducedMap
    z: ProjPoint
    n: int
    value: int


def local_degree(phi: ReducedMap, z: ProjPoint, n: int = 1) -> int:
    """m_z(phi^n): product of local degrees along z, phi(z), ..., phi^(n-1)(z)"""
    if n == 0:
        return 1
    if phi.is_constant:
        return 0
    m = 1
    x = z
    for _ in range(n):
        m *= phi.local_degree(x)
        x = phi.apply(x)
    return m


def local_degree_record(phi: ReducedMap, z: ProjPoint, n: int = 1) -> LocalDegree:
    return LocalDegree(phi=phi, z=z, n=n, value=local_degree(phi, z, n))


def pullback_divisor(phi: ReducedMap, divisor: RootList) -> RootList:
    """phi^* of a weighted point set: each point h of weight w contributes m_y(phi) * w at every y in phi^-1(h)"""
    pairs = []
    for h, weight in divisor:
        for y, m in phi.preimages(h):
            pairs.append((y, weight * m))
    return RootList.combine(pairs)


def pullback_levels(phi: ReducedMap, divisor: RootList, levels: int) -> List[RootList]:
    """[D, phi^* D, (phi^2)^* D, ...] with `levels` entries"""
    budget = get_settings().max_atoms
    out = [divisor]
    for k in range(1, levels):
        if phi.is_constant:
            out.append(RootList())
            continue
        nxt = pullback_divisor(phi, out[-1])
        if len(nxt) > budget:
            raise DegreeBudgetError(
                f"preimage level {k} has {len(nxt)} points, above max_atoms={budget}"
            )
        out.append(nxt)
    return out


# ---------------------------------------------------------------------------
# Ratbar_d points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RatbarPoint:
    """f = H_f * phi_f in Ratbar_d"""

    degree: int
    phi: ReducedMap
    holes: RootList
    h_builder: Optional[Callable[[], HomPoly]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise InvalidInputError("degree", "degree must be at least 1")
        if self.holes.total + self.phi.degree != self.degree:
            raise DegreeMismatchError(
                f"hole depths {self.holes.total} plus deg phi {self.phi.degree} "
                f"do not add up to degree {self.degree}"
            )

    @property
    def backend(self) -> str:
        return self.phi.backend

    @property
    def phi_degree(self) -> int:
        return self.phi.degree

    @property
    def is_boundary(self) -> bool:
        return self.holes.total > 0

    def _check_budget(self):
        budget = get_settings().degree_budget
        if self.degree > budget:
            raise DegreeBudgetError(
                f"materializing degree {self.degree} exceeds degree_budget={budget}"
            )

    @cached_property
    def H(self) -> HomPoly:
        self._check_budget()
        if self.h_builder is not None:
            h = self.h_builder()
        else:
            backend = self.backend if all(pt.is_exact for pt in self.holes.points()) else FLOAT
            h = from_roots(self.holes, 1, backend)
        return normalize_poly(h)

    @cached_property
    def P(self) -> HomPoly:
        h, p = self._aligned(self.H, self.phi.p)
        return mul(h, p)

    @cached_property
    def Q(self) -> HomPoly:
        h, q = self._aligned(self.H, self.phi.q)
        return mul(h, q)

    @staticmethod
    def _aligned(a: HomPoly, b: HomPoly) -> Tuple[HomPoly, HomPoly]:
        if a.backend == b.backend:
            return a, b
        return a.to_float(), b.to_float()

    def hole_depth(self, pt: ProjPoint) -> int:
        return self.holes.multiplicity_of(pt)

    def in_indeterminacy(self) -> bool:
        value = self.phi.constant_value()
        return value is not None and self.hole_depth(value) > 0

    def to_float(self) -> "RatbarPoint":
        if self.backend == FLOAT:
            return self
        source = self
        return RatbarPoint(
            degree=self.degree,
            phi=self.phi.to_float(),
            holes=RootList(tuple((pt.to_float(), m) for pt, m in self.holes)),
            h_builder=lambda: source.H.to_float(),
        )


def from_map(p: HomPoly, q: HomPoly) -> RatbarPoint:
    """A point of Rat_d given coprime components"""
    return RatbarPoint(degree=p.degree, phi=ReducedMap(p, q), holes=RootList())


def normalize(P: HomPoly, Q: HomPoly) -> RatbarPoint:
    """Split (P:Q) into H_f, phi_f and the holes"""
    if P.degree != Q.degree:
        raise DegreeMismatchError(f"P has degree {P.degree} but Q has degree {Q.degree}", field="Q")
    if P.backend != Q.backend:
        raise InvalidInputError("backend", "P and Q use different backends")
    if P.is_zero and Q.is_zero:
        raise ZeroPolynomialError("P and Q are both zero", field="P,Q")
    H = gcd(P, Q)
    phi = ReducedMap(divide_exact(P, H), divide_exact(Q, H))
    holes = roots(H) if H.degree > 0 else RootList()
    logger.debug(f"Normalized degree {P.degree} pair: deg H={H.degree}, deg phi={phi.degree}")
    return RatbarPoint(degree=P.degree, phi=phi, holes=holes, h_builder=lambda: H)


def holes_of(f: RatbarPoint) -> List[Tuple[ProjPoint, int]]:
    return sorted(f.holes.entries, key=lambda e: e[0].sort_key())


def in_indeterminacy(f: RatbarPoint) -> bool:
    """phi_f is constant and its value is a hole of f"""
    return f.in_indeterminacy()


def _require_determinate(f: RatbarPoint):
    if f.in_indeterminacy():
        raise IndeterminatePointError(
            f"f lies in I({f.degree}): phi is constant at the hole {f.phi.constant_value()}"
        )


def iterate(f: RatbarPoint, n: int) -> RatbarPoint:
    """f^n by the product formula f^n = prod_k (phi^k* H_f)^(d^(n-k-1)) * phi^n"""
    if n < 1:
        raise InvalidInputError("n", "iterate needs n >= 1")
    _require_determinate(f)
    if n == 1:
        return f
    d = f.degree
    budget = get_settings().degree_budget
    if f.phi_degree ** n > budget:
        raise DegreeBudgetError(
            f"phi^{n} has degree {f.phi_degree ** n}, above degree_budget={budget}"
        )

    powers = [identity_map(f.backend), f.phi]
    for _ in range(2, n + 1):
        powers.append(f.phi.compose(powers[-1]))

    levels = pullback_levels(f.phi, f.holes, n)
    pairs = []
    for k, level in enumerate(levels):
        pairs.extend(level.scaled(d ** (n - 1 - k)).entries)
    holes = RootList.combine(pairs)

    def build_h() -> HomPoly:
        h_f = f.H
        result = HomPoly.constant(1, h_f.backend)
        for k in range(n):
            phk = powers[k] if powers[k].backend == h_f.backend else powers[k].to_float()
            if h_f.backend != phk.backend:
                h_f = h_f.to_float()
                result = result.to_float()
            factor = substitute(h_f, phk.p, phk.q)
            result = mul(result, power(factor, d ** (n - 1 - k)))
        return result

    logger.debug(f"Iterate n={n} of degree {d}: {len(holes)} distinct holes")
    return RatbarPoint(degree=d ** n, phi=powers[n], holes=holes, h_builder=build_h)


def compose(f: RatbarPoint, g: RatbarPoint) -> RatbarPoint:
    """f after g: holes d*holes(g) + phi_g^*(holes f), H = H_g^d * H_f(phi_g)"""
    value = g.phi.constant_value()
    if value is not None and f.hole_depth(value) > 0:
        raise IndeterminatePairError(
            f"phi_g is constant at {value}, which is a hole of f"
        )
    d = f.degree
    budget = get_settings().degree_budget
    if f.phi_degree * g.phi_degree > budget:
        raise DegreeBudgetError("composed reduced map exceeds degree_budget")
    phi = f.phi.compose(g.phi)
    pulled = RootList() if g.phi.is_constant else pullback_divisor(g.phi, f.holes)
    holes = g.holes.scaled(d).merged(pulled)

    def build_h() -> HomPoly:
        h_f, h_g, phi_g = f.H, g.H, g.phi
        if _common_backend(h_f.backend, h_g.backend, phi_g.backend) == FLOAT:
            h_f, h_g, phi_g = h_f.to_float(), h_g.to_float(), phi_g.to_float()
        return mul(power(h_g, d), substitute(h_f, phi_g.p, phi_g.q))

    return RatbarPoint(degree=d * g.degree, phi=phi, holes=holes, h_builder=build_h)


def conjugate(f: RatbarPoint, A: Mobius) -> RatbarPoint:
    """A f A^-1; holes move forward under A with their depths"""
    backend = _common_backend(f.backend, A.backend)
    if backend == FLOAT:
        A = A.to_float()
    inv_z, inv_w = A.inverse().linear_forms(backend)
    phi = f.phi if f.backend == backend else f.phi.to_float()
    p_sub = substitute(phi.p, inv_z, inv_w)
    q_sub = substitute(phi.q, inv_z, inv_w)
    new_phi = ReducedMap(
        add(scale(p_sub, A.a), scale(q_sub, A.b)),
        add(scale(p_sub, A.c), scale(q_sub, A.d)),
    )
    holes = RootList.combine((A.apply(pt), m) for pt, m in f.holes)

    def build_h() -> HomPoly:
        h = f.H if f.H.backend == backend else f.H.to_float()
        return substitute(h, inv_z, inv_w)

    return RatbarPoint(degree=f.degree, phi=new_phi, holes=holes, h_builder=build_h)


def depth_of_iterate(f: RatbarPoint, z: ProjPoint, n: int) -> int:
    """d_z(f^n) = sum_k d^(n-1-k) m_z(phi^k) d_{phi^k(z)}(f), without materializing f^n"""
    if n < 1:
        raise InvalidInputError("n", "depth_of_iterate needs n >= 1")
    _require_determinate(f)
    d = f.degree
    total = 0
    m = 1
    x = z
    for k in range(n):
        if m == 0:
            break
        total += d ** (n - 1 - k) * m * f.hole_depth(x)
        if k < n - 1:
            m *= f.phi.local_degree(x)
            x = f.phi.apply(x)
    return total


def direct_iterate(f: RatbarPoint, n: int) -> RatbarPoint:
    """f^n by substituting the pair (P, Q) into itself n-1 times"""
    _require_determinate(f)
    P, Q = f.P, f.Q
    Pn, Qn = P, Q
    for _ in range(n - 1):
        Pn, Qn = substitute(P, Pn, Qn), substitute(Q, Pn, Qn)
    return normalize(Pn, Qn)


def pair_distance(f: RatbarPoint, g: RatbarPoint) -> float:
    """Projective distance between the coefficient vectors of (P, Q)"""
    if f.degree != g.degree:
        return 1.0
    u = np.concatenate([f.P.to_numpy(), f.Q.to_numpy()])
    v = np.concatenate([g.P.to_numpy(), g.Q.to_numpy()])
    return vector_projective_distance(u, v)


def projectively_same(f: RatbarPoint, g: RatbarPoint, tol: Optional[float] = None) -> bool:
    """(P_f : Q_f) = (P_g : Q_g) up to a common scalar"""
    if f.degree != g.degree:
        return False
    if f.backend == EXACT and g.backend == EXACT:
        u = f.P.coeffs + f.Q.coeffs
        v = g.P.coeffs + g.Q.coeffs
        return projectively_equal(
            HomPoly(u, EXACT), HomPoly(v, EXACT)
        )
    tol = get_settings().tol_root if tol is None else tol
    return pair_distance(f, g) <= tol


# ---------------------------------------------------------------------------
# degenerate polynomials p = (w^k Q : w^d)
# ---------------------------------------------------------------------------


def degenerate_polynomial(Q: HomPoly, k: int) -> RatbarPoint:
    """(w^k Q : w^d) with d = k + deg Q; requires Q(1,0) != 0"""
    if k < 1:
        raise InvalidInputError("k", "the hole depth k must be positive")
    if is_zero(Q.coeffs[0]):
        raise InvalidInputError("Q", "Q must not vanish at infinity")
    d = k + Q.degree
    w_k = HomPoly.monomial(0, k, Q.backend)
    return normalize(mul(w_k, Q), HomPoly.monomial(0, d, Q.backend))


def degenerate_polynomial_depth(d: int, k: int, n: int) -> int:
    """Depth at infinity of p^n: k * sum_j d^(n-1-j) (d-k)^j"""
    return sum(k * d ** (n - 1 - j) * (d - k) ** j for j in range(n))
