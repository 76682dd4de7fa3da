"""
Homogeneous polynomials in (z, w) over the exact or floating backend.

A HomPoly of degree d stores coeffs[i] as the coefficient of z^(d-i) w^i.
The multiplicity of the root at infinity (1:0) is therefore the number
of leading zero coefficients.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from math import isqrt
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dynamics_config import get_settings
from dynamics_errors import (
    BackendMismatchError,
    DegreeMismatchError,
    InexactDivisionError,
    InvalidInputError,
    RootFindingError,
    ZeroPolynomialError,
)
from scalar_field import (
    EXACT,
    FLOAT,
    GaussianRational,
    Scalar,
    backend_of,
    check_same_backend,
    format_exact,
    is_zero,
    make,
    one,
    rationalize,
    zero,
)

logger = logging.getLogger(__name__)

# relative size below which a floating coefficient counts as roundoff
FLOAT_COEFF_EPS = 64 * np.finfo(float).eps
# |w| below this fraction of |z| canonicalizes a floating point to infinity
FLOAT_INFINITY_RATIO = 1e-15


# ---------------------------------------------------------------------------
# projective points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjPoint:
    """Point of P^1 in canonical form (x:1) or (1:0)"""

    z: Scalar
    w: Scalar

    @staticmethod
    def of(z, w) -> "ProjPoint":
        if isinstance(z, GaussianRational) or isinstance(w, GaussianRational):
            z, w = make(z, EXACT), make(w, EXACT)
        else:
            z, w = complex(z), complex(w)
        backend = check_same_backend(z, w)
        if is_zero(z) and is_zero(w):
            raise InvalidInputError("point", "(0:0) is not a point of P^1")
        if backend == EXACT:
            if not w:
                return ProjPoint(one(EXACT), zero(EXACT))
            return ProjPoint(z / w, one(EXACT))
        if w == 0 or abs(w) <= FLOAT_INFINITY_RATIO * abs(z):
            return ProjPoint(1 + 0j, 0j)
        return ProjPoint(z / w, 1 + 0j)

    @staticmethod
    def affine(x) -> "ProjPoint":
        if isinstance(x, GaussianRational):
            return ProjPoint(x, one(EXACT))
        if isinstance(x, (int, Fraction)):
            return ProjPoint(GaussianRational(x), one(EXACT))
        x = complex(x)
        if not np.isfinite(x.real) or not np.isfinite(x.imag):
            return ProjPoint(1 + 0j, 0j)
        return ProjPoint(x, 1 + 0j)

    @staticmethod
    def infinity(backend: str = EXACT) -> "ProjPoint":
        return ProjPoint(one(backend), zero(backend))

    @property
    def backend(self) -> str:
        return backend_of(self.z)

    @property
    def is_exact(self) -> bool:
        return self.backend == EXACT

    @property
    def is_infinity(self) -> bool:
        return is_zero(self.w)

    @property
    def value(self) -> Optional[Scalar]:
        """Affine coordinate, or None at infinity"""
        return None if self.is_infinity else self.z

    def to_float(self) -> "ProjPoint":
        if not self.is_exact:
            return self
        return ProjPoint(complex(self.z), complex(self.w))

    def to_backend(self, backend: str) -> "ProjPoint":
        if backend == FLOAT:
            return self.to_float()
        if self.is_exact:
            return self
        raise InvalidInputError("point", f"floating point {self} has no exact form")

    def sort_key(self) -> Tuple[int, float, float]:
        if self.is_infinity:
            return (1, 0.0, 0.0)
        x = complex(self.z)
        return (0, round(x.real, 12), round(x.imag, 12))

    def __str__(self):
        if self.is_infinity:
            return "inf"
        if self.is_exact:
            return format_exact(self.z)
        return f"{complex(self.z):.12g}"


def chordal_distance(a: ProjPoint, b: ProjPoint) -> float:
    """|z1 w2 - z2 w1| / (|a||b|), in [0, 1]"""
    z1, w1 = complex(a.z), complex(a.w)
    z2, w2 = complex(b.z), complex(b.w)
    n1 = np.hypot(abs(z1), abs(w1))
    n2 = np.hypot(abs(z2), abs(w2))
    return float(abs(z1 * w2 - z2 * w1) / (n1 * n2))


def sphere_vector(pt: ProjPoint) -> np.ndarray:
    """Stereographic image on the unit sphere; 0 is the south pole"""
    if pt.is_infinity:
        return np.array([0.0, 0.0, 1.0])
    x = complex(pt.z)
    r2 = x.real * x.real + x.imag * x.imag
    if not np.isfinite(r2):
        return np.array([0.0, 0.0, 1.0])
    return np.array([2 * x.real, 2 * x.imag, r2 - 1.0]) / (r2 + 1.0)


def same_point(a: ProjPoint, b: ProjPoint, tol: Optional[float] = None) -> bool:
    if a.is_exact and b.is_exact:
        return a == b
    tol = get_settings().tol_root if tol is None else tol
    return chordal_distance(a, b) <= tol


class PointIndex:
    """Spatial hash of points on the sphere for near-duplicate lookup"""

    def __init__(self, tol: Optional[float] = None):
        self.tol = get_settings().tol_root if tol is None else tol
        self.cell = 2.0 * self.tol
        self.points: List[ProjPoint] = []
        self._exact: Dict[ProjPoint, int] = {}
        self._grid: Dict[Tuple[int, int, int], List[int]] = defaultdict(list)

    def _cell_of(self, pt: ProjPoint) -> Tuple[int, int, int]:
        v = np.floor(sphere_vector(pt) / self.cell).astype(np.int64)
        return (int(v[0]), int(v[1]), int(v[2]))

    def find(self, pt: ProjPoint) -> Optional[int]:
        if pt.is_exact and pt in self._exact:
            return self._exact[pt]
        cx, cy, cz = self._cell_of(pt)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for idx in self._grid.get((cx + dx, cy + dy, cz + dz), ()):
                        other = self.points[idx]
                        if pt.is_exact and other.is_exact:
                            continue
                        if chordal_distance(pt, other) <= self.tol:
                            return idx
        return None

    def add(self, pt: ProjPoint) -> int:
        idx = self.find(pt)
        if idx is not None:
            return idx
        idx = len(self.points)
        self.points.append(pt)
        if pt.is_exact:
            self._exact[pt] = idx
        self._grid[self._cell_of(pt)].append(idx)
        return idx

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class RootList:
    """Distinct projective points with positive multiplicities"""

    entries: Tuple[Tuple[ProjPoint, int], ...] = ()

    @staticmethod
    def combine(
        pairs: Iterable[Tuple[ProjPoint, int]], tol: Optional[float] = None
    ) -> "RootList":
        index = PointIndex(tol)
        mults: List[int] = []
        for pt, m in pairs:
            if m <= 0:
                continue
            idx = index.add(pt)
            if idx == len(mults):
                mults.append(m)
            else:
                mults[idx] += m
        entries = sorted(zip(index.points, mults), key=lambda e: e[0].sort_key())
        return RootList(tuple(entries))

    @property
    def total(self) -> int:
        return sum(m for _, m in self.entries)

    def points(self) -> List[ProjPoint]:
        return [pt for pt, _ in self.entries]

    def find(self, pt: ProjPoint, tol: Optional[float] = None) -> Optional[int]:
        for i, (other, _) in enumerate(self.entries):
            if same_point(pt, other, tol):
                return i
        return None

    def multiplicity_of(self, pt: ProjPoint, tol: Optional[float] = None) -> int:
        i = self.find(pt, tol)
        return 0 if i is None else self.entries[i][1]

    def scaled(self, k: int) -> "RootList":
        return RootList(tuple((pt, m * k) for pt, m in self.entries if m * k > 0))

    def merged(self, *others: "RootList", tol: Optional[float] = None) -> "RootList":
        pairs = list(self.entries)
        for other in others:
            pairs.extend(other.entries)
        return RootList.combine(pairs, tol)

    def __iter__(self) -> Iterator[Tuple[ProjPoint, int]]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


# ---------------------------------------------------------------------------
# exact univariate helpers (descending coefficient lists over Q(i))
# ---------------------------------------------------------------------------


def _u_trim(a: Sequence[GaussianRational]) -> List[GaussianRational]:
    i = 0
    while i < len(a) and not a[i]:
        i += 1
    return list(a[i:])


def _u_monic(a: Sequence[GaussianRational]) -> List[GaussianRational]:
    a = _u_trim(a)
    if not a:
        return a
    lead = a[0]
    return [c / lead for c in a]


def _u_divmod(a, b):
    a = list(a)
    if len(a) < len(b):
        return [], _u_trim(a)
    lead = b[0]
    q = []
    for i in range(len(a) - len(b) + 1):
        coef = a[i] / lead
        q.append(coef)
        if coef:
            for j in range(1, len(b)):
                a[i + j] = a[i + j] - coef * b[j]
    return q, _u_trim(a[len(a) - len(b) + 1 :])


def _u_div(a, b):
    q, r = _u_divmod(a, b)
    if r:
        raise InexactDivisionError("exact division left a remainder")
    return q


def _u_gcd(a, b):
    a, b = _u_trim(a), _u_trim(b)
    while b:
        a, b = b, _u_divmod(a, b)[1]
    return _u_monic(a)


def _u_deriv(a):
    n = len(a) - 1
    return _u_trim([a[i] * (n - i) for i in range(n)])


def _u_sub(a, b):
    n = max(len(a), len(b))
    a = [zero(EXACT)] * (n - len(a)) + list(a)
    b = [zero(EXACT)] * (n - len(b)) + list(b)
    return _u_trim([x - y for x, y in zip(a, b)])


def _u_eval(a, x):
    acc = zero(EXACT)
    for c in a:
        acc = acc * x + c
    return acc


def _squarefree_factors(f) -> List[Tuple[list, int]]:
    """Yun's algorithm: f = prod a_i^i with a_i squarefree and coprime"""
    f = _u_monic(f)
    if len(f) <= 1:
        return []
    fp = _u_deriv(f)
    a0 = _u_gcd(f, fp)
    b = _u_div(f, a0)
    c = _u_div(fp, a0)
    d = _u_sub(c, _u_deriv(b))
    out = []
    i = 1
    while len(b) > 1:
        a = _u_gcd(b, d)
        b = _u_div(b, a)
        c = _u_div(d, a) if d else []
        d = _u_sub(c, _u_deriv(b))
        if len(a) > 1:
            out.append((a, i))
        i += 1
    return out


def _fraction_sqrt(x: Fraction) -> Optional[Fraction]:
    if x < 0:
        return None
    rn, rd = isqrt(x.numerator), isqrt(x.denominator)
    if rn * rn == x.numerator and rd * rd == x.denominator:
        return Fraction(rn, rd)
    return None


def exact_sqrt(x: GaussianRational) -> Optional[GaussianRational]:
    """Square root in Q(i) when one exists"""
    a, b = x.re, x.im
    m = _fraction_sqrt(a * a + b * b)
    if m is None:
        return None
    re = _fraction_sqrt((a + m) / 2)
    if re is None:
        return None
    if re == 0:
        im = _fraction_sqrt((m - a) / 2)
        return None if im is None else GaussianRational(0, im)
    return GaussianRational(re, b / (2 * re))


def _newton_polish(coeffs: np.ndarray, x: complex, order: int = 0, steps: int = 6) -> complex:
    """Newton on the order-th derivative; keeps x if no step improves it"""
    f = np.polyder(coeffs, order) if order else coeffs
    fp = np.polyder(f)
    if len(fp) == 0:
        return x
    best, best_val = x, abs(np.polyval(f, x))
    for _ in range(steps):
        dv = np.polyval(fp, x)
        if dv == 0:
            break
        x = x - np.polyval(f, x) / dv
        val = abs(np.polyval(f, x))
        if not np.isfinite(val):
            break
        if val < best_val:
            best, best_val = x, val
    return complex(best)


def _exact_factor_roots(g) -> Tuple[List[GaussianRational], List[complex]]:
    """Roots of a monic squarefree factor; exact where they lie in Q(i)"""
    exact_roots: List[GaussianRational] = []
    g = list(g)
    while len(g) > 1:
        if len(g) == 2:
            exact_roots.append(-g[1])
            return exact_roots, []
        if len(g) == 3:
            s = exact_sqrt(g[1] * g[1] - 4 * g[2])
            if s is not None:
                exact_roots.extend([(-g[1] + s) / 2, (-g[1] - s) / 2])
                return exact_roots, []
        approx = np.roots(np.array([complex(c) for c in g]))
        found = None
        for r in approx:
            cand = rationalize(complex(r))
            if not _u_eval(g, cand):
                found = cand
                break
        if found is None:
            break
        exact_roots.append(found)
        g = _u_div(g, [one(EXACT), -found])
    coeffs = np.array([complex(c) for c in g])
    floats = [_newton_polish(coeffs, complex(r)) for r in np.roots(coeffs)]
    if floats:
        logger.debug(f"{len(floats)} roots outside Q(i) kept in floating form")
    return exact_roots, floats


def _cluster(values: Sequence[complex], tol: float) -> List[Tuple[complex, int]]:
    n = len(values)
    parent = list(range(n))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            scale = max(1.0, abs(values[i]), abs(values[j]))
            if abs(values[i] - values[j]) <= tol * scale:
                parent[root(i)] = root(j)
    groups: Dict[int, List[complex]] = defaultdict(list)
    for i in range(n):
        groups[root(i)].append(values[i])
    return [(complex(np.mean(g)), len(g)) for g in groups.values()]


def _float_finite_roots(coeffs: Sequence[complex]) -> List[Tuple[complex, int]]:
    arr = np.array(coeffs, dtype=complex)
    if len(arr) <= 1:
        return []
    try:
        raw = np.roots(arr)
    except np.linalg.LinAlgError as e:
        logger.error(f"Companion eigenvalue solve failed: {str(e)}")
        raise RootFindingError(f"root finding failed: {e}")
    if not np.all(np.isfinite(raw)):
        raise RootFindingError("root finding produced non-finite values")
    clusters = _cluster(list(raw), get_settings().tol_cluster)
    return [(_newton_polish(arr, c, order=m - 1), m) for c, m in clusters]


# ---------------------------------------------------------------------------
# homogeneous polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomPoly:
    """Homogeneous polynomial sum coeffs[i] z^(d-i) w^i"""

    coeffs: Tuple[Scalar, ...]
    backend: str

    @staticmethod
    def from_coeffs(coeffs: Sequence, backend: Optional[str] = None) -> "HomPoly":
        if len(coeffs) == 0:
            raise InvalidInputError("coeffs", "a homogeneous polynomial needs at least one coefficient")
        if backend is None:
            backend = (
                FLOAT
                if any(isinstance(c, (complex, float)) for c in coeffs)
                else EXACT
            )
        return HomPoly(tuple(make(c, backend) for c in coeffs), backend)

    @staticmethod
    def monomial(a: int, b: int, backend: str = EXACT, c=1) -> "HomPoly":
        """c z^a w^b"""
        coeffs = [zero(backend)] * (a + b + 1)
        coeffs[b] = make(c, backend)
        return HomPoly(tuple(coeffs), backend)

    @staticmethod
    def constant(c, backend: str = EXACT) -> "HomPoly":
        return HomPoly((make(c, backend),), backend)

    @staticmethod
    def zero_poly(degree: int, backend: str = EXACT) -> "HomPoly":
        return HomPoly(tuple([zero(backend)] * (degree + 1)), backend)

    @staticmethod
    def linear(pt: ProjPoint, backend: Optional[str] = None) -> "HomPoly":
        """The linear form vanishing at pt: w_0 z - z_0 w"""
        backend = backend or pt.backend
        pt = pt.to_backend(backend)
        return HomPoly((pt.w, -pt.z), backend)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return all(is_zero(c) for c in self.coeffs)

    def leading_index(self) -> int:
        """Index of the first coefficient that is not (numerically) zero"""
        if self.backend == EXACT:
            for i, c in enumerate(self.coeffs):
                if c:
                    return i
            return len(self.coeffs)
        mags = np.abs(np.array(self.coeffs, dtype=complex))
        top = mags.max() if len(mags) else 0.0
        if top == 0:
            return len(self.coeffs)
        for i, m in enumerate(mags):
            if m > FLOAT_COEFF_EPS * top:
                return i
        return len(self.coeffs)

    def to_float(self) -> "HomPoly":
        if self.backend == FLOAT:
            return self
        return HomPoly(tuple(complex(c) for c in self.coeffs), FLOAT)

    def to_backend(self, backend: str) -> "HomPoly":
        if backend == self.backend:
            return self
        if backend == FLOAT:
            return self.to_float()
        raise InvalidInputError("backend", "floating polynomials have no exact form")

    def to_numpy(self) -> np.ndarray:
        return np.array([complex(c) for c in self.coeffs], dtype=complex)

    def __add__(self, other: "HomPoly") -> "HomPoly":
        return add(self, other)

    def __sub__(self, other: "HomPoly") -> "HomPoly":
        return sub(self, other)

    def __mul__(self, other) -> "HomPoly":
        if isinstance(other, HomPoly):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "HomPoly":
        return scale(self, -1)

    def __pow__(self, k: int) -> "HomPoly":
        return power(self, k)

    def __str__(self):
        terms = []
        d = self.degree
        for i, c in enumerate(self.coeffs):
            if is_zero(c):
                continue
            mono = "*".join(
                part
                for part in (
                    "" if d - i == 0 else ("z" if d - i == 1 else f"z^{d - i}"),
                    "" if i == 0 else ("w" if i == 1 else f"w^{i}"),
                )
                if part
            )
            coef = format_exact(c) if self.backend == EXACT else f"({complex(c):.6g})"
            terms.append(f"({coef})*{mono}" if mono else f"({coef})")
        return " + ".join(terms) if terms else "0"


def _check_pair(p: HomPoly, q: HomPoly) -> str:
    if p.backend != q.backend:
        raise BackendMismatchError("exact and floating polynomials mixed")
    return p.backend


def evaluate(p: HomPoly, pt: ProjPoint) -> Scalar:
    """p at the representative (x, 1), or (1, 0) for infinity"""
    if pt.backend != p.backend:
        raise BackendMismatchError("polynomial and point backends differ")
    if pt.is_infinity:
        return p.coeffs[0]
    acc = zero(p.backend)
    for c in p.coeffs:
        acc = acc * pt.z + c
    return acc


def add(p: HomPoly, q: HomPoly) -> HomPoly:
    backend = _check_pair(p, q)
    if p.degree != q.degree:
        raise DegreeMismatchError(f"cannot add degrees {p.degree} and {q.degree}")
    return HomPoly(tuple(a + b for a, b in zip(p.coeffs, q.coeffs)), backend)


def sub(p: HomPoly, q: HomPoly) -> HomPoly:
    backend = _check_pair(p, q)
    if p.degree != q.degree:
        raise DegreeMismatchError(f"cannot subtract degrees {p.degree} and {q.degree}")
    return HomPoly(tuple(a - b for a, b in zip(p.coeffs, q.coeffs)), backend)


def scale(p: HomPoly, c) -> HomPoly:
    c = make(c, p.backend)
    return HomPoly(tuple(c * a for a in p.coeffs), p.backend)


def mul(p: HomPoly, q: HomPoly) -> HomPoly:
    backend = _check_pair(p, q)
    if backend == FLOAT:
        out = np.convolve(p.to_numpy(), q.to_numpy())
        return HomPoly(tuple(complex(c) for c in out), FLOAT)
    out = [zero(EXACT)] * (p.degree + q.degree + 1)
    for i, a in enumerate(p.coeffs):
        if not a:
            continue
        for j, b in enumerate(q.coeffs):
            if b:
                out[i + j] = out[i + j] + a * b
    return HomPoly(tuple(out), EXACT)


def power(p: HomPoly, k: int) -> HomPoly:
    if k < 0:
        raise InvalidInputError("k", "negative powers are not polynomials")
    result = HomPoly.constant(1, p.backend)
    base = p
    while k:
        if k & 1:
            result = mul(result, base)
        k >>= 1
        if k:
            base = mul(base, base)
    return result


def derivative_z(p: HomPoly) -> HomPoly:
    d = p.degree
    if d == 0:
        return HomPoly.constant(0, p.backend)
    return HomPoly(tuple(p.coeffs[i] * (d - i) for i in range(d)), p.backend)


def derivative_w(p: HomPoly) -> HomPoly:
    d = p.degree
    if d == 0:
        return HomPoly.constant(0, p.backend)
    return HomPoly(tuple(p.coeffs[i] * i for i in range(1, d + 1)), p.backend)


def normalize(p: HomPoly) -> HomPoly:
    """Scale so the first nonzero coefficient is 1"""
    k = p.leading_index()
    if k >= len(p.coeffs):
        return p
    lead = p.coeffs[k]
    coeffs = list(p.coeffs)
    if p.backend == FLOAT:
        coeffs[:k] = [0j] * k
    return HomPoly(tuple(c / lead for c in coeffs), p.backend)


def dehomogenize(p: HomPoly) -> List[Scalar]:
    """Descending coefficients of p(x, 1) with leading zeros stripped"""
    return list(p.coeffs[p.leading_index():])


def _homogenize(univariate: Sequence[Scalar], degree: int, backend: str) -> HomPoly:
    pad = degree - (len(univariate) - 1)
    if pad < 0:
        raise DegreeMismatchError(f"cannot homogenize to degree {degree}")
    return HomPoly(tuple([zero(backend)] * pad + list(univariate)), backend)


def roots(p: HomPoly) -> RootList:
    """Projective roots with multiplicity; multiplicities sum to deg p"""
    if p.is_zero:
        raise ZeroPolynomialError(field="p")
    k = p.leading_index()
    entries: List[Tuple[ProjPoint, int]] = []
    if k:
        entries.append((ProjPoint.infinity(p.backend), k))
    finite = p.coeffs[k:]
    if len(finite) > 1:
        if p.backend == EXACT:
            for factor, m in _squarefree_factors(finite):
                exact_roots, float_roots = _exact_factor_roots(factor)
                entries.extend((ProjPoint.affine(r), m) for r in exact_roots)
                entries.extend((ProjPoint.affine(r), m) for r in float_roots)
        else:
            entries.extend((ProjPoint.affine(r), m) for r, m in _float_finite_roots(finite))
    return RootList.combine(entries)


def from_roots(rl: RootList, leading=1, backend: str = EXACT) -> HomPoly:
    """leading * prod (w_i z - z_i w)^m_i"""
    result = HomPoly.constant(leading, backend)
    for pt, m in rl:
        if backend == EXACT and not pt.is_exact:
            raise InvalidInputError("roots", "floating root in an exact product")
        result = mul(result, power(HomPoly.linear(pt, backend), m))
    return result


def gcd(p: HomPoly, q: HomPoly) -> HomPoly:
    """Normalized greatest common divisor; gcd(p, 0) = p"""
    backend = _check_pair(p, q)
    if p.is_zero and q.is_zero:
        raise ZeroPolynomialError("gcd of two zero polynomials", field="p,q")
    if q.is_zero:
        return normalize(p)
    if p.is_zero:
        return normalize(q)
    if backend == EXACT:
        kp, kq = p.leading_index(), q.leading_index()
        g = _u_gcd(p.coeffs[kp:], q.coeffs[kq:])
        m = min(kp, kq)
        return _homogenize(g, len(g) - 1 + m, EXACT)
    rp, rq = roots(p), roots(q)
    tol = get_settings().tol_root
    common = []
    for pt, m in rp:
        mq = rq.multiplicity_of(pt, tol)
        if mq:
            common.append((pt, min(m, mq)))
    return normalize(from_roots(RootList(tuple(common)), 1, FLOAT))


def divide_exact(p: HomPoly, d: HomPoly) -> HomPoly:
    """p / d, requiring d | p exactly or up to tol_div in the float backend"""
    backend = _check_pair(p, d)
    if d.is_zero:
        raise ZeroPolynomialError("division by the zero polynomial", field="d")
    if d.degree > p.degree:
        raise InexactDivisionError(f"degree {d.degree} does not divide degree {p.degree}")
    out_degree = p.degree - d.degree
    if p.is_zero:
        return HomPoly.zero_poly(out_degree, backend)
    kp, kd = p.leading_index(), d.leading_index()
    if kd > kp:
        raise InexactDivisionError("divisor vanishes at infinity to higher order")
    if backend == EXACT:
        q, r = _u_divmod(p.coeffs[kp:], d.coeffs[kd:])
        if r:
            raise InexactDivisionError("exact division left a remainder")
        return _homogenize(q, out_degree, EXACT)
    num = np.array(p.coeffs[kp:], dtype=complex)
    den = np.array(d.coeffs[kd:], dtype=complex)
    q, r = np.polydiv(num, den)
    residual = np.linalg.norm(r) / max(np.linalg.norm(num), 1e-300)
    if residual > get_settings().tol_div:
        logger.error(f"Inexact floating division, relative residual {residual:.3g}")
        raise InexactDivisionError(f"relative residual {residual:.3g} exceeds tol_div")
    return _homogenize([complex(c) for c in q], out_degree, FLOAT)


def substitute(p: HomPoly, A: HomPoly, B: HomPoly) -> HomPoly:
    """p(A(z,w), B(z,w)); degree deg p * deg A"""
    backend = _check_pair(A, B)
    _check_pair(p, A)
    if A.degree != B.degree:
        raise DegreeMismatchError(
            f"substitution needs equal degrees, got {A.degree} and {B.degree}"
        )
    d, e = p.degree, A.degree
    a_pows = [HomPoly.constant(1, backend)]
    b_pows = [HomPoly.constant(1, backend)]
    for _ in range(d):
        a_pows.append(mul(a_pows[-1], A))
        b_pows.append(mul(b_pows[-1], B))
    result = HomPoly.zero_poly(d * e, backend)
    for i, c in enumerate(p.coeffs):
        if is_zero(c):
            continue
        result = add(result, scale(mul(a_pows[d - i], b_pows[i]), c))
    return result


def projectively_equal(p: HomPoly, q: HomPoly, tol: Optional[float] = None) -> bool:
    """Equality up to a nonzero scalar"""
    if p.degree != q.degree:
        return False
    if p.backend == EXACT and q.backend == EXACT:
        if p.is_zero or q.is_zero:
            return p.is_zero and q.is_zero
        k = p.leading_index()
        pk, qk = p.coeffs[k], q.coeffs[k]
        return all(qk * a == pk * b for a, b in zip(p.coeffs, q.coeffs))
    tol = get_settings().tol_root if tol is None else tol
    return projective_distance(p, q) <= tol


def projective_distance(p: HomPoly, q: HomPoly) -> float:
    """Sine of the angle between the coefficient vectors"""
    return vector_projective_distance(p.to_numpy(), q.to_numpy())


def vector_projective_distance(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0 if nu == nv else 1.0
    # residual of projecting u onto the line through v
    residual = u - (np.vdot(v, u) / (nv * nv)) * v
    return float(min(1.0, np.linalg.norm(residual) / nu))
