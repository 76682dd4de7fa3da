"""
Scalars for the two coefficient backends.

exact: GaussianRational, a complex number with Fraction parts (Q(i)).
float: the builtin complex type (double precision).
Arithmetic never mixes the two silently.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

from dynamics_errors import BackendMismatchError, ParseError

logger = logging.getLogger(__name__)

EXACT = "exact"
FLOAT = "float"


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise BackendMismatchError(f"cannot use {type(value).__name__} as an exact rational")


@dataclass(frozen=True)
class GaussianRational:
    """Exact element re + im*i of Q(i)"""

    re: Fraction
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", _as_fraction(self.re))
        object.__setattr__(self, "im", _as_fraction(self.im))

    @staticmethod
    def coerce(value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, bool):
            return GaussianRational(int(value))
        if isinstance(value, (int, Fraction)):
            return GaussianRational(value)
        raise BackendMismatchError(
            f"cannot combine exact scalar with {type(value).__name__}"
        )

    def __add__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(
            self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussianRational.coerce(other)
        n = o.norm2()
        if n == 0:
            raise ZeroDivisionError("division by exact zero")
        num = self * o.conjugate()
        return GaussianRational(num.re / n, num.im / n)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise BackendMismatchError("exact powers need an integer exponent")
        if k < 0:
            return (GaussianRational(1) / self) ** (-k)
        result = GaussianRational(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def norm2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __str__(self):
        return format_exact(self)

    def __repr__(self):
        return f"GaussianRational({format_exact(self)!r})"


Scalar = Union[GaussianRational, complex]


def backend_of(value) -> str:
    if isinstance(value, GaussianRational):
        return EXACT
    if isinstance(value, (complex, float)):
        return FLOAT
    raise BackendMismatchError(f"not a scalar: {type(value).__name__}")


def zero(backend: str) -> Scalar:
    return GaussianRational(0) if backend == EXACT else 0j


def one(backend: str) -> Scalar:
    return GaussianRational(1) if backend == EXACT else 1 + 0j


def make(value, backend: str) -> Scalar:
    """Lift an int, Fraction, complex or GaussianRational into a backend"""
    if backend == EXACT:
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, (complex, float)):
            raise BackendMismatchError(
                f"floating value {value!r} cannot enter the exact backend"
            )
        return GaussianRational(value)
    if isinstance(value, GaussianRational):
        return complex(value)
    return complex(value)


def to_float(value: Scalar) -> complex:
    return complex(value)


def rationalize(value: complex, max_denominator: int = 10**6) -> GaussianRational:
    return GaussianRational(
        Fraction(value.real).limit_denominator(max_denominator),
        Fraction(value.imag).limit_denominator(max_denominator),
    )


def is_zero(value: Scalar, tol: float = 0.0) -> bool:
    if isinstance(value, GaussianRational):
        return not value
    return abs(value) <= tol


def check_same_backend(*values) -> str:
    backends = {backend_of(v) for v in values}
    if len(backends) > 1:
        raise BackendMismatchError("exact and floating scalars mixed")
    return backends.pop()


def _format_fraction(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def format_exact(value: GaussianRational) -> str:
    """Serialize as "a/b+c/d i" (parts omitted when zero)"""
    if value.im == 0:
        return _format_fraction(value.re)
    im = f"{_format_fraction(abs(value.im))} i"
    if value.re == 0:
        return f"-{im}" if value.im < 0 else im
    sign = "-" if value.im < 0 else "+"
    return f"{_format_fraction(value.re)}{sign}{im}"


def parse_exact(text: str) -> GaussianRational:
    s = text.replace(" ", "").replace("*", "")
    if not s:
        raise ParseError(None, "empty exact scalar")
    try:
        if not s.endswith("i"):
            return GaussianRational(Fraction(s))
        body = s[:-1]
        split = -1
        for pos in range(len(body) - 1, 0, -1):
            if body[pos] in "+-" and body[pos - 1] not in "eE":
                split = pos
                break
        re_part, im_part = ("", body) if split < 0 else (body[:split], body[split:])
        if im_part in ("", "+"):
            im = Fraction(1)
        elif im_part == "-":
            im = Fraction(-1)
        else:
            im = Fraction(im_part)
        re = Fraction(re_part) if re_part else Fraction(0)
        return GaussianRational(re, im)
    except (ValueError, ZeroDivisionError) as e:
        raise ParseError(None, f"malformed exact scalar {text!r}: {e}")
