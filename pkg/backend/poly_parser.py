"""
Shorthand polynomial input such as "z^2 + t*z*w" or "3zw - w^2".

Expressions are parsed by sympy with implicit multiplication and ^ as
power, then read off as coefficient lists. Rational and Gaussian
rational coefficients stay exact; any decimal makes the result float.
"""

import logging
from fractions import Fraction
from tokenize import TokenError
from typing import List, Optional

from sympy import I, Poly, Symbol
from sympy.core.sympify import SympifyError
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from dynamics_errors import DegreeMismatchError, ParseError
from polyhom import HomPoly
from scalar_field import EXACT, FLOAT, GaussianRational, Scalar

logger = logging.getLogger(__name__)

Z, W, T = Symbol("z"), Symbol("w"), Symbol("t")
LOCALS = {"z": Z, "w": W, "t": T, "i": I, "I": I}
TRANSFORMS = standard_transformations + (implicit_multiplication_application, convert_xor)


def parse_expression(text: str, field: Optional[str] = None, allow_t: bool = False):
    if not isinstance(text, str) or not text.strip():
        raise ParseError(field, "empty polynomial")
    try:
        expr = parse_expr(text, local_dict=LOCALS, transformations=TRANSFORMS, evaluate=True)
    except (SyntaxError, TokenError, SympifyError, TypeError, ValueError) as e:
        raise ParseError(field, f"cannot parse {text!r}: {e}")
    allowed = {Z, W, T} if allow_t else {Z, W}
    extra = expr.free_symbols - allowed
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ParseError(field, f"unknown symbols {names} in {text!r}")
    if not expr.is_polynomial(*allowed):
        raise ParseError(field, f"{text!r} is not a polynomial in {', '.join(sorted(str(s) for s in allowed))}")
    return expr.expand()


def _to_scalar(c, backend: str) -> Scalar:
    re, im = c.as_real_imag()
    if backend == EXACT:
        return GaussianRational(Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q)))
    return complex(float(re), float(im))


def _is_exact(c) -> bool:
    re, im = c.as_real_imag()
    return bool(re.is_Rational and im.is_Rational)


def _homogeneous_from(expr, degree: Optional[int], field: Optional[str], backend: Optional[str]) -> HomPoly:
    if expr == 0:
        if degree is None:
            raise DegreeMismatchError("the zero polynomial needs an explicit degree", field=field)
        return HomPoly.zero_poly(degree, backend or EXACT)
    poly = Poly(expr, Z, W)
    terms = poly.terms()
    totals = {a + b for (a, b), _ in terms}
    top = max(totals)
    if degree is None:
        if len(totals) > 1:
            raise DegreeMismatchError(
                f"terms of degrees {sorted(totals)} are not homogeneous; give the degree", field=field
            )
        degree = top
    if top > degree:
        raise DegreeMismatchError(f"polynomial has degree {top}, expected {degree}", field=field)
    if (len(totals) > 1 or top < degree) and any(b for (_, b), _ in terms):
        raise DegreeMismatchError("input of lower or mixed degree must be affine in z alone", field=field)

    if backend is None:
        backend = EXACT if all(_is_exact(c) for _, c in terms) else FLOAT
    coeffs = [GaussianRational(0) if backend == EXACT else 0j] * (degree + 1)
    for (a, b), c in terms:
        # short terms are homogenized with w: z^a w^b -> z^a w^(degree - a)
        coeffs[degree - a] = coeffs[degree - a] + _to_scalar(c, backend)
    return HomPoly(tuple(coeffs), backend)


def parse_homogeneous(
    text: str, degree: Optional[int] = None, field: Optional[str] = None, backend: Optional[str] = None
) -> HomPoly:
    """A homogeneous polynomial in z, w; affine input in z is homogenized to the given degree"""
    expr = parse_expression(text, field)
    result = _homogeneous_from(expr, degree, field, backend)
    logger.debug(f"Parsed {field or 'polynomial'} {text!r} as degree {result.degree}")
    return result


def parse_path(text: str, degree: int, field: Optional[str] = None, backend: Optional[str] = None) -> List[HomPoly]:
    """Coefficients in ascending powers of t of a polynomial in z, w, t"""
    expr = parse_expression(text, field, allow_t=True)
    if expr == 0:
        return [HomPoly.zero_poly(degree, backend or EXACT)]
    by_t = Poly(expr, T)
    top = by_t.degree()
    parts = [by_t.coeff_monomial(T ** k) for k in range(top + 1)]
    if backend is None:
        exact = all(_is_exact(c) for part in parts if part != 0 for _, c in Poly(part, Z, W).terms())
        backend = EXACT if exact else FLOAT
    return [_homogeneous_from(part, degree, field, backend) for part in parts]
