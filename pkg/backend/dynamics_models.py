"""
JSON shapes read and written by the command line.

Scalars: exact values are strings such as "3/2-1/4 i", floating values
are [re, im] pairs. Extended values (points of the sphere) add "inf".
Polynomials are shorthand strings or coefficient lists, highest power
of z first.
"""

import logging
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from barycenter_service import SphereMeasure
from dynamics_errors import InvalidInputError
from moduli_service import DiskFamily, ModuliPoint2, basilica_disk
from poly_parser import parse_homogeneous, parse_path
from polyhom import HomPoly, ProjPoint
from ratbar import RatbarPoint, normalize
from scalar_field import EXACT, GaussianRational, Scalar, format_exact, parse_exact

logger = logging.getLogger(__name__)

ScalarIn = Union[int, float, str, List[float]]
PolyIn = Union[str, List[ScalarIn]]


def encode_scalar(x: Scalar) -> Union[str, List[float]]:
    if isinstance(x, GaussianRational):
        return format_exact(x)
    c = complex(x)
    return [c.real, c.imag]


def decode_scalar(x: ScalarIn, field: Optional[str] = None) -> Scalar:
    if isinstance(x, bool):
        raise InvalidInputError(field, "booleans are not scalars")
    if isinstance(x, int):
        return GaussianRational(x)
    if isinstance(x, float):
        return complex(x)
    if isinstance(x, str):
        try:
            return parse_exact(x)
        except InvalidInputError as e:
            raise InvalidInputError(field, e.detail)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise InvalidInputError(field, f"cannot read {x!r} as a scalar")


def encode_point(pt: ProjPoint) -> Union[str, List[float]]:
    if pt.is_infinity:
        return "inf"
    return encode_scalar(pt.value)


def decode_point(x, field: Optional[str] = None) -> ProjPoint:
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "oo"):
        return ProjPoint.infinity(EXACT)
    return ProjPoint.affine(decode_scalar(x, field))


def decode_poly(x: PolyIn, degree: Optional[int], field: str, backend: Optional[str] = None) -> HomPoly:
    if isinstance(x, str):
        return parse_homogeneous(x, degree, field, backend)
    values = [decode_scalar(c, field) for c in x]
    if degree is not None and len(values) != degree + 1:
        raise InvalidInputError(field, f"expected {degree + 1} coefficients, got {len(values)}")
    return HomPoly.from_coeffs(values, backend)


def encode_poly(p: HomPoly) -> List[Union[str, List[float]]]:
    return [encode_scalar(c) for c in p.coeffs]


def _common(P: HomPoly, Q: HomPoly):
    if P.backend != Q.backend:
        return P.to_float(), Q.to_float()
    return P, Q


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------


class MapSpec(BaseModel):
    """{"degree": 2, "P": "zw", "Q": "z^2"}"""

    model_config = ConfigDict(extra="forbid")

    degree: Optional[int] = Field(None, ge=1)
    P: PolyIn
    Q: PolyIn
    backend: Optional[Literal["exact", "float"]] = None

    def to_point(self) -> RatbarPoint:
        P = decode_poly(self.P, self.degree, "P", self.backend)
        Q = decode_poly(self.Q, self.degree or P.degree, "Q", self.backend)
        P, Q = _common(P, Q)
        return normalize(P, Q)


class HoleOut(BaseModel):
    point: Union[str, List[float]]
    depth: int


class MapOut(BaseModel):
    degree: int
    P: List[Union[str, List[float]]]
    Q: List[Union[str, List[float]]]
    P_text: str
    Q_text: str
    holes: List[HoleOut]
    phi_degree: int

    @staticmethod
    def of(f: RatbarPoint) -> "MapOut":
        return MapOut(
            degree=f.degree,
            P=encode_poly(f.P),
            Q=encode_poly(f.Q),
            P_text=str(f.P),
            Q_text=str(f.Q),
            holes=[HoleOut(point=encode_point(pt), depth=m) for pt, m in f.holes],
            phi_degree=f.phi_degree,
        )

    def to_spec(self) -> MapSpec:
        return MapSpec(degree=self.degree, P=self.P, Q=self.Q)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


class FamilySpec(BaseModel):
    """A disk in Mbar_2; P and Q of coeff_path families are polynomials in z, w, t"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["nf", "line", "conic", "coeff_path", "boundary", "basilica"]
    alpha: List[ScalarIn] = Field(default_factory=list)
    beta: List[ScalarIn] = Field(default_factory=list)
    a: ScalarIn = 0
    b: ScalarIn = 1
    q: int = Field(2, ge=1)
    k: int = Field(1, ge=1)
    P: Optional[str] = None
    Q: Optional[str] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "FamilySpec":
        if self.kind == "coeff_path" and (self.P is None or self.Q is None):
            raise ValueError("coeff_path families need P and Q")
        if self.kind == "nf" and (not self.alpha or not self.beta):
            raise ValueError("nf families need alpha and beta series")
        if self.kind == "boundary" and not self.alpha:
            raise ValueError("boundary families need an alpha series")
        return self

    def to_family(self) -> DiskFamily:
        if self.kind == "basilica":
            return basilica_disk()
        if self.kind == "nf":
            return DiskFamily.nf([decode_scalar(x, "alpha") for x in self.alpha], [decode_scalar(x, "beta") for x in self.beta])
        if self.kind == "boundary":
            return DiskFamily.boundary([decode_scalar(x, "alpha") for x in self.alpha])
        if self.kind == "line":
            return DiskFamily.line(decode_scalar(self.a, "a"), decode_scalar(self.b, "b"))
        if self.kind == "conic":
            return DiskFamily.conic(decode_scalar(self.a, "a"), decode_scalar(self.b, "b"), self.q, self.k)
        P, Q = parse_path(self.P, 2, "P"), parse_path(self.Q, 2, "Q")
        if {h.backend for h in P + Q} != {P[0].backend}:
            P, Q = [h.to_float() for h in P], [h.to_float() for h in Q]
        return DiskFamily.coeff_path(P, Q)


# ---------------------------------------------------------------------------
# moduli points and measures
# ---------------------------------------------------------------------------


def encode_moduli_point(m: ModuliPoint2) -> List[Union[str, List[float]]]:
    return [encode_scalar(x) for x in m.to_list()]


def decode_moduli_point(values: List[ScalarIn]) -> ModuliPoint2:
    if len(values) != 3:
        raise InvalidInputError("point", "a point of Mbar_2 has three coordinates")
    return ModuliPoint2.of(*(decode_scalar(v, "point") for v in values))


class AtomOut(BaseModel):
    point: Union[str, List[float]]
    mass: Union[str, float]


class MeasureOut(BaseModel):
    atoms: List[AtomOut]
    tail_bound: Union[str, float]


def encode_mass(m) -> Union[str, float]:
    return str(m) if not isinstance(m, float) else m


class SphereAtomIn(BaseModel):
    v: List[float] = Field(min_length=3, max_length=3)
    mass: float = Field(gt=0)


class SpherePointsIn(BaseModel):
    points: List[List[float]]


def decode_sphere_measure(data: Any) -> SphereMeasure:
    """[{v, mass}, ...] or {points: [[x, y, z], ...]} with equal masses"""
    try:
        if isinstance(data, dict):
            pts = SpherePointsIn.model_validate(data)
            if not pts.points:
                raise InvalidInputError("points", "no points given")
            return SphereMeasure.from_vectors(np.array(pts.points, dtype=float))
        atoms = [SphereAtomIn.model_validate(a) for a in data]
    except ValidationError as e:
        raise InvalidInputError("measure", str(e.errors()[0]["msg"]))
    if not atoms:
        raise InvalidInputError("measure", "no atoms given")
    V = np.array([a.v for a in atoms], dtype=float)
    w = np.array([a.mass for a in atoms], dtype=float)
    return SphereMeasure.from_vectors(V, w)


# ---------------------------------------------------------------------------
# experiments and invocation records
# ---------------------------------------------------------------------------


class ExperimentConfig(BaseModel):
    """{family, t_grid, n_samples, seed, depth_n}; JSON or YAML on disk"""

    model_config = ConfigDict(extra="forbid")

    family: FamilySpec
    t_grid: List[float] = Field(min_length=1)
    n_samples: Optional[int] = Field(None, ge=1)
    seed: int = 0
    depth_n: Optional[int] = Field(None, ge=0)
    barycentered: bool = False
    limit: Optional[MapSpec] = None


class InvocationRecord(BaseModel):
    command: str
    args: Dict[str, Any]
    settings: Dict[str, Any]
    version: str


def first_error(e: ValidationError) -> InvalidInputError:
    """The first pydantic error as an InvalidInputError naming its field"""
    err = e.errors()[0]
    field = ".".join(str(p) for p in err.get("loc", ())) or None
    return InvalidInputError(field, err.get("msg", "invalid value"))
