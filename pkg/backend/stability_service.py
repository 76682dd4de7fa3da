"""
GIT stability of boundary points and of their iterates.

A point is classified by the depths of its holes; the verdict for every
iterate is read off the largest atom of mu_f against the mass 1/2.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from dynamics_errors import InvariantViolation
from measure_service import MassEstimate, hole_orbit_atoms
from polyhom import ProjPoint, same_point
from ratbar import RatbarPoint, iterate

logger = logging.getLogger(__name__)

HALF = Fraction(1, 2)


class StabilityClass(Enum):
    STABLE = "Stable"
    SEMISTABLE_ONLY = "SemistableOnly"
    UNSTABLE = "Unstable"


@dataclass
class StabilityReport:
    stability: StabilityClass
    witness_hole: Optional[ProjPoint]
    witness_depth: int


@dataclass
class IterateStabilityReport:
    """Verdict on f^n for all n, read off the atoms of mu_f

    For even d only all_stable is meaningful. For odd d, all_semistable is
    an equivalence while all_stable is only a sufficient test; all_stable
    is None when the largest atom weighs exactly 1/2. Both are None when
    the mass estimate straddles 1/2.
    """

    degree: int
    all_stable: Optional[bool]
    all_semistable: Optional[bool]
    witness_point: Optional[ProjPoint]
    witness_mass: MassEstimate
    note: str = ""


def _passes(f: RatbarPoint, threshold: Fraction) -> Optional[tuple]:
    """First hole violating the depth threshold, or None"""
    for h, depth in f.holes:
        if depth > threshold:
            return h, depth
        if depth == threshold and same_point(f.phi.apply(h), h):
            return h, depth
    return None


def classify(f: RatbarPoint) -> StabilityReport:
    """GIT class from hole depths, with the fixed-hole exclusion at the threshold"""
    d = f.degree
    deepest = max(f.holes, key=lambda e: e[1], default=(None, 0))
    if d % 2 == 0:
        bad = _passes(f, Fraction(d, 2))
        if bad is None:
            return StabilityReport(StabilityClass.STABLE, deepest[0], deepest[1])
        return StabilityReport(StabilityClass.UNSTABLE, bad[0], bad[1])

    bad = _passes(f, Fraction(d - 1, 2))
    if bad is None:
        return StabilityReport(StabilityClass.STABLE, deepest[0], deepest[1])
    semi_bad = _passes(f, Fraction(d + 1, 2))
    if semi_bad is None:
        return StabilityReport(StabilityClass.SEMISTABLE_ONLY, bad[0], bad[1])
    return StabilityReport(StabilityClass.UNSTABLE, semi_bad[0], semi_bad[1])


def is_stable(f: RatbarPoint) -> bool:
    return classify(f).stability == StabilityClass.STABLE


def all_iterates_stable(
    f: RatbarPoint, mass_fn: Optional[Callable[[RatbarPoint, ProjPoint], MassEstimate]] = None
) -> IterateStabilityReport:
    """Stability of every iterate from the largest atom of mu_f"""
    d = f.degree
    if not f.is_boundary:
        return IterateStabilityReport(
            d, True, True, None, MassEstimate(Fraction(0), Fraction(0), True), "no holes"
        )
    candidates = hole_orbit_atoms(f)
    if mass_fn is not None:
        candidates = [(pt, mass_fn(f, pt)) for pt, _ in candidates]
    witness, mass = max(candidates, key=lambda c: float(c[1].value))
    low = mass.value - mass.error_bound
    high = mass.value + mass.error_bound

    if high < HALF:
        below, at_most = True, True
    elif low > HALF:
        below, at_most = False, False
    elif mass.exact and mass.value == HALF:
        below, at_most = False, True
    else:
        logger.warning(f"Atom mass {float(mass.value):.6g} +/- {float(mass.error_bound):.2g} straddles 1/2")
        return IterateStabilityReport(
            d, None, None, witness, mass, "undecided: mass interval straddles 1/2"
        )

    if d % 2 == 0:
        return IterateStabilityReport(d, at_most, at_most, witness, mass)
    if below:
        return IterateStabilityReport(d, True, True, witness, mass)
    if at_most:
        return IterateStabilityReport(
            d, None, True, witness, mass, "indeterminate by criterion: largest atom has mass exactly 1/2"
        )
    return IterateStabilityReport(d, False, False, witness, mass)


def first_unstable_iterate(f: RatbarPoint, n_max: int) -> Optional[int]:
    """Least n <= n_max with f^n not stable"""
    for n in range(1, n_max + 1):
        if not is_stable(iterate(f, n)):
            return n
    return None


def continuity_certificate(f: RatbarPoint, n: int) -> bool:
    """True iff f^n is stable; then f itself must be stable"""
    fn_stable = is_stable(iterate(f, n))
    if fn_stable and not is_stable(f):
        logger.error(f"f^{n} classified stable while f is not")
        raise InvariantViolation(f"f^{n} is stable but f is not")
    return fn_stable

