"""Roof functions over expanding Markov maps.

A roof assigns a positive flow time to each base point.  The module
provides Birkhoff sums along orbits, a periodic-orbit witness search that
detects when the roof is not cohomologous to any function constant on
partition cells, certification of explicit coboundary representations, and
a compactly supported bump perturbation used to force a witness.

Roofs built from rational polynomial data evaluate exactly on Fraction
inputs, and the witness search then reports exact rational gaps.  Verdicts
never hinge on float roundoff for such roofs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BoundaryPoint, InadmissibleItinerary, ProtectedOrbitHit
from .markov_maps import (
    AxiomCheck,
    ExpandingMarkovMap,
    ValidationReport,
    low_discrepancy,
)

WITNESS_THRESHOLD = 1e-10

# sup of |d/du (1-u^2)^3| on [-1,1] is 96/(25*sqrt(5)), attained at u=1/sqrt(5)
_BUMP_SLOPE_SUP = 96.0 / (25.0 * math.sqrt(5.0))


@dataclass(frozen=True)
class RoofFunction:
    """Positive return-time function r over a Markov map.

    `value` is polymorphic: Fraction in, Fraction out whenever `exact` is
    set, float otherwise.  `lower_bound` and `branch_lipschitz` are claimed
    constants, checked by validate_roof rather than trusted.  `value_many`
    is an optional float-array fast path used by the flow machinery.
    """

    base: ExpandingMarkovMap
    value: Callable
    lower_bound: float
    branch_lipschitz: float
    exact: bool = False
    label: str = "custom"
    value_many: Callable | None = None

    def __post_init__(self):
        if not self.lower_bound > 0:
            raise ValueError("roof lower bound must be positive")

    def __call__(self, x):
        return self.value(x)

    def vectorized(self) -> Callable:
        if self.value_many is not None:
            return self.value_many
        scalar = self.value
        return lambda xs: np.asarray([float(scalar(float(x))) for x in np.ravel(xs)]).reshape(
            np.shape(xs)
        )


def _is_rational(v) -> bool:
    return isinstance(v, Rational)


def _horner(coeffs: Sequence, x):
    acc = None
    for c in reversed(coeffs):
        acc = c if acc is None else acc * x + c
    return acc


def _poly_range(coeffs: Sequence, lo, hi):
    """Certified enclosure of a polynomial's range on [lo, hi].

    Sums per-monomial ranges, so the enclosure can be loose but never
    too tight; exact arithmetic is preserved for rational inputs.
    """
    if not coeffs:
        return 0, 0
    inf = sup = coeffs[0]
    if lo >= 0:
        # x^k is monotone on [lo, hi]
        for k, c in enumerate(coeffs[1:], start=1):
            a, b = c * lo**k, c * hi**k
            inf, sup = inf + min(a, b), sup + max(a, b)
    else:
        m = max(abs(lo), abs(hi))
        for k, c in enumerate(coeffs[1:], start=1):
            r = abs(c) * m**k
            inf, sup = inf - r, sup + r
    return inf, sup


def _poly_slope_bound(coeffs: Sequence, lo, hi):
    """Certified bound on sup |p'| over [lo, hi]."""
    deriv = tuple(k * c for k, c in enumerate(coeffs))[1:]
    d_lo, d_hi = _poly_range(deriv, lo, hi)
    return max(abs(d_lo), abs(d_hi))


def polynomial_roof(
    base: ExpandingMarkovMap,
    coeffs: Sequence,
    lower_bound=None,
    branch_lipschitz=None,
    label: str = "poly",
) -> RoofFunction:
    """Roof r(x) = c0 + c1 x + ... with one global coefficient list.

    Rational coefficients keep the exact evaluation path available.
    When `lower_bound` or `branch_lipschitz` is omitted, a certified
    value is computed from the coefficients by monomial range
    arithmetic, so the defaults always survive `validate_roof`.
    """
    exact = all(_is_rational(c) for c in coeffs)
    cs = tuple(Fraction(c) for c in coeffs) if exact else tuple(float(c) for c in coeffs)

    def value(x):
        return _horner(cs, x)

    fcs = np.asarray([float(c) for c in cs])

    def value_many(xs):
        return np.polynomial.polynomial.polyval(np.asarray(xs, dtype=float), fcs)

    if lower_bound is None:
        lower_bound, _ = _poly_range(cs, base.edges[0], base.edges[-1])
    if branch_lipschitz is None:
        slope = _poly_slope_bound(cs, base.edges[0], base.edges[-1])
        branch_lipschitz = slope * base.expansion_bound
    return RoofFunction(base, value, lower_bound, branch_lipschitz, exact, label, value_many)


def per_branch_polynomial_roof(
    base: ExpandingMarkovMap,
    coeffs_per_branch: Sequence[Sequence],
    lower_bound=None,
    branch_lipschitz=None,
    label: str = "per_branch",
) -> RoofFunction:
    """Roof given by one polynomial per partition cell; cells half-open.

    Omitted `lower_bound`/`branch_lipschitz` are certified per cell by
    monomial range arithmetic, as in `polynomial_roof`.
    """
    if len(coeffs_per_branch) != base.n_cells:
        raise ValueError("need one coefficient list per partition cell")
    exact = all(_is_rational(c) for cs in coeffs_per_branch for c in cs)
    table = tuple(
        tuple(Fraction(c) if exact else float(c) for c in cs) for cs in coeffs_per_branch
    )

    def value(x):
        return _horner(table[base.cell_index(x)], x)

    ftable = [np.asarray([float(c) for c in cs]) for cs in table]
    inner_edges = np.asarray([float(e) for e in base.edges[1:-1]])

    def value_many(xs):
        xs = np.asarray(xs, dtype=float)
        cells = np.searchsorted(inner_edges, xs, side="right")
        out = np.empty_like(xs)
        for k, fcs in enumerate(ftable):
            mask = cells == k
            if mask.any():
                out[mask] = np.polynomial.polynomial.polyval(xs[mask], fcs)
        return out

    if lower_bound is None:
        lower_bound = min(
            _poly_range(cs, base.edges[k], base.edges[k + 1])[0] for k, cs in enumerate(table)
        )
    if branch_lipschitz is None:
        slope = max(
            _poly_slope_bound(cs, base.edges[k], base.edges[k + 1]) for k, cs in enumerate(table)
        )
        branch_lipschitz = slope * base.expansion_bound
    return RoofFunction(base, value, lower_bound, branch_lipschitz, exact, label, value_many)


def constant_roof(base: ExpandingMarkovMap, c) -> RoofFunction:
    return polynomial_roof(base, (c,), lower_bound=c, branch_lipschitz=1e-15, label="const")


def cosine_roof(
    base: ExpandingMarkovMap, mean: float, amplitude: float, frequency: int = 1
) -> RoofFunction:
    """r(x) = mean + amplitude*cos(2 pi frequency x); requires mean > |amplitude|."""
    if not mean > abs(amplitude):
        raise ValueError("cosine roof must stay positive: need mean > |amplitude|")

    def value(x):
        return mean + amplitude * math.cos(2.0 * math.pi * frequency * float(x))

    def value_many(xs):
        return mean + amplitude * np.cos(2.0 * np.pi * frequency * np.asarray(xs, dtype=float))

    k = 2.0 * math.pi * frequency * abs(amplitude) * base.expansion_bound
    return RoofFunction(
        base, value, mean - abs(amplitude), k * (1.0 + 1e-6), False, "cosine", value_many
    )


def _probe_extrema(base: ExpandingMarkovMap, value, probes: int = 512):
    """(min, max, sup |finite-difference slope|) of a roof over cell probes."""
    lo, hi, slope = math.inf, -math.inf, 0.0
    for k, b in enumerate(base.branches):
        xs = low_discrepancy(probes, float(b.lo), float(b.hi), phase=0.13 * k)
        xs.sort()
        vals = [float(value(x)) for x in xs]
        lo = min(lo, min(vals))
        hi = max(hi, max(vals))
        for (x0, v0), (x1, v1) in zip(zip(xs, vals), zip(xs[1:], vals[1:])):
            if x1 > x0:
                slope = max(slope, abs(v1 - v0) / (x1 - x0))
    return lo, hi, slope


def validate_roof(roof: RoofFunction, probes: int = 10_000) -> ValidationReport:
    """Probe positivity against the claimed r0 and |D(r o h)| against K."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    base = roof.base
    worst, loc = math.inf, 0.0
    for k, b in enumerate(base.branches):
        xs = low_discrepancy(probes, float(b.lo), float(b.hi), phase=0.19 * k)
        for x in xs:
            v = float(roof.value(x))
            if v < worst:
                worst, loc = v, float(x)
    positivity = AxiomCheck(
        "positivity",
        "pass" if worst >= float(roof.lower_bound) - 1e-12 else "fail",
        worst,
        loc,
        float(roof.lower_bound) - 1e-12,
    )

    # slope of r o h at probe pairs in each branch image
    worst_s, loc_s = 0.0, 0.0
    for k, b in enumerate(base.branches):
        ys = low_discrepancy(probes, float(b.image_lo), float(b.image_hi), phase=0.23 * k)
        h = (float(b.image_hi) - float(b.image_lo)) * 1e-6
        for y in ys[:-1]:
            x0, x1 = float(b.inverse(y)), float(b.inverse(y + h))
            v = abs(float(roof.value(x1)) - float(roof.value(x0))) / h
            if v > worst_s:
                worst_s, loc_s = v, float(y)
    lipschitz = AxiomCheck(
        "branch_lipschitz",
        "pass" if worst_s <= float(roof.branch_lipschitz) * (1.0 + 1e-4) + 1e-12 else "fail",
        worst_s,
        loc_s,
        float(roof.branch_lipschitz) * (1.0 + 1e-4) + 1e-12,
    )
    return ValidationReport((positivity, lipschitz))


# -- Birkhoff sums ------------------------------------------------------------


def birkhoff_sum(roof: RoofFunction, x, n: int):
    """Sum of r along the orbit segment x, f x, ..., f^(n-1) x.

    Exact for Fraction input on exact roofs over affine maps.  Boundary
    hits along the orbit propagate as BoundaryPoint.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    exact = roof.exact and isinstance(x, Rational) and roof.base.is_affine
    total = Fraction(0) if exact else 0.0
    y = Fraction(x) if exact else float(x)
    for _ in range(n):
        total += roof.value(y)
        y, _k = roof.base.evaluate(y)
    return total


# -- periodic-orbit witness search -------------------------------------------


@dataclass(frozen=True)
class Witness:
    """Pair of closed orbit segments of equal length and visit counts."""

    itinerary1: tuple[int, ...]
    itinerary2: tuple[int, ...]
    x1: object
    x2: object
    sum1: object
    sum2: object

    @property
    def gap(self):
        return abs(self.sum1 - self.sum2)

    @property
    def period(self) -> int:
        return len(self.itinerary1)


@dataclass(frozen=True)
class CohomologyReport:
    """Outcome of the periodic-orbit obstruction search.

    NoWitnessUpToPeriod is a bounded-search statement only, never a
    certificate that the roof is cohomologous to a locally constant one.
    """

    witness: Witness | None
    searched_periods: int
    verdict: str  # "WitnessFound" | "NoWitnessUpToPeriod"

    @property
    def found(self) -> bool:
        return self.witness is not None

    def to_csv(self) -> str:
        # tolerance 0 marks exact rational sums; float sums carry roundoff
        header = "itinerary1,itinerary2,sum1,sum2,gap,tolerance"
        if self.witness is None:
            return header + "\n"
        w = self.witness
        exact = isinstance(w.sum1, Fraction) and isinstance(w.sum2, Fraction)
        row = ",".join(
            [
                _word_str(w.itinerary1),
                _word_str(w.itinerary2),
                _num_str(w.sum1),
                _num_str(w.sum2),
                _num_str(w.gap),
                "0" if exact else "1e-12",
            ]
        )
        return header + "\n" + row + "\n"


def _word_str(word: Iterable[int]) -> str:
    return "".join(str(k) for k in word)


def _num_str(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return f"{float(v):.17g}"


def enumerate_cyclic_classes(m: ExpandingMarkovMap, period: int):
    """Admissible cyclic words of exact minimal period, one per rotation class.

    Yields the lexicographically smallest rotation of each class.
    """
    seen = set()
    for word in itertools.product(range(m.n_cells), repeat=period):
        if word in seen:
            continue
        rotations = {word[i:] + word[:i] for i in range(period)}
        seen |= rotations
        canon = min(rotations)
        if any(
            period % q == 0 and canon == canon[:q] * (period // q)
            for q in range(1, period)
        ):
            continue
        try:
            m.check_itinerary(canon)
        except InadmissibleItinerary:
            continue
        yield canon


def _divisors(p: int):
    return [q for q in range(1, p + 1) if p % q == 0]


def witness_search(
    roof: RoofFunction, max_period: int, threshold: float = WITNESS_THRESHOLD
) -> CohomologyReport:
    """Search closed orbits for unequal Birkhoff sums at equal visit counts.

    For each total period p up to max_period, every admissible orbit of
    minimal period q dividing p is traversed p/q times; orbits whose
    period-p visit-count vectors agree would have equal sums if the roof
    were cohomologous to a function constant on partition cells, so any
    gap above the threshold is a witness against that.  The first period
    with a gap wins; within it the largest gap, ties broken by smallest
    itinerary pair.
    """
    if max_period < 2:
        raise ValueError("max_period must be >= 2")
    m = roof.base

    # (word, first point, one-lap sum, one-lap visit counts) per minimal period
    classes: dict[int, list] = {}
    for q in range(1, max_period + 1):
        rows = []
        for word in enumerate_cyclic_classes(m, q):
            orbit = m.periodic_orbit(word)
            if orbit is None:
                continue  # coding touches a cell boundary
            lap = sum(roof.value(x) for x in orbit)
            visits = tuple(word.count(c) for c in range(m.n_cells))
            rows.append((word, orbit[0], lap, visits))
        classes[q] = rows

    for p in range(2, max_period + 1):
        groups: dict[tuple, list] = {}
        for q in _divisors(p):
            reps = p // q
            for word, x0, lap, visits in classes[q]:
                key = tuple(v * reps for v in visits)
                groups.setdefault(key, []).append((word * reps, x0, lap * reps))
        best = None
        for members in groups.values():
            if len(members) < 2:
                continue
            members.sort(key=lambda t: t[0])
            for (w1, x1, s1), (w2, x2, s2) in itertools.combinations(members, 2):
                gap = abs(s1 - s2)
                if gap <= threshold:
                    continue
                cand = (gap, w1, w2, x1, x2, s1, s2)
                if best is None or gap > best[0] or (gap == best[0] and (w1, w2) < (best[1], best[2])):
                    best = cand
        if best is not None:
            gap, w1, w2, x1, x2, s1, s2 = best
            return CohomologyReport(
                witness=Witness(w1, w2, x1, x2, s1, s2),
                searched_periods=p,
                verdict="WitnessFound",
            )
    return CohomologyReport(witness=None, searched_periods=max_period, verdict="NoWitnessUpToPeriod")


# -- coboundary certification -------------------------------------------------


def certify_coboundary(
    roof: RoofFunction, gamma_coboundary: Callable, probes: int = 2_000
) -> float:
    """Worst per-branch range of r - gamma o f + gamma over probe points.

    Zero (up to roundoff) certifies that the supplied transfer term makes
    the roof constant on every partition cell.  The returned deviation is
    sup - inf within the worst branch.
    """
    if probes < 2:
        raise ValueError("probes must be >= 2")
    base = roof.base
    worst = 0.0
    for k, b in enumerate(base.branches):
        xs = low_discrepancy(probes, float(b.lo), float(b.hi), phase=0.29 * k)
        vals = []
        for x in xs:
            fx = b.forward(x)
            vals.append(
                float(roof.value(x)) - float(gamma_coboundary(fx)) + float(gamma_coboundary(x))
            )
        worst = max(worst, max(vals) - min(vals))
    return worst


# -- bump perturbation ---------------------------------------------------------


def _orbit_points(m: ExpandingMarkovMap, x, max_steps: int = 64):
    """Forward orbit of x, stopping at closure, a boundary hit, or the cap."""
    pts = []
    y = x
    seen = set()
    for _ in range(max_steps):
        key = y if isinstance(y, Rational) else round(float(y), 14)
        if key in seen:
            break
        seen.add(key)
        pts.append(y)
        try:
            y, _k = m.evaluate(y)
        except BoundaryPoint:
            break
    return pts


def perturb_bump(
    roof: RoofFunction,
    center,
    radius,
    amplitude,
    protected: Iterable = (),
    protect_steps: int = 64,
) -> RoofFunction:
    """Add a compactly supported bump a*(1 - u^2)^3, u = (x-center)/radius.

    The bump is C^2 with support [center-radius, center+radius].  Every
    protected point's forward orbit must avoid the support; positivity
    requires |amplitude| < the roof's lower bound.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if abs(amplitude) >= float(roof.lower_bound):
        raise ValueError("|amplitude| must stay below the roof lower bound")
    if amplitude == 0:
        return roof

    for p in protected:
        for y in _orbit_points(roof.base, p, protect_steps):
            if abs(float(y) - float(center)) <= float(radius):
                raise ProtectedOrbitHit(
                    f"bump support [{float(center - radius):.6g}, "
                    f"{float(center + radius):.6g}] contains orbit point {float(y):.6g}"
                )

    exact = roof.exact and all(_is_rational(v) for v in (center, radius, amplitude))
    if exact:
        c, rad, amp = Fraction(center), Fraction(radius), Fraction(amplitude)
    else:
        c, rad, amp = float(center), float(radius), float(amplitude)
    old_value = roof.value

    def value(x):
        base_val = old_value(x)
        u = (x - c) / rad
        if not -1 < u < 1:
            return base_val
        w = 1 - u * u
        return base_val + amp * w * w * w

    old_many = roof.vectorized()
    fc, frad, famp = float(center), float(radius), float(amplitude)

    def value_many(xs):
        vals = np.asarray(old_many(xs), dtype=float).copy()
        u = (np.asarray(xs, dtype=float) - fc) / frad
        mask = np.abs(u) < 1.0
        w = 1.0 - u[mask] * u[mask]
        vals[mask] += famp * w * w * w
        return vals

    new_lower = float(roof.lower_bound) + min(0.0, float(amplitude))
    new_lip = float(roof.branch_lipschitz) + (
        _BUMP_SLOPE_SUP * abs(float(amplitude)) / float(radius)
    ) * roof.base.expansion_bound * (1.0 + 1e-6)
    return replace(
        roof,
        value=value,
        lower_bound=new_lower,
        branch_lipschitz=new_lip,
        exact=exact,
        label=roof.label + "+bump",
        value_many=value_many,
    )
