"""Uniformly expanding Markov maps of the interval.

A map is a finite ordered list of branches, one per partition cell; each
branch is a diffeomorphism from its half-open cell onto a contiguous union
of cells recorded in a 0/1 transition matrix.  Affine branches with rational
data support an exact arithmetic path (`fractions.Fraction` in, Fraction
out), which the cohomology and inducing machinery rely on; general branches
are plain callables and get probed numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BoundaryPoint,
    InadmissibleItinerary,
    InsufficientDepth,
    NoReturn,
)

GEOM_TOL = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def low_discrepancy(n: int, lo: float = 0.0, hi: float = 1.0, phase: float = 0.0):
    """Deterministic golden-ratio (Kronecker) sequence in (lo, hi).

    Offset by half a step so no probe ever lands on an endpoint.
    """
    u = (phase + (np.arange(n) + 0.5) * _GOLDEN) % 1.0
    return lo + (hi - lo) * u


@dataclass(frozen=True)
class AffineBranch:
    """One full branch x -> slope*x + intercept on the cell [lo, hi)."""

    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError("branch cell is empty")
        if self.slope == 0:
            raise ValueError("branch slope must be nonzero")

    def forward(self, x):
        return self.slope * x + self.intercept

    def inverse(self, y):
        return (y - self.intercept) / self.slope

    def derivative(self, x):
        return self.slope

    @property
    def image_lo(self) -> Fraction:
        a, b = self.forward(self.lo), self.forward(self.hi)
        return min(a, b)

    @property
    def image_hi(self) -> Fraction:
        a, b = self.forward(self.lo), self.forward(self.hi)
        return max(a, b)

    @property
    def is_affine(self) -> bool:
        return True


@dataclass(frozen=True)
class CallableBranch:
    """Branch given by user callables; no exact path available."""

    lo: Fraction
    hi: Fraction
    forward_fn: Callable[[float], float]
    inverse_fn: Callable[[float], float]
    derivative_fn: Callable[[float], float]

    def forward(self, x):
        return self.forward_fn(float(x))

    def inverse(self, y):
        return self.inverse_fn(float(y))

    def derivative(self, x):
        return self.derivative_fn(float(x))

    @property
    def image_lo(self) -> float:
        return min(self.forward(float(self.lo)), self.forward(float(self.hi)))

    @property
    def image_hi(self) -> float:
        return max(self.forward(float(self.lo)), self.forward(float(self.hi)))

    @property
    def is_affine(self) -> bool:
        return False


@dataclass(frozen=True)
class AxiomCheck:
    axiom: str
    status: str  # "pass" | "fail"
    worst_probe: float
    location: float
    tolerance: float = 0.0  # threshold the worst probe was held against

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AxiomCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, axiom: str) -> AxiomCheck:
        for c in self.checks:
            if c.axiom == axiom:
                return c
        raise KeyError(axiom)

    def to_csv(self) -> str:
        lines = ["axiom,status,worst_probe,location,tolerance"]
        for c in self.checks:
            lines.append(
                f"{c.axiom},{c.status},{c.worst_probe:.17g},{c.location:.17g},{c.tolerance:.17g}"
            )
        return "\n".join(lines) + "\n"


class ExpandingMarkovMap:
    """Piecewise expanding interval map with Markov partition.

    Cells are half-open `[lo, hi)`; evaluation exactly on an interior
    breakpoint raises BoundaryPoint so measure-zero ambiguity never leaks
    into estimators.  Immutable after construction.
    """

    def __init__(
        self,
        branches: Sequence[AffineBranch | CallableBranch],
        transition_matrix: Sequence[Sequence[int]],
        expansion_bound: float,
        distortion_bound: float = 1.0,
        name: str = "",
    ):
        self.branches = tuple(branches)
        self.transition = tuple(tuple(int(v) for v in row) for row in transition_matrix)
        self.expansion_bound = expansion_bound
        self.distortion_bound = distortion_bound
        self.name = name

        k = len(self.branches)
        if len(self.transition) != k or any(len(r) != k for r in self.transition):
            raise ValueError("transition matrix shape must match branch count")
        for a, b in zip(self.branches, self.branches[1:]):
            if a.hi != b.lo:
                raise ValueError("branch cells must tile the domain in order")
        self.domain_lo = self.branches[0].lo
        self.domain_hi = self.branches[-1].hi
        # cell edges, exact where branch data is exact
        self.edges = tuple([b.lo for b in self.branches] + [self.domain_hi])
        self._edges_f = np.array([float(e) for e in self.edges])
        self._slopes_f = np.array(
            [float(b.slope) if b.is_affine else np.nan for b in self.branches]
        )
        self._intercepts_f = np.array(
            [float(b.intercept) if b.is_affine else np.nan for b in self.branches]
        )

    # -- basic queries ---------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.branches)

    @property
    def is_affine(self) -> bool:
        return all(b.is_affine for b in self.branches)

    @property
    def is_full_branch(self) -> bool:
        return all(all(v == 1 for v in row) for row in self.transition)

    def cell_index(self, x, side: str = "strict") -> int:
        """Index k with x in [edge_k, edge_{k+1}).

        Inner partition edges raise BoundaryPoint under the default strict
        side so the caller decides; side="right" resolves them to the cell
        on the right, matching the half-open convention.
        """
        if x < self.domain_lo or x >= self.domain_hi:
            raise BoundaryPoint(f"{x} outside domain [{self.domain_lo}, {self.domain_hi})")
        for k, b in enumerate(self.branches):
            if x == b.lo and k > 0 and side == "strict":
                raise BoundaryPoint(f"{x} lies on a partition boundary")
            if b.lo <= x < b.hi:
                return k
        raise BoundaryPoint(f"{x} lies on a partition boundary")

    def evaluate(self, x, side: str = "strict"):
        """Return (f(x), branch index).  Exact for Fraction x on affine maps."""
        k = self.cell_index(x, side=side)
        return self.branches[k].forward(x), k

    def evaluate_many(self, x: np.ndarray) -> np.ndarray:
        """Vectorised forward map; cells taken half-open (right-continuous)."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self._edges_f, x, side="right") - 1, 0, self.n_cells - 1)
        if self.is_affine:
            return self._slopes_f[k] * x + self._intercepts_f[k]
        out = np.empty_like(x)
        flat_x, flat_k, flat_o = x.ravel(), k.ravel(), out.ravel()
        for i in range(flat_x.size):
            flat_o[i] = float(self.branches[int(flat_k[i])].forward(flat_x[i]))
        return out

    def image_cells(self, k: int) -> tuple[int, ...]:
        return tuple(j for j, v in enumerate(self.transition[k]) if v)

    def admissible(self, i: int, j: int) -> bool:
        return bool(self.transition[i][j])

    def branch_covers(self, k: int, y) -> bool:
        """Whether y lies in the (half-open) image of branch k."""
        return self.branches[k].image_lo <= y < self.branches[k].image_hi

    def inverse_into(self, k: int, y):
        """Preimage of y under branch k; y must lie in that branch's image."""
        if not self.branch_covers(k, y):
            raise InadmissibleItinerary(f"{y} not in image of branch {k}")
        return self.branches[k].inverse(y)

    # -- axiom validation --------------------------------------------------

    def validate_axioms(self, probes: int = 10_000) -> ValidationReport:
        """Probe bijectivity, the Markov property, expansion, and distortion.

        Failures are report rows, never exceptions.
        """
        if probes < 1:
            raise ValueError("probes must be >= 1")
        checks = []

        # branch bijectivity: forward(inverse(y)) returns y over each image
        worst, loc = 0.0, 0.0
        for k, b in enumerate(self.branches):
            ys = low_discrepancy(probes, float(b.image_lo), float(b.image_hi), phase=0.17 * k)
            for y in ys:
                err = abs(b.forward(b.inverse(y)) - y)
                if err > worst:
                    worst, loc = err, float(y)
        checks.append(
            AxiomCheck("bijectivity", "pass" if worst <= GEOM_TOL else "fail", worst, loc, GEOM_TOL)
        )

        # Markov property: image endpoints coincide with flagged cell span
        worst, loc = 0.0, 0.0
        for k, b in enumerate(self.branches):
            flagged = self.image_cells(k)
            if not flagged:
                worst, loc = math.inf, float(b.lo)
                continue
            if list(flagged) != list(range(flagged[0], flagged[-1] + 1)):
                worst, loc = math.inf, float(b.lo)  # non-contiguous target set
                continue
            want_lo = float(self.edges[flagged[0]])
            want_hi = float(self.edges[flagged[-1] + 1])
            err = max(abs(float(b.image_lo) - want_lo), abs(float(b.image_hi) - want_hi))
            if err > worst:
                worst, loc = err, float(b.lo)
        checks.append(
            AxiomCheck(
                "markov_images", "pass" if worst <= GEOM_TOL else "fail", worst, loc, GEOM_TOL
            )
        )

        # expansion: |f'| >= 1/lambda, reported as worst 1/|f'|
        worst, loc = 0.0, 0.0
        for k, b in enumerate(self.branches):
            xs = low_discrepancy(probes, float(b.lo), float(b.hi), phase=0.31 * k)
            for x in xs:
                v = 1.0 / abs(float(b.derivative(x)))
                if v > worst:
                    worst, loc = v, float(x)
        checks.append(
            AxiomCheck(
                "expansion",
                "pass" if worst <= self.expansion_bound + GEOM_TOL else "fail",
                worst,
                loc,
                self.expansion_bound + GEOM_TOL,
            )
        )

        # distortion: |D((log J) o h)| over inverse branches, J = 1/|f'|.
        # Finite differences of log J along h at probe pairs; zero for affine.
        worst, loc = 0.0, 0.0
        for k, b in enumerate(self.branches):
            if b.is_affine:
                continue
            ys = low_discrepancy(probes, float(b.image_lo), float(b.image_hi), phase=0.47 * k)
            h = (float(b.image_hi) - float(b.image_lo)) * 1e-6
            for y in ys[:-1]:
                x0, x1 = b.inverse(y), b.inverse(y + h)
                g0 = -math.log(abs(float(b.derivative(x0))))
                g1 = -math.log(abs(float(b.derivative(x1))))
                v = abs(g1 - g0) / h
                if v > worst:
                    worst, loc = v, float(y)
        checks.append(
            AxiomCheck(
                "distortion",
                "pass" if worst <= self.distortion_bound * (1.0 + 1e-6) else "fail",
                worst,
                loc,
                self.distortion_bound * (1.0 + 1e-6),
            )
        )
        return ValidationReport(tuple(checks))

    # -- periodic orbits ---------------------------------------------------

    def check_itinerary(self, itinerary: Sequence[int]) -> None:
        """Raise InadmissibleItinerary unless the cyclic word is admissible."""
        n = len(itinerary)
        if n == 0:
            raise InadmissibleItinerary("empty itinerary")
        for idx in itinerary:
            if not 0 <= idx < self.n_cells:
                raise InadmissibleItinerary(f"cell index {idx} out of range")
        for j in range(n):
            a, b = itinerary[j], itinerary[(j + 1) % n]
            if not self.admissible(a, b):
                raise InadmissibleItinerary(f"transition {a}->{b} forbidden")

    def periodic_points(self, itinerary: Sequence[int]):
        """Point x with f^n(x) = x realising the given cyclic itinerary.

        Exact (Fraction) for affine maps: the composed inverse branch is
        affine and its fixed point solves a linear equation.  General maps
        iterate the composed inverse to a fixed point.
        """
        self.check_itinerary(itinerary)
        if self.is_affine:
            # compose inverse branches innermost-first: h = h_{k_0} o ... o
            # h_{k_{n-1}} is affine y -> a*y + c, and |a| < 1 forces a unique
            # fixed point c / (1 - a)
            a, c = Fraction(1), Fraction(0)
            for k in reversed(itinerary):
                b = self.branches[k]
                a, c = a / b.slope, (c - b.intercept) / b.slope
            return c / (1 - a)
        x = 0.5 * (float(self.domain_lo) + float(self.domain_hi))
        for _ in range(200):
            y = x
            for k in reversed(itinerary):
                y = self.branches[k].inverse(y)
            if abs(y - x) < 1e-15:
                x = y
                break
            x = y
        return x

    def periodic_orbit(self, itinerary: Sequence[int]):
        """Orbit points (x, f x, ..., f^{n-1} x) for a periodic itinerary.

        Returns None if the orbit touches a cell boundary (the coding is
        then not realised by an interior point).
        """
        x = self.periodic_points(itinerary)
        orbit = []
        y = x
        for k in itinerary:
            b = self.branches[k]
            if not (b.lo < y < b.hi) and not (y == b.lo == self.domain_lo):
                return None
            orbit.append(y)
            y = b.forward(y)
        return orbit

    # -- first-return inducing ----------------------------------------------

    def induce_first_return(self, base_cell: int, depth_cap: int) -> "InducedMap":
        """First-return map to a partition cell, enumerated to R <= depth_cap.

        The countable branch family is materialised only up to the cap; the
        dropped mass m({R > depth_cap}) is reported on the result.
        """
        if not 0 <= base_cell < self.n_cells:
            raise ValueError("base_cell out of range")
        if depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        if not _recurrent(self.transition, base_cell):
            raise NoReturn(f"cell {base_cell} is not recurrent under the transition matrix")
        if not self.is_affine:
            raise NotImplementedError("first-return inducing requires affine branches")

        base = self.branches[base_cell]
        cell_lo, cell_hi = base.lo, base.hi
        cell_len = cell_hi - cell_lo
        branches: list[InducedBranch] = []

        # DFS over admissible excursion paths; a path (c_0=base, c_1, ..,
        # c_{R-1}) pulled back from the base cell gives one return branch.
        def pull_back(path: tuple[int, ...]):
            # cylinder = composed inverse along the path applied to the base
            # cell; admissibility of each step keeps every pull-back inside
            # the previous branch's image
            lo, hi = cell_lo, cell_hi
            for k in reversed(path):
                b = self.branches[k]
                lo, hi = b.inverse(lo), b.inverse(hi)
                if lo > hi:
                    lo, hi = hi, lo
            # f^R on the cylinder, composed outermost-last: x -> a*x + c
            a, c = Fraction(1), Fraction(0)
            for k in path:
                b = self.branches[k]
                a, c = b.slope * a, b.slope * c + b.intercept
            return lo, hi, a, c

        stack = [(base_cell,)]
        while stack:
            path = stack.pop()
            last = path[-1]
            depth = len(path)
            if self.admissible(last, base_cell):
                lo, hi, a, c = pull_back(path)
                branches.append(
                    InducedBranch(
                        itinerary=path,
                        return_time=depth,
                        lo=lo,
                        hi=hi,
                        slope=a,
                        intercept=c,
                    )
                )
            if depth < depth_cap:
                # push in reverse so pops see branch indices in order
                for j in reversed(range(self.n_cells)):
                    if j != base_cell and self.admissible(last, j):
                        stack.append(path + (j,))

        if not branches:
            raise NoReturn(f"no return path to cell {base_cell} within depth {depth_cap}")
        branches.sort(key=lambda b: (b.return_time, b.lo))
        enumerated = sum(b.hi - b.lo for b in branches)
        residual = (cell_len - enumerated) / cell_len
        return InducedMap(
            base=self,
            base_cell=base_cell,
            branches=tuple(branches),
            depth_cap=depth_cap,
            residual_mass=residual,
        )


def _recurrent(transition, k: int) -> bool:
    """Whether cell k can reach itself under the 0/1 transition matrix."""
    n = len(transition)
    seen = set()
    frontier = [j for j in range(n) if transition[k][j]]
    while frontier:
        j = frontier.pop()
        if j == k:
            return True
        if j in seen:
            continue
        seen.add(j)
        frontier.extend(i for i in range(n) if transition[j][i])
    return False


@dataclass(frozen=True)
class InducedBranch:
    """One first-return branch F = f^R on a cylinder inside the base cell."""

    itinerary: tuple[int, ...]
    return_time: int
    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction

    def forward(self, x):
        return self.slope * x + self.intercept

    @property
    def measure(self) -> Fraction:
        return self.hi - self.lo


@dataclass(frozen=True)
class InducedMap:
    """First-return system F = f^R to one partition cell, depth-capped."""

    base: ExpandingMarkovMap
    base_cell: int
    branches: tuple[InducedBranch, ...]
    depth_cap: int
    residual_mass: Fraction

    @property
    def max_return_time(self) -> int:
        return max(b.return_time for b in self.branches)

    @property
    def excursion_mass(self) -> Fraction:
        """Exact m(R >= 2): enumerated deep-branch mass plus the residual."""
        cell = self.base.branches[self.base_cell]
        total = cell.hi - cell.lo
        deep = sum((b.measure for b in self.branches if b.return_time >= 2), Fraction(0))
        return deep / total + self.residual_mass

    @property
    def tail_rate(self) -> float:
        """Fitted alpha in m(R >= n) <= C exp(-alpha n); +inf when R = 1 a.e."""
        return tail_statistics(self).alpha

    def tail_masses(self):
        """m(R >= n) for n = 1..depth_cap, normalised to the base cell.

        Exact Fractions; the residual mass beyond the cap sits in every
        level's tail, so m(R >= n) = residual + sum of deeper cell masses.
        """
        cell = self.base.branches[self.base_cell]
        total = cell.hi - cell.lo
        out = []
        for n in range(1, self.depth_cap + 1):
            mass = sum((b.measure for b in self.branches if b.return_time >= n), Fraction(0))
            out.append(mass / total + self.residual_mass)
        return out


@dataclass(frozen=True)
class TailStatistics:
    tail: tuple  # m(R >= n), n = 1..depth
    alpha: float
    sigma0: float
    alpha_stderr: float = 0.0

    @property
    def degenerate(self) -> bool:
        return math.isinf(self.alpha)


def tail_statistics(induced: InducedMap, roof_upper_bound: float = 1.0) -> TailStatistics:
    """Exponential tail fit: least squares on log m(R >= n) against n.

    sigma0 is reported as half the critical exponent alpha / roof_upper_bound,
    checked empirically: the reweighted masses m(R = n) * exp(sigma0 n taubar)
    must decay over the enumerated depths.
    """
    tail = induced.tail_masses()
    if induced.excursion_mass == 0:
        # immediate full return: no excursions at all
        return TailStatistics(tuple(tail), math.inf, math.inf)
    positive = [(n + 1, float(t)) for n, t in enumerate(tail) if t > 0]
    if len(positive) < 4:
        raise InsufficientDepth(f"only {len(positive)} positive tail points")
    ns = np.array([p[0] for p in positive], dtype=float)
    logs = np.log([p[1] for p in positive])
    slope, intercept = np.polyfit(ns, logs, 1)
    alpha = -float(slope)
    sigma0 = alpha / (2.0 * roof_upper_bound)
    resid = logs - (slope * ns + intercept)
    denom = float(np.sum((ns - ns.mean()) ** 2))
    if len(ns) > 2 and denom > 0:
        alpha_stderr = math.sqrt(float(np.sum(resid**2)) / (len(ns) - 2) / denom)
    else:
        alpha_stderr = math.inf
    # empirical convergence check of sum m(R=n) e^{sigma0 n taubar}
    masses = [float(tail[n] - tail[n + 1]) for n in range(len(tail) - 1)]
    terms = [m * math.exp(sigma0 * (n + 1) * roof_upper_bound) for n, m in enumerate(masses)]
    nonzero = [t for t in terms if t > 0]
    if len(nonzero) >= 4 and not nonzero[-1] < nonzero[1]:
        raise InsufficientDepth("reweighted tail terms do not decay; deepen the enumeration")
    return TailStatistics(tuple(tail), alpha, sigma0, alpha_stderr)


# -- built-in model zoo ------------------------------------------------------


def doubling_map() -> ExpandingMarkovMap:
    """x -> 2x mod 1 with partition [0,1/2), [1/2,1); full branch."""
    half = Fraction(1, 2)
    return ExpandingMarkovMap(
        branches=(
            AffineBranch(Fraction(0), half, Fraction(2), Fraction(0)),
            AffineBranch(half, Fraction(1), Fraction(2), Fraction(-1)),
        ),
        transition_matrix=((1, 1), (1, 1)),
        expansion_bound=0.5,
        name="doubling",
    )


def three_branch_map() -> ExpandingMarkovMap:
    """Transitive, not full-branch: 2x+1/3 | 3x-1 | 3x-2 on thirds.

    Cell A never maps to itself, which makes the first-return tails
    genuinely exponential with rate ln(3/2).
    """
    third = Fraction(1, 3)
    return ExpandingMarkovMap(
        branches=(
            AffineBranch(Fraction(0), third, Fraction(2), third),
            AffineBranch(third, 2 * third, Fraction(3), Fraction(-1)),
            AffineBranch(2 * third, Fraction(1), Fraction(3), Fraction(-2)),
        ),
        transition_matrix=((0, 1, 1), (1, 1, 1), (1, 1, 1)),
        expansion_bound=0.5,
        name="three_branch",
    )


def expanding_circle_map(degree: int) -> ExpandingMarkovMap:
    """x -> degree*x mod 1 with the natural full-branch partition."""
    if degree < 2:
        raise ValueError("degree must be >= 2")
    d = Fraction(degree)
    branches = tuple(
        AffineBranch(Fraction(k, degree), Fraction(k + 1, degree), d, Fraction(-k))
        for k in range(degree)
    )
    ones = tuple(tuple(1 for _ in range(degree)) for _ in range(degree))
    return ExpandingMarkovMap(branches, ones, expansion_bound=1.0 / degree, name=f"circle_{degree}")


BUILTIN_MAPS = {
    "doubling": doubling_map,
    "three_branch": three_branch_map,
}
