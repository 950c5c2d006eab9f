"""Hyperbolic skew products over expanding Markov bases.

F(x,z) = (f x, G(x, z)) with f an expanding Markov map and G contracting a
compact fiber ball into itself.  The module validates the contraction and
invariance axioms by probing, computes the family of fiber measures eta_x
as depth-n inverse-branch sums, integrates them against the base invariant
density, and probes the smoothness of x -> eta_x(v).

Observables are callables v(x, z) with z an array of fiber points, shape
(..., d); they must broadcast over the leading axes.  eta_x(v) is the
weighted sum of v over the fiber points reached by pushing the fiber
origin up every inverse branch chain of length depth; the truncation error
is kappa^depth times the observable's fiber Lipschitz constant times the
fiber diameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DepthOverflow, FiberEscape
from .markov_maps import ExpandingMarkovMap, low_discrepancy

NODE_BUDGET = 2_000_000


@dataclass(frozen=True)
class FiberBall:
    """Closed Euclidean ball serving as the fiber space."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("fiber ball radius must be positive")

    @property
    def dimension(self) -> int:
        return self.center.shape[-1]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, z, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(np.asarray(z) - self.center) <= self.radius + tol)

    def overshoot(self, z) -> float:
        """How far z sits outside the ball; <= 0 means inside."""
        return float(np.linalg.norm(np.asarray(z, dtype=float) - self.center) - self.radius)


@dataclass(frozen=True)
class AffineFiberFamily:
    """G(x, z) = contraction * z + translation(x); translation vectorized.

    The affine structure lets the disintegration push fiber origins down
    the whole inverse-branch tree with per-level array arithmetic instead
    of per-leaf chains.
    """

    contraction: float
    translation: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, z):
        return self.contraction * np.asarray(z, dtype=float) + self.translation_at(x)

    def translation_at(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        return np.asarray(self.translation(xs), dtype=float)


@dataclass(frozen=True)
class HyperbolicSkewProduct:
    base: ExpandingMarkovMap
    fiber_space: FiberBall
    fiber_map: Callable
    kappa: float
    base_point: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0,1)")
        origin = self.fiber_space.center if self.base_point is None else self.base_point
        object.__setattr__(self, "base_point", np.asarray(origin, dtype=float))
        if not self.fiber_space.contains(self.base_point):
            raise ValueError("fiber origin must lie in the fiber ball")

    @property
    def is_affine_fiber(self) -> bool:
        return isinstance(self.fiber_map, AffineFiberFamily)


def apply(skew: HyperbolicSkewProduct, w: tuple) -> tuple:
    """One step (x, z) -> (f x, G(x, z)); the fiber must not escape.

    Base points on an inner partition edge resolve to the right-hand cell,
    following the half-open cell convention.
    """
    x, z = w
    z = np.asarray(z, dtype=float)
    if not skew.fiber_space.contains(z):
        raise FiberEscape(f"input fiber point leaves the ball by {skew.fiber_space.overshoot(z):.3g}")
    fx, _k = skew.base.evaluate(x, side="right")
    z_new = np.asarray(skew.fiber_map(x, z), dtype=float)
    if not skew.fiber_space.contains(z_new):
        raise FiberEscape(
            f"fiber image leaves the ball by {skew.fiber_space.overshoot(z_new):.3g}"
        )
    return fx, z_new


def _ball_probes(ball: FiberBall, count: int, seed: int = 12345) -> np.ndarray:
    """Deterministic points of the ball, shape (count, d)."""
    rng = np.random.default_rng(seed)
    d = ball.dimension
    out = np.empty((count, d))
    have = 0
    while have < count:
        cand = rng.uniform(-1.0, 1.0, size=(2 * (count - have) + 8, d))
        keep = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
        take = min(len(keep), count - have)
        out[have : have + take] = keep[:take]
        have += take
    return ball.center + ball.radius * out


def validate_contraction(skew: HyperbolicSkewProduct, pairs: int = 100_000) -> float:
    """Worst fiber contraction ratio over sampled same-base pairs."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    lo = float(skew.base.domain_lo)
    hi = float(skew.base.domain_hi)
    xs = low_discrepancy(pairs, lo, hi, phase=0.41)
    z1 = _ball_probes(skew.fiber_space, pairs, seed=12345)
    z2 = _ball_probes(skew.fiber_space, pairs, seed=54321)
    worst = 0.0
    if skew.is_affine_fiber:
        # translation cancels on same-base pairs; ratio is |contraction| exactly
        sep = np.linalg.norm(z1 - z2, axis=1)
        ok = sep > 0
        num = abs(skew.fiber_map.contraction) * sep[ok]
        worst = float(np.max(num / sep[ok]))
    else:
        for x, a, b in zip(xs, z1, z2):
            sep = float(np.linalg.norm(a - b))
            if sep == 0:
                continue
            ga = np.asarray(skew.fiber_map(float(x), a), dtype=float)
            gb = np.asarray(skew.fiber_map(float(x), b), dtype=float)
            worst = max(worst, float(np.linalg.norm(ga - gb)) / sep)
    return worst


def validate_invariance(skew: HyperbolicSkewProduct, probes: int = 1_000) -> float:
    """Worst overshoot of G(x, Omega) outside the ball; <= 0 passes."""
    lo = float(skew.base.domain_lo)
    hi = float(skew.base.domain_hi)
    xs = low_discrepancy(probes, lo, hi, phase=0.43)
    zs = _ball_probes(skew.fiber_space, probes, seed=777)
    # include boundary points of the ball, where invariance is tightest
    boundary = zs - skew.fiber_space.center
    norms = np.linalg.norm(boundary, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    zs_boundary = skew.fiber_space.center + skew.fiber_space.radius * boundary / norms
    worst = -math.inf
    if skew.is_affine_fiber:
        for z_set in (zs, zs_boundary):
            trans = skew.fiber_map.translation_at(xs)
            imgs = skew.fiber_map.contraction * z_set + trans
            over = np.linalg.norm(imgs - skew.fiber_space.center, axis=1) - skew.fiber_space.radius
            worst = max(worst, float(np.max(over)))
    else:
        for z_set in (zs, zs_boundary):
            for x, z in zip(xs, z_set):
                img = np.asarray(skew.fiber_map(float(x), z), dtype=float)
                worst = max(worst, skew.fiber_space.overshoot(img))
    return worst


@dataclass(frozen=True)
class Disintegration:
    """Depth-n approximation of the fiber measures eta_x.

    evaluate(x, v) sums v over the fiber points carried to x along every
    inverse branch chain of length `depth`, weighted by the chain's
    transfer-operator weight.  The node budget caps the widest tree level
    (the arrays held live at once); deeper requests raise DepthOverflow.
    """

    skew: HyperbolicSkewProduct
    depth: int
    density: Callable | None = None
    node_budget: int = NODE_BUDGET

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    def truncation_bound(self, fiber_lipschitz: float) -> float:
        """Certified |eta_x(v) - lim| bound for v with the given fiber Lipschitz constant."""
        return (
            self.skew.kappa**self.depth
            * fiber_lipschitz
            * self.skew.fiber_space.diameter
        )

    def evaluate(self, x, v: Callable, origin: np.ndarray | None = None) -> float:
        xs, ws, zs = self._leaves(x, origin)
        return float(np.dot(ws, np.asarray(v(xs, zs), dtype=float)))

    def _leaves(self, x, origin: np.ndarray | None):
        """(base points, weights, fiber points) of the depth-n tree at x."""
        skew = self.skew
        base = skew.base
        start = skew.base_point if origin is None else np.asarray(origin, dtype=float)
        if not skew.fiber_space.contains(start):
            raise ValueError("origin must lie in the fiber ball")
        x = float(x)
        base.cell_index(x)  # raises BoundaryPoint outside/on edges
        if skew.is_affine_fiber:
            pts, ws, trans, scale = self._tree_affine(x)
            zs = trans + scale * start
        else:
            pts, ws, zs = self._tree_generic(x, start)
        phi_vals = None
        if self.density is not None:
            phi_vals = np.array([float(self.density(p)) for p in pts])
            ws = ws * phi_vals / float(self.density(x))
        xs = np.full(len(ws), x)
        return xs, ws, zs

    def _tree_affine(self, x: float):
        skew = self.skew
        base = skew.base
        fam: AffineFiberFamily = skew.fiber_map
        d = skew.fiber_space.dimension
        pts = np.array([x])
        ws = np.array([1.0])
        trans = np.zeros((1, d))
        scale = 1.0  # contraction^level, transports the origin term
        for level in range(1, self.depth + 1):
            child_pts, child_ws, child_trans = [], [], []
            for k, b in enumerate(base.branches):
                ilo, ihi = float(b.image_lo), float(b.image_hi)
                mask = (pts >= ilo) & (pts < ihi)
                if not mask.any():
                    continue
                sel = pts[mask]
                if b.is_affine:
                    slope = float(b.slope)
                    ys = (sel - float(b.intercept)) / slope
                    jac = np.full(len(ys), 1.0 / abs(slope))
                else:
                    ys = np.array([float(b.inverse(p)) for p in sel])
                    jac = 1.0 / np.abs([float(b.derivative(y)) for y in ys])
                child_pts.append(ys)
                child_ws.append(ws[mask] * jac)
                child_trans.append(trans[mask] + scale * fam.translation_at(ys))
            pts = np.concatenate(child_pts)
            ws = np.concatenate(child_ws)
            trans = np.concatenate(child_trans)
            scale *= fam.contraction
            if len(pts) > self.node_budget:
                raise DepthOverflow(
                    f"level {level} holds {len(pts)} nodes, budget {self.node_budget}"
                )
        return pts, ws, trans, scale

    def _tree_generic(self, x: float, start: np.ndarray):
        skew = self.skew
        base = skew.base
        leaves_pts, leaves_ws, leaves_zs = [], [], []
        visited = 0
        budget = self.node_budget
        # DFS carrying the current inverse-branch chain of base points
        stack = [(x, 1.0, ())]
        while stack:
            pt, w, chain = stack.pop()
            depth = len(chain)
            if depth == self.depth:
                # push the origin forward along the chain: the fiber map is
                # applied at the leaf and every ancestor except the root
                z = start
                forward = (pt,) + tuple(reversed(chain))[:-1]
                for y in forward:
                    z = np.asarray(skew.fiber_map(float(y), z), dtype=float)
                leaves_pts.append(pt)
                leaves_ws.append(w)
                leaves_zs.append(z)
                continue
            for k, b in enumerate(base.branches):
                if not (float(b.image_lo) <= pt < float(b.image_hi)):
                    continue
                y = float(b.inverse(pt))
                visited += 1
                if visited > budget:
                    raise DepthOverflow(f"inverse-branch tree exceeded {budget} nodes")
                stack.append((y, w / abs(float(b.derivative(y))), chain + (pt,)))
        return (
            np.array(leaves_pts),
            np.array(leaves_ws),
            np.array(leaves_zs),
        )

    def grid_csv(self, v: Callable, grid: int, fiber_lipschitz: float) -> str:
        """eta_x(v) on a uniform interior grid as CSV (x, value, error_bound)."""
        lo, hi = float(self.skew.base.domain_lo), float(self.skew.base.domain_hi)
        bound = self.truncation_bound(fiber_lipschitz)
        lines = ["x,value,error_bound"]
        for i in range(grid):
            x = lo + (hi - lo) * (i + 0.5) / grid
            val = self.evaluate(x, v)
            lines.append(f"{x:.17g},{val:.17g},{bound:.17g}")
        return "\n".join(lines) + "\n"


def disintegrate(
    skew: HyperbolicSkewProduct,
    depth: int,
    density: Callable | None = None,
    node_budget: int = NODE_BUDGET,
) -> Disintegration:
    """Depth-n fiber-measure family; see Disintegration."""
    return Disintegration(skew=skew, depth=depth, density=density, node_budget=node_budget)


def eta_integral(
    dis: Disintegration,
    v: Callable,
    base_density: Callable | None = None,
    panels: int = 64,
) -> float:
    """Integral of x -> eta_x(v) against the base invariant density.

    Composite midpoint quadrature per partition cell; panel count is per
    cell.  The density defaults to the normalized uniform one.
    """
    base = dis.skew.base
    total = 0.0
    span = float(base.domain_hi) - float(base.domain_lo)
    for b in base.branches:
        a, c = float(b.lo), float(b.hi)
        xs = a + (c - a) * (np.arange(panels) + 0.5) / panels
        for x in xs:
            val = dis.evaluate(float(x), v)
            w = (c - a) / panels
            if base_density is not None:
                val *= float(base_density(float(x)))
            total += w * val
    if base_density is None:
        total /= span
    return total


@dataclass(frozen=True)
class SandwichEstimate:
    """Bracket [lower, upper] around eta(v), plus sampling uncertainty.

    The bracket width (gap) is the exact distance between the upper and
    lower enclosing observables; stat_error is the standard error of the
    bracket's location coming from the base-point sample.
    """

    lower: float
    upper: float
    stat_error: float
    samples: int

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


def sandwich_estimate(
    skew: HyperbolicSkewProduct,
    v: Callable,
    depth: int,
    fiber_lipschitz: float,
    base_density: Callable | None = None,
    samples: int = 200_000,
    seed: int = 0,
) -> SandwichEstimate:
    """Bracket eta(v) between averages of fiberwise sup/inf enclosures.

    Works through forward orbits, not the inverse-branch tree, so it is an
    independent cross-check of eta_integral.  Over each sampled base point
    the whole fiber ball lands, after `depth` steps, inside the ball of
    radius kappa^depth * radius around the pushed center, so the center
    value widened by kappa^depth * Lip * radius encloses the fiberwise sup
    and inf.  The bracket width is kappa^depth * Lip * diam(ball) exactly.

    The average over starting points is Monte Carlo: the integrand mixes
    at the base expansion scale, so no fixed grid of affordable size can
    resolve it at useful depths (dyadic grids collapse onto periodic
    orbits of the circle map).  Base points are drawn uniformly; a given
    base_density enters by self-normalized importance weights.  The
    returned stat_error is the standard error of the weighted mean.
    """
    base = skew.base
    ball = skew.fiber_space
    pad = skew.kappa**depth * fiber_lipschitz * ball.radius
    lo_b, hi_b = float(base.domain_lo), float(base.domain_hi)

    rng = np.random.default_rng([seed])
    xs = lo_b + (hi_b - lo_b) * rng.random(samples)

    y = xs.copy()
    zs = np.tile(ball.center, (samples, 1)).astype(float)
    for _ in range(depth):
        if skew.is_affine_fiber:
            zs = skew.fiber_map(y, zs)
        else:
            zs = np.asarray([skew.fiber_map(float(p), z) for p, z in zip(y, zs)], dtype=float)
        y = base.evaluate_many(y)
    vals = np.asarray(v(y, zs), dtype=float)

    if base_density is None:
        mean = float(vals.mean())
        err = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    else:
        wts = np.asarray([float(base_density(float(x))) for x in xs])
        wbar = wts.mean()
        mean = float((wts * vals).mean() / wbar)
        # ratio-estimator delta method
        resid = wts * (vals - mean)
        err = (
            float(resid.std(ddof=1) / (wbar * math.sqrt(samples)))
            if samples > 1
            else math.inf
        )
    return SandwichEstimate(mean - pad, mean + pad, err, samples)


def smoothness_probe(
    dis: Disintegration,
    v: Callable,
    grid: int = 64,
    step: float = 1e-4,
) -> float:
    """Max finite-difference slope of x -> eta_x(v) over an interior grid."""
    base = dis.skew.base
    lo, hi = float(base.domain_lo), float(base.domain_hi)
    worst = 0.0
    xs = low_discrepancy(grid, lo, hi - step, phase=0.51)
    for x in xs:
        a = dis.evaluate(float(x), v)
        b = dis.evaluate(float(x) + step, v)
        worst = max(worst, abs(b - a) / step)
    return worst
