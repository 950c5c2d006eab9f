"""Transfer operator tests: exact branch sums, Ulam assembly, spectra, duality."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixlab.errors import BinMisalignment, BoundaryPoint, NoConvergence
from mixlab.markov_maps import (
    CallableBranch,
    ExpandingMarkovMap,
    doubling_map,
    expanding_circle_map,
    three_branch_map,
)
from mixlab.transfer_operator import (
    apply_exact,
    build_ulam,
    duality_check,
    integrate,
    invariant_density,
    spectral_gap,
    ulam_consistency,
)


def _three_branch_density(x):
    # exact invariant density: 3/4 on the first cell, 9/8 on the other two
    return Fraction(3, 4) if x < Fraction(1, 3) else Fraction(9, 8)


def _perturbed_doubling(a: float = 0.1) -> ExpandingMarkovMap:
    """Nonlinear full-branch map 2x + a sin(2 pi x) per half, fixing cell endpoints."""

    def make(shift: float):
        def fwd(x):
            return 2.0 * (x - shift) + a * math.sin(2.0 * math.pi * (x - shift))

        def dfwd(x):
            return 2.0 + 2.0 * math.pi * a * math.cos(2.0 * math.pi * (x - shift))

        def inv(y):
            lo, hi = shift, shift + 0.5
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if fwd(mid) <= y:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        return fwd, inv, dfwd

    f0, i0, d0 = make(0.0)
    f1, i1, d1 = make(0.5)
    branches = [
        CallableBranch(Fraction(0), Fraction(1, 2), f0, i0, d0),
        CallableBranch(Fraction(1, 2), Fraction(1), f1, i1, d1),
    ]
    lam = 1.0 / (2.0 - 2.0 * math.pi * a)
    return ExpandingMarkovMap(branches, [[1, 1], [1, 1]], expansion_bound=lam, name="wobble")


# -- pointwise operator ------------------------------------------------------


def test_apply_exact_doubling_constant_is_fixed():
    m = doubling_map()
    for x in (Fraction(1, 10), Fraction(3, 7), Fraction(9, 10)):
        out = apply_exact(m, lambda y: Fraction(1), x)
        assert out == Fraction(1)
        assert isinstance(out, Fraction)


def test_apply_exact_doubling_identity():
    m = doubling_map()
    for x in (Fraction(1, 5), Fraction(2, 3), Fraction(7, 9)):
        assert apply_exact(m, lambda y: y, x) == x / 2 + Fraction(1, 4)


def test_apply_exact_three_branch_counts_covering_branches():
    m = three_branch_map()
    # x in the image of all three branches: weights 1/2 + 1/3 + 1/3
    assert apply_exact(m, lambda y: Fraction(1), Fraction(9, 10)) == Fraction(7, 6)
    # x below 1/3 is missed by the first branch: 1/3 + 1/3
    assert apply_exact(m, lambda y: Fraction(1), Fraction(1, 10)) == Fraction(2, 3)


def test_apply_exact_boundary_raises():
    with pytest.raises(BoundaryPoint):
        apply_exact(doubling_map(), lambda y: 1.0, Fraction(1, 2))


def test_apply_exact_invariant_density_is_fixed_point():
    # reweighting by the exact invariant density makes constants invariant
    m = three_branch_map()
    for x in (Fraction(1, 10), Fraction(2, 5), Fraction(9, 10)):
        out = apply_exact(m, lambda y: Fraction(1), x, density=_three_branch_density)
        assert out == Fraction(1)


# -- Ulam assembly -----------------------------------------------------------


def test_ulam_doubling_two_bins_exact():
    op = build_ulam(doubling_map(), 2)
    assert np.array_equal(op.matrix, np.array([[0.5, 0.5], [0.5, 0.5]]))


def test_ulam_doubling_four_bins_exact():
    op = build_ulam(doubling_map(), 4)
    expected = np.array(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ]
    )
    assert np.array_equal(op.matrix, expected)


def test_ulam_misaligned_bins_rejected():
    with pytest.raises(BinMisalignment):
        build_ulam(doubling_map(), 3)
    with pytest.raises(BinMisalignment):
        build_ulam(three_branch_map(), 4)
    with pytest.raises(BinMisalignment):
        build_ulam(three_branch_map(), 2)


@pytest.mark.parametrize(
    "map_, bins",
    [
        (doubling_map(), 16),
        (three_branch_map(), 9),
        (expanding_circle_map(3), 9),
    ],
)
def test_ulam_rows_stochastic(map_, bins):
    op = build_ulam(map_, bins)
    assert np.all(op.matrix >= 0.0)
    assert np.max(np.abs(op.matrix.sum(axis=1) - 1.0)) <= 1e-12


def test_ulam_quadrature_rows_stochastic():
    op = build_ulam(_perturbed_doubling(), 32)
    assert np.all(op.matrix >= 0.0)
    assert np.max(np.abs(op.matrix.sum(axis=1) - 1.0)) <= 1e-12


def test_to_coo_lists_nonzeros():
    op = build_ulam(doubling_map(), 2)
    lines = op.to_coo().strip().splitlines()
    assert len(lines) == 4
    for line in lines:
        i, j, v = line.split()
        assert float(v) == 0.5
        assert int(i) in (0, 1) and int(j) in (0, 1)


# -- invariant densities -----------------------------------------------------


def test_invariant_density_doubling_uniform():
    d = invariant_density(build_ulam(doubling_map(), 64))
    assert np.max(np.abs(d.values - 1.0)) <= 1e-10
    assert abs(d.mass() - 1.0) <= 1e-12
    assert d.residual <= 1e-10
    assert d.iterations <= 3  # uniform start is already the fixed point
    assert abs(d.at(0.3) - 1.0) <= 1e-10


def test_invariant_density_three_branch_matches_exact_solve():
    # route 1: exact fixed point of the 3-cell transition matrix
    m3 = [
        [Fraction(0), Fraction(1, 2), Fraction(1, 2)],
        [Fraction(1, 3), Fraction(1, 3), Fraction(1, 3)],
        [Fraction(1, 3), Fraction(1, 3), Fraction(1, 3)],
    ]
    masses = (Fraction(1, 4), Fraction(3, 8), Fraction(3, 8))
    for j in range(3):
        assert sum(masses[i] * m3[i][j] for i in range(3)) == masses[j]
    oracle = [m * 3 for m in masses]  # densities on width-1/3 cells
    assert oracle == [Fraction(3, 4), Fraction(9, 8), Fraction(9, 8)]

    # route 2: Ulam discretization at fine, aligned bins
    d = invariant_density(build_ulam(three_branch_map(), 1023))
    cell = np.repeat(np.asarray([float(v) for v in oracle]), 341)
    assert np.max(np.abs(d.values - cell)) <= 1e-6
    assert abs(d.mass() - 1.0) <= 1e-12
    assert abs(d.at(0.1) - 0.75) <= 1e-6
    assert abs(d.at(0.9) - 1.125) <= 1e-6


def test_invariant_density_csv_shape():
    d = invariant_density(build_ulam(doubling_map(), 4))
    text = d.to_csv()
    assert text.startswith("bin_left,bin_right,value,residual\n")
    assert len(text.strip().splitlines()) == 5


def test_invariant_density_iteration_cap():
    with pytest.raises(NoConvergence):
        invariant_density(build_ulam(three_branch_map(), 9), tol=1e-12, max_iterations=1)


# -- second eigenvalue -------------------------------------------------------


def test_spectral_gap_rank_one_matrix_is_zero():
    # two-bin doubling matrix is rank one: nothing survives deflation
    assert spectral_gap(build_ulam(doubling_map(), 2)) == 0.0


def test_spectral_gap_doubling_dichotomy():
    # bin counts with an odd factor see the true second modulus 1/2;
    # power-of-two counts make the chain exactly uniform after log2(N)
    # steps, so every sub-leading mode is transient and the estimate is 0
    assert abs(spectral_gap(build_ulam(doubling_map(), 96)) - 0.5) <= 1e-6
    assert spectral_gap(build_ulam(doubling_map(), 64)) == 0.0
    assert spectral_gap(build_ulam(doubling_map(), 1024)) == 0.0


def test_dense_eigenvalues_confirm_dichotomy():
    # dense eigensolve as the independent route for both regimes
    for bins, target, tol in ((96, 0.5, 1e-6), (64, 0.0, 0.01)):
        lam = np.linalg.eigvals(build_ulam(doubling_map(), bins).matrix)
        lam = lam[np.argsort(-np.abs(lam))]
        assert abs(lam[0] - 1.0) <= 1e-8
        assert abs(np.abs(lam[1]) - target) <= tol


def test_second_modulus_of_stochastic_matrices_at_most_one():
    rng = np.random.default_rng(0)
    for n in (2, 3, 5, 8, 13):
        for _ in range(10):
            m = rng.dirichlet(np.ones(n), size=n)
            lam = np.sort(np.abs(np.linalg.eigvals(m)))[::-1]
            assert lam[1] <= 1.0 + 1e-9


def test_spectral_gap_flags_nonstabilizing_estimate():
    # 22 bins put many equal-modulus rotating eigenvalues in play; the
    # windowed growth estimate beats forever instead of settling
    with pytest.raises(NoConvergence):
        spectral_gap(build_ulam(doubling_map(), 22), max_iterations=3000)


# -- duality -----------------------------------------------------------------


def test_duality_value_frozen_by_two_exact_routes():
    # route 1: piecewise antiderivative of x f(x) over the two branches
    lhs = (
        Fraction(2, 3) * Fraction(1, 2) ** 3
        + Fraction(2, 3) * (1 - Fraction(1, 8))
        - Fraction(1, 2) * (1 - Fraction(1, 4))
    )
    # route 2: x (L x)(x) = x (x/2 + 1/4) integrated over [0, 1]
    rhs = Fraction(1, 3) * Fraction(1, 2) + Fraction(1, 2) * Fraction(1, 4)
    assert lhs == rhs == Fraction(7, 24)

    m = doubling_map()
    ident = lambda x: x  # noqa: E731
    num_lhs = integrate(m, lambda x: float(m.evaluate(x)[0]) * x, 2000, None)
    num_rhs = integrate(m, lambda x: x * float(apply_exact(m, ident, x)), 2000, None)
    assert abs(num_lhs - 7.0 / 24.0) <= 1e-13
    assert abs(num_rhs - 7.0 / 24.0) <= 1e-13
    assert duality_check(m, ident, ident) <= 1e-13


def test_duality_with_invariant_density():
    gap = duality_check(
        three_branch_map(),
        lambda x: float(x) ** 2,
        lambda x: float(x),
        density=lambda x: float(_three_branch_density(Fraction(x).limit_denominator(10**9))),
    )
    assert gap <= 1e-12


# -- conservation and consistency --------------------------------------------


def test_mass_conserved_for_random_piecewise_polynomials():
    rng = np.random.default_rng(1)
    for map_, bins in ((doubling_map(), 64), (three_branch_map(), 63)):
        op = build_ulam(map_, bins)
        mids = 0.5 * (op.bin_edges[:-1] + op.bin_edges[1:])
        for _ in range(50):
            coeffs = rng.uniform(-1.0, 1.0, size=4)
            vals = np.abs(np.polynomial.polynomial.polyval(mids, coeffs)) + 0.1
            masses = vals * np.diff(op.bin_edges)
            pushed = masses @ op.matrix
            assert abs(pushed.sum() - masses.sum()) <= 1e-8
            assert np.all(pushed >= 0.0)


@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=8, max_size=8)
)
@settings(max_examples=50, deadline=None)
def test_mass_and_positivity_preserved(masses):
    op = build_ulam(doubling_map(), 8)
    p = np.asarray(masses)
    q = p @ op.matrix
    assert np.all(q >= 0.0)
    assert abs(q.sum() - p.sum()) <= 1e-10 * max(1.0, p.sum())


def test_ulam_consistency_exact_density_resolved():
    # piecewise-constant density on aligned bins: refinement changes nothing
    l1, const = ulam_consistency(three_branch_map(), 96)
    assert l1 <= 1e-8
    assert const <= 1e-6


def test_ulam_consistency_nonlinear_rate():
    map_ = _perturbed_doubling()
    l1, const = ulam_consistency(map_, 64)
    assert 0.0 < l1 <= 1.0 / 64.0
    assert const == pytest.approx(l1 * 64.0)
    d = invariant_density(build_ulam(map_, 64))
    assert np.all(d.values > 0.0)
    assert abs(d.mass() - 1.0) <= 1e-12
