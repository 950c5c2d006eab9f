"""Cohomology searches, coboundary certificates, and roof perturbations."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixlab.errors import ProtectedOrbitHit
from mixlab.markov_maps import doubling_map, three_branch_map
from mixlab.roof import (
    birkhoff_sum,
    certify_coboundary,
    constant_roof,
    cosine_roof,
    per_branch_polynomial_roof,
    perturb_bump,
    polynomial_roof,
    validate_roof,
    witness_search,
)

GAP = Fraction(4, 45)  # 26/5 - 46/9, the period-4 obstruction for 1 + x^2


def xsq_roof():
    return polynomial_roof(doubling_map(), (Fraction(1), Fraction(0), Fraction(1)))


# ---------------------------------------------------------------------------
# witness search, exact route


def test_witness_for_one_plus_x_squared_is_exact():
    report = witness_search(xsq_roof(), max_period=4)
    assert report.verdict == "WitnessFound"
    w = report.witness
    assert w.period == 4
    assert {w.sum1, w.sum2} == {Fraction(26, 5), Fraction(46, 9)}
    assert w.gap == GAP
    assert isinstance(w.gap, Fraction)


def test_witness_orbit_segments_share_visit_counts():
    w = witness_search(xsq_roof(), max_period=4).witness
    assert sorted(w.itinerary1) == sorted(w.itinerary2)
    assert w.itinerary1 != w.itinerary2


def test_witness_sums_confirmed_by_forward_iteration():
    # independent route: Birkhoff sums from the stored periodic points
    roof = xsq_roof()
    w = witness_search(roof, max_period=4).witness
    assert birkhoff_sum(roof, w.x1, w.period) == w.sum1
    assert birkhoff_sum(roof, w.x2, w.period) == w.sum2


def test_witness_float_route_close_to_exact():
    roof = polynomial_roof(doubling_map(), (1.0, 0.0, 1.0))
    report = witness_search(roof, max_period=4)
    assert report.verdict == "WitnessFound"
    assert abs(report.witness.gap - float(GAP)) <= 1e-12


def test_witness_csv_carries_tolerance_column():
    csv_text = witness_search(xsq_roof(), max_period=4).to_csv()
    lines = csv_text.splitlines()
    assert lines[0] == "itinerary1,itinerary2,sum1,sum2,gap,tolerance"
    assert lines[1].endswith(",0")  # exact rational sums
    assert "4/45" in lines[1]


# ---------------------------------------------------------------------------
# coboundary certificates


def test_one_plus_x_is_coboundary_of_identity():
    roof = polynomial_roof(doubling_map(), (Fraction(1), Fraction(1)))
    residual = certify_coboundary(roof, lambda x: x, probes=10_000)
    assert residual <= 1e-12
    assert witness_search(roof, max_period=8).verdict == "NoWitnessUpToPeriod"


def test_constant_roof_needs_no_transfer_term():
    roof = constant_roof(doubling_map(), Fraction(3, 2))
    assert certify_coboundary(roof, lambda x: 0 * x, probes=500) == 0
    assert witness_search(roof, max_period=6).verdict == "NoWitnessUpToPeriod"


def _coboundary_roof(base, a: Fraction, b: Fraction):
    """r = c + gamma o f - gamma for gamma(x) = a x + b x^2, c large enough."""
    c = 1 + 2 * (abs(a) + 3 * abs(b))
    table = []
    for br in base.branches:
        s, t = br.slope, br.intercept
        c0 = c + a * t + b * t * t
        c1 = a * s + 2 * b * s * t - a
        c2 = b * s * s - b
        table.append((c0, c1, c2))
    gamma = lambda x: a * x + b * x * x
    return per_branch_polynomial_roof(base, table), gamma


@given(
    st.fractions(min_value=-2, max_value=2, max_denominator=8),
    st.fractions(min_value=-2, max_value=2, max_denominator=8),
)
@settings(max_examples=15, deadline=None)
def test_coboundaries_never_produce_witnesses(a, b):
    roof, gamma = _coboundary_roof(doubling_map(), a, b)
    assert certify_coboundary(roof, gamma, probes=300) <= 1e-10
    report = witness_search(roof, max_period=5, threshold=1e-10)
    assert report.verdict == "NoWitnessUpToPeriod"


def test_certificate_rejects_wrong_transfer_term():
    roof = xsq_roof()
    residual = certify_coboundary(roof, lambda x: x, probes=2_000)
    assert residual > 1e-3  # 1 + x^2 is not cohomologous via gamma(x) = x


# ---------------------------------------------------------------------------
# roof validation


def test_validate_accepts_builtin_roofs():
    assert validate_roof(xsq_roof(), probes=2_000).passed
    assert validate_roof(cosine_roof(doubling_map(), 2, Fraction(1, 2)), probes=2_000).passed
    assert validate_roof(
        per_branch_polynomial_roof(three_branch_map(), [(1,), (2,), (Fraction(3, 2),)]),
        probes=2_000,
    ).passed


def test_roof_must_be_positive():
    with pytest.raises(ValueError):
        polynomial_roof(doubling_map(), (Fraction(0), Fraction(1)))  # r(0) = 0


def test_validate_flags_false_lipschitz_claim():
    roof = polynomial_roof(
        doubling_map(), (Fraction(1), Fraction(0), Fraction(1)), branch_lipschitz=Fraction(1, 100)
    )
    report = validate_roof(roof, probes=2_000)
    assert not report["branch_lipschitz"].passed


# ---------------------------------------------------------------------------
# perturbations


def test_bump_is_local_and_exact_outside_support():
    roof = xsq_roof()
    bumped = perturb_bump(roof, Fraction(1, 8), Fraction(1, 16), Fraction(1, 2))
    inside = Fraction(1, 8)
    outside = [Fraction(1, 3), Fraction(3, 4), Fraction(1, 16), Fraction(9, 10)]
    assert bumped.value(inside) == roof.value(inside) + Fraction(1, 2)
    for x in outside:
        assert bumped.value(x) == roof.value(x)  # exact rational equality


def test_bump_peak_value_is_amplitude():
    roof = constant_roof(doubling_map(), 2)
    bumped = perturb_bump(roof, Fraction(1, 4), Fraction(1, 8), Fraction(1, 3))
    assert bumped.value(Fraction(1, 4)) - roof.value(Fraction(1, 4)) == Fraction(1, 3)


def test_bump_protecting_witness_orbit_raises():
    roof = xsq_roof()
    w = witness_search(roof, max_period=4).witness
    with pytest.raises(ProtectedOrbitHit):
        perturb_bump(roof, w.x1, Fraction(1, 32), Fraction(1, 4), protected=(w.x1,))


def test_bump_amplitude_capped_by_lower_bound():
    roof = constant_roof(doubling_map(), 1)
    with pytest.raises(ValueError):
        perturb_bump(roof, Fraction(1, 2), Fraction(1, 8), Fraction(3, 2))


def test_witness_survives_disjoint_bump():
    # supports avoiding both orbits leave all period-4 sums untouched
    roof = xsq_roof()
    w = witness_search(roof, max_period=4).witness
    bumped = perturb_bump(roof, Fraction(1, 100), Fraction(1, 200), Fraction(1, 2))
    after = witness_search(bumped, max_period=4).witness
    assert after.gap == w.gap
