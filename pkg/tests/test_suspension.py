"""Suspension semiflow tests: exact flow, correlations, decay fits, distances."""

import math
from fractions import Fraction

import numpy as np
import pytest

from mixlab.errors import BoundaryPoint, BracketUndefined, WindowTooShort
from mixlab.markov_maps import doubling_map, three_branch_map
from mixlab.roof import constant_roof, polynomial_roof
from mixlab.solenoid import build as build_solenoid
from mixlab.suspension import (
    CorrelationSeries,
    correlation,
    default_observables,
    fit_rate,
    flow_to,
    sample_invariant,
    suspend,
    svg_log_plot,
    temporal_distance,
)


def _xsq_susp():
    base = doubling_map()
    roof = polynomial_roof(base, (Fraction(1), Fraction(0), Fraction(1)))
    return suspend(base, roof)


def _const_susp():
    base = doubling_map()
    return suspend(base, constant_roof(base, Fraction(1)))


def _solenoid_susp():
    skew = build_solenoid(2, 20.0, 0.25).skew
    return suspend(skew, constant_roof(skew.base, Fraction(1)))


# -- flow --------------------------------------------------------------------


def test_flow_semigroup_exact():
    susp = _xsq_susp()
    p = (Fraction(1, 5), Fraction(1, 2))
    s, t = Fraction(3, 4), Fraction(5, 7)
    one_step = flow_to(susp, p, s + t)
    two_step = flow_to(susp, flow_to(susp, p, s), t)
    assert one_step == two_step
    assert isinstance(one_step[0], Fraction) and isinstance(one_step[1], Fraction)
    assert flow_to(susp, p, Fraction(0)) == p


def test_flow_crossing_lands_on_image_floor():
    susp = _xsq_susp()
    # flowing exactly one roof height crosses once and returns to u = 0
    x = Fraction(1, 5)
    r = Fraction(1) + x * x
    assert flow_to(susp, (x, Fraction(0)), r) == (Fraction(2, 5), Fraction(0))


def test_flow_float_path_tracks_exact_path():
    susp = _xsq_susp()
    exact = flow_to(susp, (Fraction(1, 5), Fraction(1, 2)), Fraction(13, 4))
    approx = flow_to(susp, (0.2, 0.5), 3.25)
    assert approx[0] == pytest.approx(float(exact[0]), abs=1e-12)
    assert approx[1] == pytest.approx(float(exact[1]), abs=1e-12)


def test_flow_rejects_bad_phase_points():
    susp = _xsq_susp()
    with pytest.raises(ValueError):
        flow_to(susp, (Fraction(1, 5), Fraction(3, 2)), Fraction(1))  # u >= r(x)
    with pytest.raises(ValueError):
        flow_to(susp, (Fraction(1, 5), Fraction(0)), Fraction(-1))


def test_flow_boundary_orbit_raises():
    susp = _xsq_susp()
    # 1/4 doubles onto the partition edge 1/2
    with pytest.raises(BoundaryPoint):
        flow_to(susp, (Fraction(1, 4), Fraction(0)), Fraction(4))


def test_flow_over_skew_base_carries_fiber():
    susp = _solenoid_susp()
    start = ((0.2, np.zeros(2)), 0.0)
    (x, z), u = flow_to(susp, start, 2.0)
    assert x == pytest.approx(0.8)  # two doublings of the angle
    assert u == pytest.approx(0.0, abs=1e-12)
    assert z.shape == (2,)
    assert np.linalg.norm(z) <= 0.3 + 1e-12  # image radius of the model


# -- sampling and correlation -------------------------------------------------


def test_sample_invariant_respects_roof():
    susp = _xsq_susp()
    ps = sample_invariant(susp, 500, seed=2)
    assert len(ps) == 500
    roofs = susp.roof.vectorized()(ps.x)
    assert np.all(ps.u >= 0.0)
    assert np.all(ps.u < roofs)


def test_default_times_grid():
    susp = _const_susp()
    times = susp.default_times(0.5, 4.0)
    assert len(times) == 9
    assert times[0] == 0.0 and times[-1] == pytest.approx(4.0)
    assert np.allclose(np.diff(times), 0.5)


def test_correlation_at_zero_is_variance():
    susp = _xsq_susp()

    def phi(x, u):
        return np.cos(2.0 * np.pi * u)

    series = correlation(susp, phi, phi, times=[0.0], samples=4000, seed=1)
    assert series.values[0] >= -1e-12
    assert series.sample_count >= 4000
    assert series.std_errors[0] > 0.0


def test_correlation_thread_count_never_changes_bytes():
    susp = _xsq_susp()

    def phi(x, u):
        return np.sin(2.0 * np.pi * x) + 0.1 * u

    kw = dict(times=[0.0, 0.5, 1.0], samples=6000, seed=9, batch_size=1000)
    one = correlation(susp, phi, phi, threads=1, **kw)
    three = correlation(susp, phi, phi, threads=3, **kw)
    assert np.array_equal(one.values, three.values)
    assert np.array_equal(one.std_errors, three.std_errors)
    assert one.to_csv() == three.to_csv()


def test_correlation_validates_grid_and_samples():
    susp = _const_susp()
    phi = lambda x, u: x  # noqa: E731
    with pytest.raises(ValueError):
        correlation(susp, phi, phi, times=[0.5, 0.5], samples=100)
    with pytest.raises(ValueError):
        correlation(susp, phi, phi, times=[-1.0, 0.5], samples=100)
    with pytest.raises(ValueError):
        correlation(susp, phi, phi, times=[0.0, 0.5], samples=1)


def test_correlation_csv_uses_crlf_rows():
    susp = _const_susp()
    phi = lambda x, u: x  # noqa: E731
    series = correlation(susp, phi, phi, times=[0.0, 0.5], samples=200, seed=0)
    text = series.to_csv()
    assert text.startswith("t,rho,stderr\r\n")
    assert text.endswith("\r\n")
    assert len(text.strip().splitlines()) == 3


# -- decay fits ----------------------------------------------------------------


def _series(times, values, err):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    errs = np.full(len(times), err)
    return CorrelationSeries(times, values, errs, 1000)


def test_fit_rate_recovers_synthetic_exponential():
    times = np.arange(0.0, 15.5, 0.5)
    fit = fit_rate(_series(times, 0.8 * np.exp(-0.3 * times), 1e-9))
    assert fit.decay_rate == pytest.approx(0.3, abs=1e-9)
    assert fit.prefactor == pytest.approx(0.8, rel=1e-9)
    assert fit.r_squared > 0.999999
    assert fit.verdict == "ExponentialDecay"
    assert fit.points_used == len(times)
    assert fit.window == (0.0, 15.0)


def test_fit_rate_flat_series_is_no_decay():
    times = np.arange(0.0, 10.5, 0.5)
    fit = fit_rate(_series(times, np.full(len(times), 0.5), 1e-3))
    assert fit.verdict == "NoDecay"


def test_fit_rate_window_too_short():
    times = np.arange(0.0, 20.5, 0.5)
    with pytest.raises(WindowTooShort):
        fit_rate(_series(times, np.exp(-5.0 * times), 0.01))


def test_fit_summary_fields():
    times = np.arange(0.0, 15.5, 0.5)
    text = fit_rate(_series(times, 0.8 * np.exp(-0.3 * times), 1e-9)).summary()
    for key in ("gamma=", "gamma_stderr=", "C=", "r2=", "window_lo=",
                "window_hi=", "noise_floor=", "points_used=", "verdict="):
        assert key in text


# -- temporal distance ---------------------------------------------------------


def test_temporal_distance_closed_form_exact():
    susp = _xsq_susp()
    x, y, depth = Fraction(1, 5), Fraction(2, 5), 6
    td = temporal_distance(susp, x, y, depth)
    expected = (y * y - x * x) * (1 - Fraction(1, 4) ** depth) / 3
    assert td.value == expected
    assert isinstance(td.value, Fraction)
    assert td.past == (0,) * depth
    # certified truncation: branch Lipschitz 1, contraction 1/2
    assert td.truncation_bound == pytest.approx(float(y - x) * 0.5**depth / 0.5)
    # the bound dominates the dropped tail of the infinite sum
    tail = float((y * y - x * x) * Fraction(1, 4) ** depth / 3)
    assert tail <= td.truncation_bound


def test_temporal_distance_antisymmetric():
    susp = _xsq_susp()
    a = temporal_distance(susp, Fraction(1, 5), Fraction(2, 5), 5)
    b = temporal_distance(susp, Fraction(2, 5), Fraction(1, 5), 5)
    assert a.value == -b.value


def test_temporal_distance_constant_roof_vanishes():
    susp = _const_susp()
    td = temporal_distance(susp, Fraction(1, 5), Fraction(2, 5), 8)
    assert td.value == 0


def test_temporal_distance_inadmissible_past_raises():
    base = three_branch_map()
    susp = suspend(base, polynomial_roof(base, (Fraction(1), Fraction(0), Fraction(1))))
    # the first branch's image misses its own cell, so symbol 0 cannot
    # precede points sitting in cell 0
    with pytest.raises(BracketUndefined):
        temporal_distance(susp, Fraction(1, 10), Fraction(1, 5), 1, past=(0,))


def test_temporal_distance_validates_arguments():
    susp = _xsq_susp()
    with pytest.raises(ValueError):
        temporal_distance(susp, Fraction(1, 5), Fraction(2, 5), 0)
    with pytest.raises(ValueError):
        temporal_distance(susp, Fraction(1, 5), Fraction(2, 5), 3, past=(0, 1))
    with pytest.raises(ValueError):
        temporal_distance(susp, Fraction(1, 5), Fraction(2, 5), 1, past=(7,))


# -- observables and plots -------------------------------------------------------


def test_default_observables_names():
    assert [name for name, _, _ in default_observables(_xsq_susp())] == ["height_mix"]
    assert [name for name, _, _ in default_observables(_solenoid_susp())] == [
        "height_mix",
        "fiber_first",
        "fiber_last",
    ]


def test_svg_log_plot_smoke():
    times = np.arange(0.0, 15.5, 0.5)
    series = _series(times, 0.8 * np.exp(-0.3 * times), 1e-6)
    fit = fit_rate(series)
    text = svg_log_plot(series, fit)
    assert text.startswith("<svg") or "<svg" in text
    assert "</svg>" in text
