from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseless.errors import DegenerateWindow, PreconditionViolated, SeriesNotConverged
from phaseless.forward_time import (
    SeriesQuadrature,
    TimeTrace,
    estimate_decay_rate,
    extrapolate_front,
    front_value,
    kirchhoff_v0,
    near_front_limit,
    neumann_point_source,
    time_derivatives_at_zero,
    volume_source_trace,
)
from phaseless.geometry import Bump, Chord, PotentialGrid, chord_integral, in_plane_chord, mollified_source


@pytest.fixture(scope="module")
def chord(scene):
    return in_plane_chord(scene, 0.05, 0.4, 0.12)


@pytest.fixture(scope="module")
def trace(q_small, chord):
    return neumann_point_source(q_small, chord, T=chord.length + 0.6, h_t=0.002)


# ------------------------------------------------------------ TimeTrace


def test_time_trace_validation():
    t = np.linspace(0, 1, 11)
    with pytest.raises(PreconditionViolated):
        TimeTrace(t, np.ones(10))
    with pytest.raises(PreconditionViolated):
        TimeTrace(np.array([0.0, 0.1, 0.3]), np.ones(3))
    with pytest.raises(PreconditionViolated):
        TimeTrace(t, np.ones(11), front_time=1.0)
    with pytest.raises(PreconditionViolated):
        TimeTrace(t, np.ones(11), front_time=0.5)  # nonzero before the front
    tr = TimeTrace(t, np.where(t >= 0.5, 1.0, 0.0), front_time=0.5)
    assert tr.h == pytest.approx(0.1)
    assert tr.T == 1.0
    assert tr.with_decay_rate(2.0).decay_rate == 2.0


@given(st.floats(0.2, 20.0))
def test_decay_rate_of_exponential(c):
    t = np.linspace(0, 2, 201)
    assert estimate_decay_rate(TimeTrace(t, 3 * np.exp(-c * t))) == pytest.approx(c, rel=1e-9)


def test_decay_rate_window_checks():
    t = np.linspace(0, 2, 201)
    tr = TimeTrace(t, np.exp(-t))
    with pytest.raises(DegenerateWindow):
        estimate_decay_rate(tr, (1.5, 3.0))
    with pytest.raises(DegenerateWindow):
        estimate_decay_rate(TimeTrace(t, np.zeros_like(t)))


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_time_derivatives_exact_on_polynomials(order):
    h = 0.01
    p = np.polynomial.Polynomial([0.5, -2.0, 1.5, 4.0, -3.0, 0.7])  # degree max_order + 2 for max_order = 3
    got = time_derivatives_at_zero(p(h * np.arange(10)), h, 3)
    assert got[order] == pytest.approx(p.deriv(order)(0.0), rel=1e-6, abs=1e-6)


def test_extrapolate_front_polynomial():
    t = 1.0 + 0.01 * np.arange(30)
    tr = TimeTrace(t, 2.0 - (t - 1) + (t - 1) ** 2, front_time=1.0)
    assert extrapolate_front(tr) == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(DegenerateWindow):
        extrapolate_front(TimeTrace(t[:3], np.ones(3), front_time=1.0))


# --------------------------------------------------------- point source


def test_zero_potential_gives_zero_trace(scene, chord):
    tr = neumann_point_source(PotentialGrid.zeros(scene, 16), chord, T=chord.length + 0.3, n_terms=2, h_t=0.01)
    assert np.all(tr.values == 0)
    assert tr.kind == "point"
    assert tr.t_grid[0] == pytest.approx(chord.length)


def test_first_iterate_is_linear_in_q(scene, phantom_bumps, chord, trace):
    scaled = tuple(Bump(b.center, b.radius, 2.5 * b.amplitude) for b in phantom_bumps)
    q2 = PotentialGrid.from_bumps(scene, scaled, 24)
    tr2 = neumann_point_source(q2, chord, T=chord.length + 0.6, h_t=0.002)
    np.testing.assert_allclose(tr2.values, 2.5 * trace.values, rtol=1e-12, atol=1e-15)


def test_source_receiver_reciprocity(q_small, chord, trace):
    rev = Chord(chord.x, chord.x0)
    tr = neumann_point_source(q_small, rev, T=chord.length + 0.6, h_t=0.002)
    scale = np.abs(trace.values).max()
    assert np.abs(tr.values - trace.values).max() <= 1e-3 * scale


def test_front_value_matches_extrapolated_trace(q_small, chord, trace):
    fv = front_value(q_small, chord)
    assert fv < 0  # positive q along the chord
    assert near_front_limit(q_small, chord) == fv
    assert fv == pytest.approx(-chord_integral(q_small, chord, 401) / (8 * np.pi * chord.length))
    # the trace sees the bumps exactly; the trilinear grid integral is ~3% off at 24³
    exact = -chord_integral(q_small, chord, 401, exact=True) / (8 * np.pi * chord.length)
    assert extrapolate_front(trace) == pytest.approx(exact, rel=0.01)
    assert trace.values[0] == pytest.approx(exact, rel=0.01)


def test_series_terms_reported(q_small, chord):
    tr = neumann_point_source(q_small, chord, T=chord.length + 0.3, n_terms=2, h_t=0.01)
    assert len(tr.term_norms) == 2
    assert tr.term_norms[1] < 0.05 * tr.term_norms[0]  # weak scatterer


def test_series_not_converged(scene, chord):
    strong = PotentialGrid.from_bumps(scene, (Bump((0.0, 0.0, 0.0), 0.9, 400.0),), 16)
    with pytest.raises(SeriesNotConverged):
        neumann_point_source(strong, chord, T=chord.length + 1.0, n_terms=2, h_t=0.01,
                             vol_quad=SeriesQuadrature(tol_series=0.05))


def test_n_terms_validated(q_small, chord):
    with pytest.raises(PreconditionViolated):
        neumann_point_source(q_small, chord, n_terms=0)


# ------------------------------------------------------- volume source


def _gaussian_spherical_mean(src, x, t):
    # mean of exp(-|x + tω - c|²/(4σ)) over the unit sphere, closed form
    d = np.linalg.norm(np.asarray(x) - np.asarray(src.center))
    s = src.sigma
    amp = src.normalization * (2 * np.sqrt(np.pi * s)) ** -3
    return amp * (s / (t * d)) * (np.exp(-((d - t) ** 2) / (4 * s)) - np.exp(-((d + t) ** 2) / (4 * s)))


def test_kirchhoff_term_matches_closed_form(scene):
    # spheres of radius t <= 0.5 around x stay inside G1, where the cutoff is 1
    src = mollified_source(scene, (0.0, 0.0, 1.5), 0.01, n=24)
    x = np.array([0.0, 0.0, 1.0])
    t = np.linspace(0.05, 0.5, 10)
    got = kirchhoff_v0(src, x, t, surf_quad=(48, 24))
    want = t * _gaussian_spherical_mean(src, x, t)
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-9 * np.abs(want).max())


@pytest.fixture(scope="module")
def volume_setup(scene):
    q = PotentialGrid.from_bumps(scene, (Bump((0.0, 0.0, 1.5), 0.6, 0.1),), 24)
    src = mollified_source(scene, (0.0, 0.0, 1.5), 0.05, n=24)
    x = 1.5 * np.array([np.sin(0.1), 0.0, np.cos(0.1)])
    return q, src, x


def test_volume_trace_initial_slope_is_source(volume_setup):
    q, src, x = volume_setup
    tr = volume_source_trace(q, src, x, T=0.1, h_t=0.005)
    d = time_derivatives_at_zero(tr.values, tr.h, 3)
    assert d[0] == pytest.approx(0.0, abs=1e-12)
    assert d[1] == pytest.approx(float(src.evaluate(x)), rel=1e-4)


def test_scattered_volume_trace_third_derivative(volume_setup):
    q, src, x = volume_setup
    vs = volume_source_trace(q, src, x, T=0.1, h_t=0.005, scattered=True)
    d = time_derivatives_at_zero(vs.values, vs.h, 3)
    qg = float(q.evaluate(x)) * float(src.evaluate(x))
    assert abs(d[1]) <= 1e-6 * abs(qg) and abs(d[2]) <= 1e-3 * abs(qg)
    assert d[3] == pytest.approx(-qg, rel=1e-3)
