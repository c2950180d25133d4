from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from phaseless.errors import PreconditionViolated, SeparationViolated
from phaseless.geometry import (
    Bump,
    Chord,
    PotentialGrid,
    SceneConfig,
    build_scene,
    chord_integral,
    cutoff,
    ellipsoid_contains,
    in_plane_chord,
    measurement_pairs,
    mollified_source,
    random_sphere_points,
    smooth_step,
)


def test_scene_accepts_separated_balls(scene):
    assert scene.omega_diameter == 2.0
    assert scene.g_diameter == 5.0


@pytest.mark.parametrize(
    "args",
    [
        (1.0, 1.5, 2.0, 0.5),  # omega + 2 eps touches g1
        (1.0, 1.5, 1.8, 0.2),  # g1 + 2 eps exceeds g
        (1.0, 1.5, 2.5, 1.2),  # eps outside (0, 1)
        (-1.0, 1.5, 2.5, 0.2),
    ],
)
def test_scene_rejects_bad_separation(args):
    with pytest.raises(SeparationViolated):
        build_scene(*args)


def test_scene_rejects_empty_band():
    with pytest.raises(SeparationViolated):
        SceneConfig(1.0, 1.5, 2.5, 0.2, (3.0, 3.0))


def test_smooth_step_limits():
    s = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    out = smooth_step(s)
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[3] == 1.0 and out[4] == 1.0
    assert out[2] == pytest.approx(0.5)


def test_cutoff_is_one_on_g1_and_zero_outside_g(scene):
    pts = np.array([[0, 0, 0.0], [0, 0, 1.5], [0, 0, 2.5], [0, 0, 3.0]])
    chi = cutoff(pts, scene)
    np.testing.assert_array_equal(chi, [1.0, 1.0, 0.0, 0.0])


@given(
    x=st.floats(-1, 1), y=st.floats(-1, 1), z=st.floats(-1, 1),
    radius=st.floats(0.1, 1.0), amp=st.floats(0.0, 2.0),
)
def test_bump_bounded_and_compact(x, y, z, radius, amp):
    b = Bump((0.0, 0.0, 0.0), radius, amp)
    v = float(b(np.array([x, y, z])))
    assert 0.0 <= v <= amp * np.exp(-1.0) + 1e-15
    if x * x + y * y + z * z >= radius**2:
        assert v == 0.0


def test_bump_rejects_negative_amplitude():
    with pytest.raises(PreconditionViolated):
        Bump((0, 0, 0), 0.5, -0.1)


def test_potential_grid_samples_bumps(scene, phantom_bumps):
    q = PotentialGrid.from_bumps(scene, phantom_bumps, 16)
    nodes = q.nodes()
    direct = sum(b(nodes) for b in phantom_bumps)
    np.testing.assert_array_equal(q.values, direct)
    assert q.shape == (16, 16, 16)
    assert q.cell_volume == pytest.approx((5.0 / 16) ** 3)


def test_potential_grid_rejects_negative_values(scene):
    q = PotentialGrid.zeros(scene, 8)
    vals = np.zeros(q.shape)
    vals[4, 4, 4] = -1e-3
    with pytest.raises(PreconditionViolated):
        q.with_values(vals)


def test_potential_grid_rejects_values_outside_g(scene):
    q = PotentialGrid.zeros(scene, 8)
    vals = np.zeros(q.shape)
    vals[0, 0, 0] = 1.0  # corner node lies outside G
    with pytest.raises(PreconditionViolated):
        q.with_values(vals)


def test_bump_outside_g_rejected(scene):
    with pytest.raises(PreconditionViolated):
        PotentialGrid.from_bumps(scene, [Bump((2.3, 0, 0), 0.5, 1.0)], 8)


def test_trilinear_evaluation_reproduces_nodes(q_small):
    nodes = q_small.nodes()[::3, ::3, ::3].reshape(-1, 3)
    idx = np.argwhere(np.ones(q_small.shape, bool)[::3, ::3, ::3]) * 3
    np.testing.assert_allclose(
        q_small.evaluate(nodes, exact=False), q_small.values[tuple(idx.T)], atol=1e-15
    )


@given(z=st.floats(-1.2, 1.2), theta=st.floats(0, np.pi), frac=st.floats(-0.95, 0.95))
def test_in_plane_chord_endpoints_on_sphere(scene, z, theta, frac):
    rho = np.sqrt(scene.g1_radius**2 - z**2)
    ch = in_plane_chord(scene, z, theta, frac * rho)
    assert np.linalg.norm(ch.x0) == pytest.approx(1.5, rel=1e-12)
    assert np.linalg.norm(ch.x) == pytest.approx(1.5, rel=1e-12)
    assert ch.x0[2] == ch.x[2] == z
    mid = 0.5 * (ch.x0 + ch.x)
    assert mid[0] * np.cos(theta) + mid[1] * np.sin(theta) == pytest.approx(frac * rho, abs=1e-12)


def test_in_plane_chord_missing_sphere(scene):
    with pytest.raises(PreconditionViolated):
        in_plane_chord(scene, 0.0, 0.0, 1.6)


def _bump_diameter_integral(b):
    prof, _ = quad(lambda u: np.exp(-1.0 / (1.0 - u * u)) if abs(u) < 1 else 0.0, -1, 1, epsabs=1e-14)
    return b.amplitude * b.radius * prof


def test_chord_integral_exact_matches_closed_form(scene):
    b = Bump((0.0, 0.0, 0.2), 0.6, 0.1)
    q = PotentialGrid.from_bumps(scene, [b], 16)
    ch = in_plane_chord(scene, 0.2, 0.3, 0.0)  # through the centre
    assert chord_integral(q, ch, 2001, exact=True) == pytest.approx(_bump_diameter_integral(b), rel=1e-6)


def test_chord_integral_trilinear_converges(scene):
    b = Bump((0.0, 0.0, 0.0), 0.6, 0.1)
    ch = in_plane_chord(scene, 0.0, 0.3, 0.05)
    exact = chord_integral(PotentialGrid.from_bumps(scene, [b], 16), ch, 2001, exact=True)
    errs = [abs(chord_integral(PotentialGrid.from_bumps(scene, [b], n), ch, 801) - exact) for n in (16, 32, 64)]
    # second-order interpolation error: halving h cuts the error by about 4
    assert errs[0] / errs[1] > 2.5 and errs[1] / errs[2] > 2.5
    assert errs[2] / exact < 0.02


def test_measurement_pairs_shell(scene):
    pairs = measurement_pairs(scene, 20, 3, seed=7)
    assert len(pairs) == 60
    for ch in pairs:
        assert np.linalg.norm(ch.x0) == pytest.approx(1.5)
        assert scene.epsilon / 4 - 1e-12 <= ch.length < scene.epsilon


def test_measurement_pairs_deterministic(scene):
    a = measurement_pairs(scene, 5, 2, seed=3)
    b = measurement_pairs(scene, 5, 2, seed=3)
    assert a == b


def test_random_sphere_points_radius(rng):
    pts = random_sphere_points(100, 2.0, rng)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 2.0)


def test_ellipsoid_contains():
    x0, x = np.zeros(3), np.array([1.0, 0, 0])
    assert ellipsoid_contains(x, x0, 1.5, np.array([0.5, 0.2, 0.0]))
    assert not ellipsoid_contains(x, x0, 1.1, np.array([0.5, 0.5, 0.0]))
    with pytest.raises(PreconditionViolated):
        ellipsoid_contains(x, x0, 0.0, x)


def test_chord_geometry():
    ch = Chord((0, 0, 0), (3, 4, 0))
    assert ch.length == 5.0
    np.testing.assert_allclose(ch.points(np.array([0.5])), [[1.5, 2.0, 0.0]])


def test_mollified_source_normalised(scene):
    src = mollified_source(scene, (0.0, 0.0, 1.5), 0.05, n=32)
    assert src.grid_integral() == pytest.approx(1.0, rel=1e-12)
    assert src.evaluate(np.array([0.0, 0.0, 1.5])) > 0
    assert src.evaluate(np.array([0.0, 0.0, -2.6])) == 0.0


def test_mollified_source_requires_centre_on_s(scene):
    with pytest.raises(PreconditionViolated):
        mollified_source(scene, (0.0, 0.0, 1.0), 0.05)
    with pytest.raises(PreconditionViolated):
        mollified_source(scene, (0.0, 0.0, 1.5), 0.0)
