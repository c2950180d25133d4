from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseless.errors import DegenerateWindow, FitUnstable, PreconditionViolated, TailNotResolved
from phaseless.forward_freq import (
    AsymptoticSignature,
    SpectralTrace,
    born_series_freq,
    check_asymptote,
    default_fit_window,
    expected_signature,
    fft_k_grid,
    fit_line_integral,
    fourier_bridge,
    incident_field,
)
from phaseless.forward_time import TimeTrace, neumann_point_source
from phaseless.geometry import Chord, in_plane_chord


@given(st.floats(1e-3, 1e-2), st.floats(10.0, 300.0), st.floats(0.05, 1.0))
def test_fft_k_grid_properties(h_t, k_max, dk):
    try:
        k, n = fft_k_grid(h_t, k_max, dk)
    except PreconditionViolated:
        assert k_max > np.pi / h_t * 0.5  # only near the Nyquist limit
        return
    step = k[1] - k[0]
    assert step <= dk * (1 + 1e-12)
    assert step == pytest.approx(2 * np.pi / (n * h_t))
    assert n & (n - 1) == 0
    np.testing.assert_allclose(k, -k[::-1], atol=1e-12)
    assert k[-1] <= k_max + 1e-9 and k[-1] + step > k_max


def test_bridge_exponential_oracle():
    errs = []
    k = np.linspace(-20, 20, 81)
    for h in (0.01, 0.005):
        t = np.arange(0, 40 + h / 2, h)
        d = fourier_bridge(TimeTrace(t, np.exp(-t)), k, total=False).values
        errs.append(np.abs(d - 1 / (1 - 1j * k)).max())
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_bridge_exact_on_piecewise_linear():
    # triangle with nodes on the grid: the piecewise-linear transform is exact
    t = np.arange(0, 3.0001, 0.05)
    f = np.maximum(0.0, 1 - np.abs(t - 1))
    k = np.linspace(-30, 30, 61) + 1e-3
    want = np.exp(1j * k) * np.sinc(k / (2 * np.pi)) ** 2
    np.testing.assert_allclose(fourier_bridge(TimeTrace(t, f), k).values, want, atol=1e-12)


def test_bridge_fft_path_agrees_with_direct():
    t = np.arange(0, 20.0001, 0.01)
    tr = TimeTrace(t, np.exp(-t) * np.cos(3 * t))
    kg, _ = fft_k_grid(0.01, 50.0, 0.2)
    fast = fourier_bridge(tr, kg).values
    slow = fourier_bridge(tr, kg + 0j).values  # complex grid forces the direct sum
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_bridge_conjugate_symmetry():
    t = np.arange(0, 20.0001, 0.01)
    kg, _ = fft_k_grid(0.01, 50.0, 0.2)
    st_ = fourier_bridge(TimeTrace(t, np.exp(-t) * np.sin(5 * t)), kg)
    assert st_.conjugate_symmetry_error() < 1e-13


def test_bridge_tail_handling():
    t = np.arange(0, 2.0001, 0.001)
    tr = TimeTrace(t, np.exp(-t))
    k = np.linspace(-5, 5, 11)
    with pytest.raises(TailNotResolved):
        fourier_bridge(tr, k)
    d = fourier_bridge(tr.with_decay_rate(1.0), k).values
    np.testing.assert_allclose(d, 1 / (1 - 1j * k), atol=1e-6)
    # damping along a ray in the upper half-plane removes the need for a tail
    kc = 1j * np.array([20.0, 30.0])
    np.testing.assert_allclose(fourier_bridge(tr, kc).values, 1 / (1 - 1j * kc), rtol=1e-5)


def test_spectral_trace_validation():
    with pytest.raises(PreconditionViolated):
        SpectralTrace(np.arange(3.0), np.ones(4))
    with pytest.raises(PreconditionViolated):
        SpectralTrace(np.arange(3.0), np.ones(3)).conjugate_symmetry_error()
    with pytest.raises(PreconditionViolated):
        AsymptoticSignature(1.0, -1)
    with pytest.raises(PreconditionViolated):
        AsymptoticSignature(1.0, 1, -0.5)


# ------------------------------------------------------------ Born oracle


def test_born_agrees_with_bridge_at_low_k(scene, q_small):
    ch = in_plane_chord(scene, 0.05, 0.4, 0.12)
    tr = neumann_point_source(q_small, ch, h_t=0.002)
    k = np.linspace(0.5, 4.0, 8)
    time_route = fourier_bridge(tr, k, total=False).values
    freq_route = born_series_freq(q_small, ch, k, scattered=True)
    assert np.abs(time_route - freq_route).max() <= 2e-2 * np.abs(freq_route).max()
    total = fourier_bridge(tr, k).values
    np.testing.assert_allclose(total - time_route, incident_field(ch, k), atol=1e-15)


def test_born_zero_potential(scene):
    from phaseless.geometry import PotentialGrid

    ch = in_plane_chord(scene, 0.0, 0.0, 0.0)
    q0 = PotentialGrid.zeros(scene, 12)
    assert born_series_freq(q0, ch, 2.0, scattered=True) == 0
    assert born_series_freq(q0, ch, 2.0) == incident_field(ch, 2.0)


# ------------------------------------------------------------- extraction


def _synthetic_total(chord, k, c0, c1):
    u0 = incident_field(chord, k)
    return SpectralTrace(k, u0 * (1 + (c0 + c1 / k) / (2j * k)))


@given(st.floats(-1.0, 1.0), st.complex_numbers(max_magnitude=5.0))
def test_fit_recovers_line_integral(c0, c1):
    ch = Chord((1.5, 0.0, 0.0), (-1.5, 0.0, 0.0))
    k = np.linspace(1.0, 600.0, 1500)
    fit = fit_line_integral(_synthetic_total(ch, k, c0, c1), ch, reference=1.0)
    assert fit.value == pytest.approx(c0, abs=1e-9)
    assert fit.c1 == pytest.approx(c1, abs=1e-6)
    assert fit.window == default_fit_window(k)


def test_fit_unstable_on_noise():
    ch = Chord((1.5, 0.0, 0.0), (-1.5, 0.0, 0.0))
    k = np.linspace(1.0, 600.0, 1500)
    rng = np.random.default_rng(0)
    tr = _synthetic_total(ch, k, 0.1, 0.0)
    noisy = SpectralTrace(k, tr.values * (1 + 0.05 * rng.normal(size=k.size)))
    with pytest.raises(FitUnstable):
        fit_line_integral(noisy, ch)


def test_fit_degenerate_window():
    ch = Chord((1.5, 0.0, 0.0), (-1.5, 0.0, 0.0))
    k = np.linspace(1.0, 100.0, 100)
    with pytest.raises(DegenerateWindow):
        fit_line_integral(_synthetic_total(ch, k, 0.1, 0.0), ch, (200.0, 300.0))


# ------------------------------------------------------------- asymptotes


def test_expected_signatures():
    ch = Chord((1.5, 0.0, 0.0), (-1.5, 0.0, 0.0))
    assert expected_signature("total", ch) == AsymptoticSignature(1 / (12 * np.pi), 0, 3.0)
    s = expected_signature("scattered", ch, line_integral=0.3)
    assert s.C == pytest.approx(-0.3j / (24 * np.pi)) and s.n == 1
    assert expected_signature("v", g_value=2.0) == AsymptoticSignature(-2.0, 2)
    assert expected_signature("v_s", qg_value=0.5) == AsymptoticSignature(-0.5, 4)
    for kind, kw in (("scattered", {"chord": ch}), ("v", {}), ("v_s", {}), ("total", {}), ("other", {"chord": ch})):
        with pytest.raises(PreconditionViolated):
            expected_signature(kind, **kw)


@pytest.mark.parametrize("n", [0, 1, 2, 4])
def test_check_asymptote_on_model(n):
    sig = AsymptoticSignature(0.3 - 0.2j, n, 1.7)
    k = np.linspace(1, 600, 2000)
    d = sig.model(k) * (1 + 1 / (k + 1j))
    res = check_asymptote(SpectralTrace(k, d, sig), "model")
    assert res["ok"] and res["n_consistent"]
    assert res["rel_error"] == pytest.approx(1 / 600, rel=0.01)
    assert res["measured_n"] == pytest.approx(n, abs=0.01)


def test_check_asymptote_on_imaginary_ray():
    sig = AsymptoticSignature(-2.0, 2)
    k = 1j * np.linspace(10, 100, 10)
    res = check_asymptote(SpectralTrace(k, sig.model(k) * (1 + 1 / k)), "v", sig)
    assert res["rel_error"] == pytest.approx(0.01, rel=1e-6)
    with pytest.raises(PreconditionViolated):
        check_asymptote(SpectralTrace(k, sig.model(k)), "v")
