from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseless.errors import (
    ContinuationUnreliable,
    ContourThroughZero,
    PreconditionViolated,
    ResidueDegenerate,
    TailMismatch,
    ZeroMismatch,
    ZeroOnGrid,
)
from phaseless.forward_freq import AsymptoticSignature, fourier_bridge
from phaseless.phase import (
    ModulusTrace,
    ZeroSet,
    blaschke_factor,
    count_zeros_in_rectangle,
    count_zeros_upper,
    extend_modulus,
    hilbert_on_grid,
    match_real_zeros,
    rectangle_contour,
    retrieve_phase,
    w_function,
    w_function_inverse_ft,
    w_partial_fractions,
)

upper_zero = st.complex_numbers(max_magnitude=5.0).filter(lambda z: 0.1 < z.imag < 5.0)


# ------------------------------------------------------------- containers


def test_modulus_validation():
    with pytest.raises(PreconditionViolated):
        ModulusTrace([0.0, 1.0], [1.0, -0.1])
    with pytest.raises(PreconditionViolated):
        ModulusTrace([0.0, 1.0], [1.0])


def test_even_extension_and_evenness():
    k = np.linspace(0, 2, 5)
    m = ModulusTrace(k, 1 + k**2).even_extension()
    np.testing.assert_allclose(m.k_grid, np.linspace(-2, 2, 9))
    assert m.evenness_error() == 0.0
    assert m.even_extension() is m


def test_zero_set_json_round_trip():
    zs = ZeroSet(upper=((1 + 2j, 2), (-0.5 + 0.1j, 1)), real=((0.3, 1),))
    back = ZeroSet.from_json(zs.to_json())
    assert back == zs
    assert back.count_upper() == 3


def test_zero_set_rejects_lower_half_plane():
    with pytest.raises(PreconditionViolated):
        ZeroSet.from_upper([1 - 1j])
    with pytest.raises(PreconditionViolated):
        ZeroSet(upper=((1j, 0),))


# --------------------------------------------------------------- Blaschke


@given(st.lists(upper_zero, min_size=1, max_size=4), st.floats(-50, 50))
def test_blaschke_unimodular_on_real_line(zeros, k):
    assert abs(blaschke_factor(k, zeros)) == pytest.approx(1.0, abs=1e-12)


@given(upper_zero)
def test_blaschke_moves_zero_across_axis(a):
    # d(k) = (k - a)/(k + i): multiplying by B keeps |d| on R and reflects the zero
    k = np.linspace(-10, 10, 41)
    d = (k - a) / (k + 1j)
    db = d * blaschke_factor(k, [a])
    np.testing.assert_allclose(np.abs(db), np.abs(d), rtol=1e-12)
    np.testing.assert_allclose(db, (k - np.conj(a)) / (k + 1j), rtol=1e-10, atol=1e-12)


def test_w_partial_fractions_reproduce_w():
    zeros = ZeroSet(upper=((1 + 1j, 1), (-2 + 0.5j, 2)))
    terms = w_partial_fractions(zeros)
    assert len(terms) == 3
    k = np.linspace(-7, 7, 29) + 0.3j
    recon = sum(R / (k - b) ** p for b, p, R in terms)
    np.testing.assert_allclose(recon, w_function(k, zeros), rtol=1e-10, atol=1e-12)


def test_w_partial_fractions_single_zero_closed_form():
    a = 0.7 + 1.3j
    (b, p, R), = w_partial_fractions([a])
    assert p == 1 and b == pytest.approx(np.conj(a))
    assert R == pytest.approx(np.conj(a) - a)  # (k-a)/(k-b) - 1 = (b-a)/(k-b)


def test_coincident_zeros_rejected():
    with pytest.raises(ResidueDegenerate):
        w_partial_fractions([1 + 1j, 1 + 1j])


def test_w_inverse_ft_matches_bridge():
    # piecewise-linear transform of λ converges to w at second order in h
    zeros = ZeroSet(upper=((0.5 + 1j, 1), (-1 + 0.8j, 2)))
    k = np.linspace(-6, 6, 25)
    errs = []
    for h in (0.01, 0.005):
        lam = w_function_inverse_ft(zeros, np.arange(0, 60, h))
        errs.append(np.abs(fourier_bridge(lam, k, total=False).values - w_function(k, zeros)).max())
    assert errs[1] < 5e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


# ---------------------------------------------------------- zero counting


def _rational(zeros, poles):
    def f(z):
        out = np.ones_like(z, dtype=complex)
        for a in zeros:
            out = out * (z - a)
        for p in poles:
            out = out / (z - p)
        return out

    return f


@given(st.lists(upper_zero, max_size=4), st.lists(upper_zero.map(np.conj), max_size=3))
def test_counting_rational_functions(zu, zl):
    f = _rational(list(zu) + list(zl), [-1j] * (len(zu) + len(zl)))
    assert count_zeros_in_rectangle(f, (-20, 20, 0, 20)) == len(zu)


def test_contour_through_zero():
    z = rectangle_contour(-2, 2, 0, 2)
    with pytest.raises(ContourThroughZero):
        count_zeros_upper(z - 1j * 2)  # zero on the top side


def test_coarse_contour_rejected():
    z = rectangle_contour(-2, 2, 0, 2, n_per_side=2)
    with pytest.raises(PreconditionViolated):
        count_zeros_upper(z**9 - 0.5j)


# --------------------------------------------------------------- Hilbert


def test_hilbert_of_lorentzian():
    h = 0.01
    x = np.arange(-2000, 2000 + h / 2, h)
    Hf = hilbert_on_grid(1 / (1 + x**2))
    inner = np.abs(x) <= 20
    np.testing.assert_allclose(Hf[inner], (x / (1 + x**2))[inner], atol=5e-4)


@given(st.integers(0, 10_000))
def test_hilbert_is_linear_and_odd_symmetric(seed):
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, 65))
    np.testing.assert_allclose(hilbert_on_grid(2 * f - g), 2 * hilbert_on_grid(f) - hilbert_on_grid(g), atol=1e-12)
    # even input gives odd output about the centre
    e = f + f[::-1]
    He = hilbert_on_grid(e)
    np.testing.assert_allclose(He, -He[::-1], atol=1e-12)


# ------------------------------------------------------------ retrieval


def _rational_trace(L=1.5, K=200.0, dk=0.05):
    k = np.arange(-round(K / dk), round(K / dk) + 1) * dk
    d = np.exp(1j * k * L) / (k + 1j)
    return k, d


def test_retrieve_phase_zero_free_rational():
    L = 1.5
    k, d = _rational_trace(L)
    diag: dict = {}
    rec = retrieve_phase(ModulusTrace(k, np.abs(d)), AsymptoticSignature(1.0, 1, L), diagnostics=diag)
    inner = np.abs(k) <= 50
    assert np.abs(rec.values - d)[inner].max() / np.abs(d).max() <= 1e-3
    assert diag["measured_power"] == pytest.approx(1.0, abs=0.05)


def test_retrieve_phase_from_half_line():
    L = 0.8
    k, d = _rational_trace(L)
    pos = k >= 0
    rec = retrieve_phase(ModulusTrace(k[pos], np.abs(d[pos])), AsymptoticSignature(1.0, 1, L))
    inner = np.abs(rec.k_grid) <= 50
    assert np.abs(rec.values - d)[inner].max() <= 1e-3


def test_retrieve_phase_tail_mismatch():
    k, d = _rational_trace()
    with pytest.raises(TailMismatch):
        retrieve_phase(ModulusTrace(k, np.abs(d)), AsymptoticSignature(1.0, 3, 1.5))


def test_retrieve_phase_zero_on_grid():
    k = np.linspace(-10, 10, 201)
    with pytest.raises(ZeroOnGrid):
        retrieve_phase(ModulusTrace(k, np.abs(k - 1) / (1 + k**2)), AsymptoticSignature(1.0, 1, 0.0))


def test_retrieve_phase_needs_symmetric_grid():
    k = np.linspace(-10, 12, 221)
    with pytest.raises(PreconditionViolated):
        retrieve_phase(ModulusTrace(k, 1 / np.sqrt(1 + k**2)), AsymptoticSignature(1.0, 1, 0.0))


# ---------------------------------------------------------- continuation


def test_extend_modulus_exact_rational():
    kb = np.linspace(0, 20, 201)
    mod2 = lambda k: (1 + 0.3 * k**2) / (4 + k**2) ** 2  # noqa: E731
    band = ModulusTrace(kb, np.sqrt(mod2(kb)), (0.0, 20.0))
    kg = np.linspace(0, 100, 501)
    ext = extend_modulus(band, 2, kg)
    np.testing.assert_allclose(ext.values, np.sqrt(mod2(kg)), rtol=1e-6)


def test_extend_modulus_passthrough():
    kb = np.linspace(0, 20, 201)
    band = ModulusTrace(kb, np.exp(-kb))
    assert extend_modulus(band, 2) is band
    sub = extend_modulus(band, 2, kb[:50])
    np.testing.assert_array_equal(sub.values, band.values[:50])


def test_extend_modulus_rejects_non_rational():
    kb = np.linspace(0, 20, 201)
    band = ModulusTrace(kb, np.abs(np.sin(3 * kb)) + 0.1)
    with pytest.raises(ContinuationUnreliable):
        extend_modulus(band, 2, np.linspace(0, 100, 501))


# ------------------------------------------------------------ real zeros


def test_match_real_zeros_shared():
    k = np.linspace(-5, 5, 1001)
    m1 = ModulusTrace(k, np.abs((k - 1) * (k + 2) ** 2) / (1 + k**4))
    m2 = ModulusTrace(k, np.abs((k - 1) * (k + 2) ** 2) * 3 / (2 + k**6))
    zs = match_real_zeros((m1, m2))
    assert [(round(c, 6), m) for c, m in zs.real] == [(-2.0, 2), (1.0, 1)]


def test_match_real_zeros_mismatch():
    k = np.linspace(-5, 5, 1001)
    m1 = ModulusTrace(k, np.abs(k - 1) / (1 + k**2))
    m2 = ModulusTrace(k, np.abs(k + 1) / (1 + k**2))
    with pytest.raises(ZeroMismatch):
        match_real_zeros((m1, m2))
    with pytest.raises(ZeroMismatch):
        match_real_zeros((m1, ModulusTrace(k, np.zeros_like(k))))
