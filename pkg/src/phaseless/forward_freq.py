"""Frequency-domain fields.

Conventions: ``d(k) = ∫_0^∞ f(t) e^{ikt} dt`` with the outgoing kernel
``G_k(r) = e^{ikr} / (4π r)``. With this convention a real time trace gives
``d(-k) = conj d(k)`` on the real axis and the transform extends
analytically to ``Im k > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateWindow, FitUnstable, IterationDiverged, PreconditionViolated, TailNotResolved
from .forward_time import TimeTrace, equal_volume_radius, smoothed_inverse_distance
from .geometry import Chord, PotentialGrid


@dataclass(frozen=True)
class AsymptoticSignature:
    """Leading behaviour ``d(k) ≈ C e^{ikL} / k^n`` for large ``|k|`` in ``Im k >= 0``."""

    C: complex
    n: int
    L: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "C", complex(self.C))
        if int(self.n) != self.n or self.n < 0:
            raise PreconditionViolated("n must be a nonnegative integer")
        object.__setattr__(self, "n", int(self.n))
        if self.L < 0:
            raise PreconditionViolated("L must be nonnegative")

    def envelope(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k)
        return np.abs(self.C) / np.abs(k) ** self.n

    def model(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=complex)
        return self.C * np.exp(1j * k * self.L) / k**self.n


@dataclass(frozen=True, eq=False)
class SpectralTrace:
    """Complex samples ``d(k)`` on a k-grid with their asymptotic signature."""

    k_grid: np.ndarray
    values: np.ndarray
    signature: AsymptoticSignature | None = None
    receiver: tuple[float, float, float] | None = None
    source: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        k = np.array(self.k_grid)
        if np.all(np.imag(k) == 0):
            k = np.real(k).astype(float)
        v = np.array(self.values, dtype=complex)
        for a in (k, v):
            a.flags.writeable = False
        object.__setattr__(self, "k_grid", k)
        object.__setattr__(self, "values", v)
        if k.shape != v.shape:
            raise PreconditionViolated("k_grid and values must have the same shape")

    @property
    def chord(self) -> Chord | None:
        if self.source is None or self.receiver is None:
            return None
        return Chord(self.source, self.receiver)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def conjugate_symmetry_error(self) -> float:
        """``max |d(-k) - conj d(k)|`` over mirrored real samples, relative to ``max|d|``."""
        k = self.k_grid
        if np.iscomplexobj(k):
            raise PreconditionViolated("symmetry is defined on a real grid")
        order = np.argsort(k)
        ks, vs = k[order], self.values[order]
        if not np.allclose(ks, -ks[::-1], atol=1e-9 * max(1.0, np.abs(ks).max())):
            raise PreconditionViolated("grid is not symmetric about 0")
        scale = max(np.abs(vs).max(), 1e-300)
        return float(np.abs(vs[::-1] - np.conj(vs)).max() / scale)


def incident_field(chord: Chord, k: np.ndarray | complex) -> np.ndarray | complex:
    """``u0 = e^{ik|x - x0|} / (4π|x - x0|)``."""
    r = chord.length
    if r <= 0:
        raise PreconditionViolated("|x - x0| must be positive")
    out = np.exp(1j * np.asarray(k) * r) / (4.0 * np.pi * r)
    return complex(out) if np.ndim(out) == 0 else out


def helmholtz_kernel(k: complex, d: np.ndarray) -> np.ndarray:
    return np.exp(1j * k * d) / (4.0 * np.pi * d)


# ---------------------------------------------------------------- bridge


def filon_weights(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights of the exact transform of a piecewise-linear interpolant.

    For ``θ = k h``: interior ``2(1 - cos θ)/θ²``; first node
    ``i/θ - (e^{iθ} - 1)/θ²``; last node ``-i/θ + (1 - e^{-iθ})/θ²``.
    Series expansions are used near ``θ = 0``.
    """
    th = np.asarray(theta, dtype=complex)
    small = np.abs(th) < 1e-3
    ts = np.where(small, 1.0, th)
    w_int = np.where(small, 1 - th**2 / 12 + th**4 / 360, 2 * (1 - np.cos(ts)) / ts**2)
    w_first = np.where(small, 0.5 + 1j * th / 6 - th**2 / 24, 1j / ts - (np.exp(1j * ts) - 1) / ts**2)
    w_last = np.where(small, 0.5 - 1j * th / 6 - th**2 / 24, -1j / ts + (1 - np.exp(-1j * ts)) / ts**2)
    return w_int, w_first, w_last


def fft_k_grid(h_t: float, k_max: float, dk: float) -> tuple[np.ndarray, int]:
    """Symmetric k-grid with spacing ``2π/(N h_t)`` no larger than ``dk``.

    Returns ``(k_grid, N)``; the grid is ``m Δk`` for ``|m| <= k_max/Δk``.
    """
    n_fft = 1 << int(np.ceil(np.log2(2 * np.pi / (dk * h_t))))
    step = 2 * np.pi / (n_fft * h_t)
    m = int(np.floor(k_max / step + 1e-9))
    if 2 * m + 1 > n_fft:
        raise PreconditionViolated("k_max exceeds the Nyquist limit of the time grid")
    return step * np.arange(-m, m + 1), n_fft


def _fft_sums(t: np.ndarray, f: np.ndarray, k: np.ndarray) -> np.ndarray | None:
    """``Σ_j f_j e^{ik t_j}`` by FFT when ``k`` is a compatible uniform grid."""
    if np.iscomplexobj(k) or len(k) < 2:
        return None
    h = t[1] - t[0]
    dk = k[1] - k[0]
    if dk <= 0 or not np.allclose(np.diff(k), dk, rtol=1e-10, atol=1e-12):
        return None
    n_fft = 2 * np.pi / (dk * h)
    N = int(round(n_fft))
    if abs(n_fft - N) > 1e-6 * N or N < len(t) or N < len(k):
        return None
    m0 = k[0] / dk
    if abs(m0 - round(m0)) > 1e-6:
        return None
    m = np.round(k / dk).astype(int)
    spec = np.fft.ifft(f, N) * N  # Σ f_j e^{2πi m j / N}
    return np.exp(1j * k * t[0]) * spec[np.mod(m, N)]


def fourier_bridge(
    time_trace: TimeTrace,
    k_grid: np.ndarray,
    total: bool = True,
    floor: float = 1e-8,
) -> SpectralTrace:
    """``d(k) = ∫ trace(t) e^{ikt} dt`` of the piecewise-linear interpolant.

    For point-source traces with ``total=True`` the delta front contributes
    the incident field analytically, so the result is the total field ``u``;
    ``total=False`` returns the scattered part only. If the trace has not
    decayed at ``T`` an exponential tail with the trace's ``decay_rate`` is
    appended.

    Raises
    ------
    TailNotResolved
        If ``|trace(T)|`` exceeds ``floor`` times its sup norm, the tail is not
        damped by ``Im k``, and no decay rate is known.
    """
    tr = time_trace
    k = np.asarray(k_grid)
    t, f = tr.t_grid, np.asarray(tr.values)
    h = tr.h
    scale = np.abs(f).max(initial=0.0)
    fT = f[-1]
    damp = np.exp(-np.min(np.imag(k)) * tr.T) if np.iscomplexobj(k) else 1.0
    need_tail = scale > 0 and abs(fT) * damp > floor * scale
    if need_tail and tr.decay_rate is None:
        raise TailNotResolved(f"|trace(T)| = {abs(fT):.3e} exceeds floor and no decay rate is set")
    w_int, w_first, w_last = filon_weights(k * h)
    sums = _fft_sums(t, f, k)
    e0 = np.exp(1j * k * t[0])
    eT = np.exp(1j * k * t[-1])
    if sums is not None:
        d = h * (w_int * sums + (w_first - w_int) * f[0] * e0 + (w_last - w_int) * fT * eT)
    else:
        d = np.empty(k.shape, dtype=complex)
        kf = k.reshape(-1)
        out = d.reshape(-1)  # view into d
        chunk = max(1, 4_000_000 // len(t))
        for s in range(0, len(kf), chunk):
            kk = kf[s : s + chunk]
            E = np.exp(1j * np.outer(kk, t[1:-1]))
            out[s : s + chunk] = E @ f[1:-1]
        d = h * (w_int * d + w_first * f[0] * e0 + w_last * fT * eT)
    if need_tail:
        d = d + fT * eT / (tr.decay_rate - 1j * k)
    sig = None
    if tr.kind == "point" and total:
        chord = tr.chord
        d = d + incident_field(chord, k)
        sig = AsymptoticSignature(1.0 / (4 * np.pi * chord.length), 0, chord.length)
    return SpectralTrace(k, d, sig, tr.receiver, tr.source)


# ----------------------------------------------------------------- oracles


def born_series_freq(
    q_grid: PotentialGrid,
    chord: Chord,
    k: float | complex | Sequence[float],
    n_terms: int = 1,
    scattered: bool = False,
) -> np.ndarray | complex:
    """Total field after ``n_terms`` Lippmann-Schwinger iterations.

    ``u <- u0 - ∫ G_k(x - ξ) q(ξ) u(ξ) dξ`` with midpoint quadrature over the
    support cells; the self-cell kernel is replaced by its mean over the ball
    of equal volume.

    Raises
    ------
    IterationDiverged
        If successive iterates on the support cells grow.
    """
    if n_terms < 1:
        raise PreconditionViolated("n_terms must be at least 1")
    ks = np.atleast_1d(np.asarray(k))
    cells, qc = q_grid.support_cells()
    x, x0 = chord.x, chord.x0
    out = np.empty(ks.shape, dtype=complex)
    h3 = q_grid.cell_volume
    R = equal_volume_radius(q_grid.spacing[0])
    dx = np.linalg.norm(cells - x, axis=1)
    d0 = np.linalg.norm(cells - x0, axis=1)
    dij = np.linalg.norm(cells[:, None] - cells[None], axis=-1) if n_terms > 1 and len(cells) else None
    for m, km in enumerate(ks):
        u0x = incident_field(chord, km)
        if len(cells) == 0:
            out[m] = 0.0 if scattered else u0x
            continue
        u0c = np.exp(1j * km * d0) * smoothed_inverse_distance(d0, R) / (4 * np.pi)
        uc = u0c
        if dij is not None:
            M = h3 * np.exp(1j * km * dij) * smoothed_inverse_distance(dij, R) / (4 * np.pi)
            np.fill_diagonal(M, _self_cell(km, R))
            prev = None
            for _ in range(n_terms - 1):
                new = u0c - M @ (qc * uc)
                diff = np.abs(new - uc).max()
                if prev is not None and diff > prev * (1 + 1e-12) and diff > 1e-14 * np.abs(new).max():
                    raise IterationDiverged(f"successive difference grew from {prev:.3e} to {diff:.3e}")
                prev = diff
                uc = new
        kern = h3 * np.exp(1j * km * dx) * smoothed_inverse_distance(dx, R) / (4 * np.pi)
        us = -np.sum(kern * qc * uc)
        out[m] = us if scattered else u0x + us
    return complex(out[0]) if np.ndim(k) == 0 else out


def _self_cell(k: complex, R: float) -> complex:
    """``∫_{|ξ|<R} e^{ik|ξ|} / (4π|ξ|) dξ = (e^{ikR}(1 - ikR) - 1) / k²``."""
    kR = k * R
    if abs(kR) < 1e-4:
        return R**2 / 2 * (1 + 2j * kR / 3)
    return (np.exp(1j * kR) * (1 - 1j * kR) - 1) / k**2


def v0_volume_potential(source_grid: Any, x: Sequence[float], k: complex) -> complex:
    """``∫ G_k(x - ξ) g(ξ) dξ`` by midpoint quadrature on the source grid.

    Cells within the equal-volume radius of ``x`` use the ball-averaged
    kernel, which removes the ``1/r`` singularity when ``x`` is inside ``G``.
    """
    vals = np.asarray(source_grid.values)
    spacing = np.asarray(source_grid.spacing)
    origin = np.asarray(source_grid.origin)
    axes = [origin[i] + spacing[i] * np.arange(vals.shape[i]) for i in range(3)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = vals != 0
    pts, g = nodes[mask], vals[mask]
    d = np.linalg.norm(pts - np.asarray(x, dtype=float), axis=1)
    R = equal_volume_radius(spacing[0])
    h3 = float(np.prod(spacing))
    kern = np.exp(1j * k * d) * smoothed_inverse_distance(d, R) / (4 * np.pi)
    self_mask = d < 1e-12
    kern[self_mask] = _self_cell(k, R) / h3
    return complex(h3 * np.sum(kern * g))


# -------------------------------------------------------------- extraction


def default_fit_window(k_grid: np.ndarray) -> tuple[float, float]:
    """Top third of the positive part of the grid."""
    kmax = float(np.max(np.real(k_grid)))
    return 2.0 * kmax / 3.0, kmax


@dataclass(frozen=True)
class LineIntegralFit:
    value: float
    c0: complex
    c1: complex
    residual: float
    window: tuple[float, float]
    n_samples: int


def fit_line_integral(
    total_trace: SpectralTrace,
    chord: Chord,
    k_fit_window: tuple[float, float] | None = None,
    max_residual: float = 0.25,
    reference: float = 0.0,
) -> LineIntegralFit:
    """Weighted fit of ``2ik(u/u0 - 1) ≈ c0 + c1/k`` over a high-k window.

    Rows are weighted by ``k^{-1/2}`` (so squared residuals carry ``1/k``).
    ``Re c0`` estimates the line integral of ``q`` along the chord.

    Raises
    ------
    DegenerateWindow
        If fewer than three samples fall in the window.
    FitUnstable
        If the weighted rms residual exceeds ``max_residual`` times the largest
        of ``|c0|``, the rms of the fitted data and ``reference`` (a typical
        line-integral magnitude of the data set, so grazing chords with tiny
        values are judged on the set's scale).
    """
    k = np.real(np.asarray(total_trace.k_grid))
    lo, hi = default_fit_window(k) if k_fit_window is None else k_fit_window
    m = (k >= lo) & (k <= hi) & (k > 0)
    if m.sum() < 3:
        raise DegenerateWindow(f"window {(lo, hi)} holds {m.sum()} positive samples")
    km = k[m]
    y = 2j * km * (total_trace.values[m] / incident_field(chord, km) - 1.0)
    w = 1.0 / np.sqrt(km)
    A = np.column_stack([np.ones_like(km), 1.0 / km]) * w[:, None]
    coef, *_ = np.linalg.lstsq(A.astype(complex), y * w, rcond=None)
    res = y * w - A @ coef
    rms = float(np.sqrt(np.mean(np.abs(res) ** 2)) / np.sqrt(np.mean(w**2)))
    c0 = complex(coef[0])
    size = max(abs(c0), float(np.sqrt(np.mean(np.abs(y) ** 2))), reference)
    if size > 0 and rms > max_residual * size:
        raise FitUnstable(f"fit residual {rms:.3e} vs data size {size:.3e}")
    return LineIntegralFit(c0.real, c0, complex(coef[1]), rms, (float(lo), float(hi)), int(m.sum()))


def extract_line_integral(
    total_trace: SpectralTrace, chord: Chord, k_fit_window: tuple[float, float] | None = None
) -> float:
    """Estimate ``∫_L q ds`` from the high-k limit of ``2ik(u/u0 - 1)``."""
    return fit_line_integral(total_trace, chord, k_fit_window).value


# -------------------------------------------------------------- asymptotes


def expected_signature(
    kind: str,
    chord: Chord | None = None,
    line_integral: float | None = None,
    g_value: float | None = None,
    qg_value: float | None = None,
) -> AsymptoticSignature:
    """Leading constants for the four trace kinds.

    ``total``: ``C = 1/(4πr)``, ``n = 0``, ``L = r``.
    ``scattered``: ``C = -i ∫_L q ds / (8πr)``, ``n = 1``, ``L = r``.
    ``v``: ``C = -g(x)``, ``n = 2``. ``v_s``: ``C = -(qg)(x)``, ``n = 4``.
    """
    if kind in ("total", "scattered"):
        if chord is None:
            raise PreconditionViolated("point-source kinds need the chord")
        r = chord.length
        if kind == "total":
            return AsymptoticSignature(1 / (4 * np.pi * r), 0, r)
        if line_integral is None:
            raise PreconditionViolated("scattered kind needs the line integral")
        return AsymptoticSignature(-1j * line_integral / (8 * np.pi * r), 1, r)
    if kind == "v":
        if g_value is None:
            raise PreconditionViolated("v kind needs g(x)")
        return AsymptoticSignature(-g_value, 2, 0.0)
    if kind == "v_s":
        if qg_value is None:
            raise PreconditionViolated("v_s kind needs (qg)(x)")
        return AsymptoticSignature(-qg_value, 4, 0.0)
    raise PreconditionViolated(f"unknown kind {kind!r}")


def check_asymptote(
    spectral_trace: SpectralTrace,
    kind: str,
    expected: AsymptoticSignature | None = None,
    onset: float | None = None,
    tol: float = 0.05,
) -> dict[str, Any]:
    """Compare ``d(k) k^n e^{-ikL}`` at large ``|k|`` with the expected ``C``.

    The measured constant is the value at the largest ``|k|``; the power is
    measured by a log-log slope of ``|d|`` over the samples with
    ``|k| >= onset`` (default: the top third). Works on real grids and on
    complex rays in the upper half-plane.

    Returns
    -------
    dict
        ``measured_C``, ``expected_C``, ``rel_error``, ``measured_n``,
        ``n_consistent``, ``ok`` and the echo of inputs.
    """
    k = np.asarray(spectral_trace.k_grid)
    d = spectral_trace.values
    ak = np.abs(k)
    pos = (np.real(k) > 0) if not np.iscomplexobj(k) else np.ones(k.shape, bool)
    onset = (2.0 / 3.0) * ak[pos].max() if onset is None else onset
    sel = pos & (ak >= onset)
    if sel.sum() < 2:
        raise DegenerateWindow("no samples above the onset")
    if expected is None:
        expected = spectral_trace.signature
    if expected is None:
        raise PreconditionViolated("an expected signature is required")
    n, L = expected.n, expected.L
    ks = k[sel].astype(complex)
    scaled = d[sel] * ks**n * np.exp(-1j * ks * L)
    i_max = int(np.argmax(ak[sel]))
    measured_C = complex(scaled[i_max])
    nz = np.abs(d[sel]) > 0
    measured_n = float(-np.polyfit(np.log(ak[sel][nz]), np.log(np.abs(d[sel][nz])), 1)[0]) if nz.sum() >= 2 else float("nan")
    scale = abs(expected.C)
    rel = abs(measured_C - expected.C) / scale if scale > 0 else abs(measured_C)
    n_ok = bool(np.isfinite(measured_n) and abs(measured_n - n) <= 0.25)
    return {
        "kind": kind,
        "onset": float(onset),
        "k_max": float(ak[sel].max()),
        "expected_C": expected.C,
        "measured_C": measured_C,
        "rel_error": float(rel),
        "n": n,
        "measured_n": measured_n,
        "n_consistent": n_ok,
        "L": L,
        "ok": bool(rel <= tol),
    }
