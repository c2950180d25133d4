"""Modulus-only phase retrieval and zero bookkeeping in the upper half-plane.

A function ``d`` analytic and zero-free in ``Im k > 0`` with
``d(k) ≈ C e^{ikL} / k^n`` at infinity is determined by ``|d|`` on the real
line::

    arg d(k) = H[ln|d|](k) + L k + arg C - n π/2,
    H f(k) = (1/π) PV ∫ f(ξ) / (k - ξ) dξ.

Zeros in the upper half-plane are moved across the axis by Blaschke factors,
which leave the modulus on the real line unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import (
    ContinuationUnreliable,
    ContourThroughZero,
    PreconditionViolated,
    ResidueDegenerate,
    TailMismatch,
    ZeroMismatch,
    ZeroOnGrid,
)
from .forward_freq import AsymptoticSignature, SpectralTrace
from .forward_time import TimeTrace
from .quadrature import gauss_legendre


@dataclass(frozen=True, eq=False)
class ModulusTrace:
    """Nonnegative samples ``|d(k)|`` and the band they were measured on."""

    k_grid: np.ndarray
    values: np.ndarray
    band: tuple[float, float] | None = None
    receiver: tuple[float, float, float] | None = None
    source: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        k = np.array(self.k_grid, dtype=float)
        v = np.array(self.values, dtype=float)
        for a in (k, v):
            a.flags.writeable = False
        object.__setattr__(self, "k_grid", k)
        object.__setattr__(self, "values", v)
        if k.shape != v.shape or k.ndim != 1:
            raise PreconditionViolated("k_grid and values must be matching 1-d arrays")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise PreconditionViolated("modulus must be finite and nonnegative")

    @classmethod
    def from_spectral(cls, trace: SpectralTrace, band: tuple[float, float] | None = None) -> "ModulusTrace":
        k = np.real(trace.k_grid)
        v = np.abs(trace.values)
        if band is not None:
            m = (k >= band[0]) & (k <= band[1])
            k, v = k[m], v[m]
        return cls(k, v, band, trace.receiver, trace.source)

    def even_extension(self) -> "ModulusTrace":
        """Mirror samples on ``k >= 0`` to ``k < 0`` using ``|d(-k)| = |d(k)|``."""
        k, v = self.k_grid, self.values
        if np.any(k < 0):
            return self
        if k[0] == 0:
            kk = np.concatenate([-k[:0:-1], k])
            vv = np.concatenate([v[:0:-1], v])
        else:
            kk = np.concatenate([-k[::-1], k])
            vv = np.concatenate([v[::-1], v])
        return ModulusTrace(kk, vv, self.band, self.receiver, self.source)

    def evenness_error(self) -> float:
        k, v = self.k_grid, self.values
        mirrored = np.interp(-k, k, v, left=np.nan, right=np.nan)
        ok = np.isfinite(mirrored)
        scale = max(v.max(initial=0.0), 1e-300)
        return float(np.abs(mirrored[ok] - v[ok]).max(initial=0.0) / scale)


@dataclass(frozen=True)
class ZeroSet:
    """Zeros with multiplicities, split into upper half-plane and real ones."""

    upper: tuple[tuple[complex, int], ...] = ()
    real: tuple[tuple[float, int], ...] = ()

    def __post_init__(self) -> None:
        up = tuple((complex(a), int(m)) for a, m in self.upper)
        re = tuple((float(c), int(m)) for c, m in self.real)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "real", re)
        for a, m in up:
            if not a.imag > 0:
                raise PreconditionViolated(f"upper zero {a} must have positive imaginary part")
            if m < 1:
                raise PreconditionViolated("multiplicities must be at least 1")
        for _, m in re:
            if m < 1:
                raise PreconditionViolated("multiplicities must be at least 1")

    @classmethod
    def from_upper(cls, zeros: Sequence[complex] | Sequence[tuple[complex, int]]) -> "ZeroSet":
        items = [(z, 1) if np.isscalar(z) else tuple(z) for z in zeros]
        return cls(upper=tuple(items))

    def count_upper(self) -> int:
        return sum(m for _, m in self.upper)

    def to_json(self) -> dict[str, Any]:
        return {
            "upper": [{"re": a.real, "im": a.imag, "multiplicity": m} for a, m in self.upper],
            "real": [{"location": c, "multiplicity": m} for c, m in self.real],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ZeroSet":
        up = tuple((complex(z["re"], z["im"]), int(z["multiplicity"])) for z in obj.get("upper", []))
        re = tuple((float(z["location"]), int(z["multiplicity"])) for z in obj.get("real", []))
        return cls(up, re)


# ------------------------------------------------------------ continuation


def _even_rational_fit(s: np.ndarray, y: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Linearised least squares for ``y ≈ P(s)/Q(s)`` with ``Q(0) = 1``."""
    A = np.column_stack([s**j for j in range(order + 1)] + [-(y * s**j) for j in range(1, order + 1)])
    scale = np.abs(A).max(axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(A / scale, y, rcond=1e-14)
    coef = coef / scale
    p = coef[: order + 1]
    q = np.concatenate([[1.0], coef[order + 1 :]])
    return p, q


def _eval_rational(p: np.ndarray, q: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(s, p) / np.polynomial.polynomial.polyval(s, q)


def extend_modulus(
    modulus_on_band: ModulusTrace,
    model_order: int,
    k_grid: np.ndarray | None = None,
    tol: float = 1e-6,
) -> ModulusTrace:
    """Continue ``|d|²`` from its band to ``k_grid`` with an even rational model.

    The model is ``P(k²)/Q(k²)`` with ``deg P, deg Q <= model_order``. Odd
    samples are held out and predicted from a fit to the even ones; the fit
    is rejected if the held-out relative residual exceeds ``tol``. When the
    band already covers ``k_grid`` the samples are returned unchanged.
    Demonstration-grade: exact data only.

    Raises
    ------
    ContinuationUnreliable
        If the held-out residual exceeds ``tol`` or the model has a real pole.
    """
    kb, vb = modulus_on_band.k_grid, modulus_on_band.values
    if k_grid is None:
        return modulus_on_band
    k_grid = np.asarray(k_grid, dtype=float)
    if kb.min() <= k_grid.min() and kb.max() >= k_grid.max() and len(kb) >= len(k_grid):
        return ModulusTrace(k_grid, np.interp(k_grid, kb, vb), modulus_on_band.band, modulus_on_band.receiver, modulus_on_band.source)
    if model_order < 0 or len(kb) < 4 * max(model_order, 1):
        raise PreconditionViolated("band needs at least 4*model_order samples")
    s = kb**2
    sref = max(s.max(), 1e-300)
    y = vb**2
    yref = max(y.max(), 1e-300)
    p, q = _even_rational_fit(s[::2] / sref, y[::2] / yref, model_order)
    pred = _eval_rational(p, q, s[1::2] / sref) * yref
    resid = float(np.abs(pred - y[1::2]).max() / yref) if len(pred) else 0.0
    if resid > tol:
        raise ContinuationUnreliable(f"held-out relative residual {resid:.3e} exceeds {tol:.1e}")
    p, q = _even_rational_fit(s / sref, y / yref, model_order)
    full = _eval_rational(p, q, k_grid**2 / sref) * yref
    if np.any(~np.isfinite(full)) or np.any(full < -tol * yref):
        raise ContinuationUnreliable("continued |d|² is negative or singular on the grid")
    return ModulusTrace(
        k_grid, np.sqrt(np.maximum(full, 0.0)), modulus_on_band.band, modulus_on_band.receiver, modulus_on_band.source
    )


# --------------------------------------------------------------- retrieval


def hilbert_on_grid(f: np.ndarray) -> np.ndarray:
    """``(1/π) PV ∫ f(ξ)/(k - ξ) dξ`` restricted to the grid span.

    Odd-offset (Maclaurin) rule on a uniform grid: the singular point is
    never sampled and each pair ``k ± j h`` enters symmetrically, so the
    principal value is taken exactly at the discrete level.
    """
    f = np.asarray(f, dtype=float)
    N = len(f)
    j = np.arange(-(N - 1), N)
    c = np.zeros(len(j))
    odd = j % 2 != 0
    c[odd] = 2.0 / (np.pi * j[odd])
    return fftconvolve(f, c)[N - 1 : 2 * N - 1]


def retrieve_phase(
    modulus_full_line: ModulusTrace,
    signature: AsymptoticSignature,
    tail_order: int = 4,
    tail_fraction: float = 0.5,
    floor: float = 1e-12,
    power_tol: float = 0.5,
    diagnostics: dict[str, Any] | None = None,
) -> SpectralTrace:
    """Rebuild ``d`` on a symmetric uniform grid from ``|d|`` and its signature.

    The log-modulus is split into the signature model
    ``m(k) = ln|C| - (n/2) ln(1 + k²)``, whose transform is ``n arctan k``,
    and a residual. The residual is transformed on the grid; beyond ``K`` it
    is represented by the signature remainder plus a power series in ``1/k``
    fitted on ``|k| >= tail_fraction K`` and integrated with Gauss-Legendre
    after ``ξ = K/u``.

    Raises
    ------
    ZeroOnGrid
        If ``|d| < floor * max|d|`` somewhere.
    TailMismatch
        If the measured high-k power differs from ``n`` by more than ``power_tol``.
    """
    mt = modulus_full_line if np.any(modulus_full_line.k_grid < 0) else modulus_full_line.even_extension()
    k, mod = mt.k_grid, mt.values
    h = k[1] - k[0]
    if not np.allclose(np.diff(k), h, rtol=1e-8) or not np.isclose(k[0], -k[-1], rtol=1e-9, atol=1e-9 * h):
        raise PreconditionViolated("retrieval needs a uniform grid symmetric about 0")
    if mod.min() < floor * mod.max() or mod.max() == 0:
        raise ZeroOnGrid(f"modulus drops to {mod.min():.3e} (max {mod.max():.3e})")
    K = k[-1]
    n = signature.n
    logC = np.log(abs(signature.C)) if signature.C != 0 else 0.0
    model = logC - 0.5 * n * np.log1p(k**2)
    resid = np.log(mod) - model
    sel = np.abs(k) >= tail_fraction * K
    ks = k[sel]
    big = np.abs(ks) >= 0.5 * (1 + tail_fraction) * K
    slope = np.polyfit(np.log(np.abs(ks[big])), np.log(mod[sel][big]), 1)[0] if big.sum() >= 2 else -n
    if abs(-slope - n) > power_tol:
        raise TailMismatch(f"measured high-k power {-slope:.3f} vs signature n = {n}")

    def sig_remainder(x: np.ndarray) -> np.ndarray:
        return -0.5 * n * np.log1p(1.0 / x**2)

    powers = np.arange(1, tail_order + 1)
    A = (1.0 / ks[:, None]) ** powers[None, :]
    coef, *_ = np.linalg.lstsq(A, resid[sel] - sig_remainder(ks), rcond=None)

    def tail(x: np.ndarray) -> np.ndarray:
        return sig_remainder(x) + ((1.0 / x[..., None]) ** powers) @ coef

    u, wu = gauss_legendre(64, 0.0, 1.0)
    xi = K / u
    jac = K / u**2
    tp, tm = tail(xi) * jac, tail(-xi) * jac
    T = np.empty_like(k)
    chunk = 4096
    for s in range(0, len(k), chunk):
        kk = k[s : s + chunk, None]
        T[s : s + chunk] = (tp / (kk - xi) + tm / (kk + xi)) @ wu
    phase = hilbert_on_grid(resid) + n * np.arctan(k) + T / np.pi + signature.L * k
    const = np.angle(signature.C) - n * np.pi / 2
    # residual against the large-k anchor arg d(K) = K L + arg C, for the report
    anchor = np.angle(np.exp(1j * (phase[-1] + const - (K * signature.L + np.angle(signature.C)))))
    if diagnostics is not None:
        diagnostics.update(
            {"tail_coefficients": tuple(coef.tolist()), "measured_power": float(-slope), "anchor_residual": float(anchor)}
        )
    return SpectralTrace(k, mod * np.exp(1j * (phase + const)), signature, mt.receiver, mt.source)


# ------------------------------------------------------------------ zeros


def _merge_check(zeros: Sequence[tuple[complex, int]], tol: float = 1e-10) -> None:
    for i in range(len(zeros)):
        for j in range(i + 1, len(zeros)):
            if abs(zeros[i][0] - zeros[j][0]) <= tol * max(1.0, abs(zeros[i][0])):
                raise ResidueDegenerate(f"zeros {zeros[i][0]} and {zeros[j][0]} coincide; merge them into one multiplicity")


def _as_upper(zero_set_upper: ZeroSet | Sequence[complex] | Sequence[tuple[complex, int]]) -> tuple[tuple[complex, int], ...]:
    if isinstance(zero_set_upper, ZeroSet):
        return zero_set_upper.upper
    return ZeroSet.from_upper(list(zero_set_upper)).upper


def blaschke_factor(k: np.ndarray | complex, zero_set_upper: ZeroSet | Sequence[complex]) -> np.ndarray:
    """``B(k) = Π_j ((k - conj a_j)/(k - a_j))^{m_j}``, unimodular on the real line."""
    k = np.asarray(k, dtype=complex)
    out = np.ones(k.shape, dtype=complex)
    for a, m in _as_upper(zero_set_upper):
        out *= ((k - np.conj(a)) / (k - a)) ** m
    return out


def w_function(k: np.ndarray, zero_set_upper: ZeroSet | Sequence[complex]) -> np.ndarray:
    """``w(k) = Π_j ((k - a_j)/(k - conj a_j))^{m_j} - 1 = 1/B(k) - 1``."""
    return 1.0 / blaschke_factor(k, zero_set_upper) - 1.0


def w_partial_fractions(zero_set_upper: ZeroSet | Sequence[complex], n_circle: int = 128) -> list[tuple[complex, int, complex]]:
    """Coefficients ``R`` of ``w(k) = Σ R / (k - b)^p`` with ``b = conj a``.

    Each coefficient is a contour integral on a small circle around its pole
    (trapezoid rule, exponentially accurate for analytic integrands).
    """
    zeros = _as_upper(zero_set_upper)
    _merge_check(zeros)
    poles = [np.conj(a) for a, _ in zeros]
    terms = []
    for i, (a, m) in enumerate(zeros):
        b = poles[i]
        others = [abs(b - p) for j, p in enumerate(poles) if j != i] + [abs(b - a) for a, _ in zeros]
        rho = 0.4 * min(others) if others else 0.5
        th = 2 * np.pi * np.arange(n_circle) / n_circle
        z = b + rho * np.exp(1j * th)
        wz = w_function(z, zeros)
        for p in range(1, m + 1):
            # R_p = (1/2πi) ∮ w (k - b)^{p-1} dk
            R = np.mean(wz * (rho * np.exp(1j * th)) ** p)
            terms.append((complex(b), p, complex(R)))
    return terms


def w_function_inverse_ft(zero_set_upper: ZeroSet | Sequence[complex], t_grid: np.ndarray) -> TimeTrace:
    """``λ(t)`` with ``∫_0^∞ λ(t) e^{ikt} dt = w(k)``.

    A term ``R/(k - b)^p`` maps to ``R (-i)^p t^{p-1}/(p-1)! e^{-ibt}`` for
    ``t > 0``; ``Im b < 0`` makes every term decay.
    """
    t = np.asarray(t_grid, dtype=float)
    lam = np.zeros(t.shape, dtype=complex)
    for b, p, R in w_partial_fractions(zero_set_upper):
        fact = float(np.prod(np.arange(1, p)))
        lam += R * (-1j) ** p * t ** (p - 1) / fact * np.exp(-1j * b * t)
    lam = np.where(t >= 0, lam, 0.0)
    return TimeTrace(t, lam, 0.0, kind="generic")


def match_real_zeros(
    modulus_pair: tuple[ModulusTrace, ModulusTrace],
    zero_tol: float = 1e-6,
    floor: float = 1e-12,
    n_side: int = 5,
    loc_tol: float | None = None,
) -> ZeroSet:
    """Locate real zeros shared by two moduli.

    A zero is a local minimum below ``zero_tol`` times the sup norm. Its
    multiplicity is the rounded log-log slope of ``|d|`` against
    ``|k - c|`` over ``n_side`` samples on each side, with the modulus
    floored at ``floor`` relative.

    Raises
    ------
    ZeroMismatch
        If the two estimated zero sets differ.
    """
    sets = [_real_zeros(m, zero_tol, floor, n_side) for m in modulus_pair]
    a, b = sets
    h = float(np.min(np.diff(modulus_pair[0].k_grid)))
    tol = 1.5 * h if loc_tol is None else loc_tol
    if len(a) != len(b) or any(abs(x[0] - y[0]) > tol or x[1] != y[1] for x, y in zip(a, b)):
        raise ZeroMismatch(f"real zero sets differ: {a} vs {b}")
    return ZeroSet(real=tuple(a))


def _real_zeros(m: ModulusTrace, zero_tol: float, floor: float, n_side: int) -> list[tuple[float, int]]:
    k, v = m.k_grid, m.values
    vmax = v.max(initial=0.0)
    if vmax == 0:
        raise ZeroMismatch("modulus vanishes identically")
    vf = np.maximum(v, floor * vmax)
    out = []
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else np.inf
        right = v[i + 1] if i + 1 < len(v) else np.inf
        if v[i] <= left and v[i] <= right and v[i] < zero_tol * vmax:
            if out and abs(out[-1][2] - i) <= 1:
                continue
            j = np.arange(1, n_side + 1)
            idx = np.concatenate([i - j, i + j])
            idx = idx[(idx >= 0) & (idx < len(v))]
            c = float(k[i])
            x = np.log(np.abs(k[idx] - c))
            y = np.log(vf[idx])
            slope = np.polyfit(x, y, 1)[0]
            out.append((float(c), max(1, int(round(slope))), i))
    return [(c, mult) for c, mult, _ in out]


def rectangle_contour(x0: float, x1: float, y0: float, y1: float, n_per_side: int = 400) -> np.ndarray:
    """Counter-clockwise closed rectangle ``[x0, x1] × [y0, y1]`` (last point omitted)."""
    s = np.linspace(0.0, 1.0, n_per_side, endpoint=False)
    bottom = x0 + (x1 - x0) * s + 1j * y0
    right = x1 + 1j * (y0 + (y1 - y0) * s)
    top = x1 - (x1 - x0) * s + 1j * y1
    left = x0 + 1j * (y1 - (y1 - y0) * s)
    return np.concatenate([bottom, right, top, left])


def count_zeros_upper(analytic_samples_on_contour: np.ndarray, floor: float = 1e-10) -> int:
    """Winding number of closed-contour samples around 0 (argument principle).

    Raises
    ------
    ContourThroughZero
        If ``|d|`` on the contour falls below ``floor`` times its maximum.
    PreconditionViolated
        If consecutive samples turn by more than ``π/2`` (contour under-sampled).
    """
    d = np.asarray(analytic_samples_on_contour, dtype=complex)
    a = np.abs(d)
    if a.min() <= floor * a.max():
        raise ContourThroughZero(f"|d| on contour drops to {a.min():.3e}")
    steps = np.angle(np.roll(d, -1) / d)
    if np.abs(steps).max() > np.pi / 2:
        raise PreconditionViolated("contour sampling too coarse for a reliable winding number")
    return int(round(steps.sum() / (2 * np.pi)))


def count_zeros_in_rectangle(
    f: Callable[[np.ndarray], np.ndarray],
    rect: tuple[float, float, float, float],
    n_per_side: int = 200,
    max_refine: int = 8,
) -> int:
    """Sample ``f`` on a rectangle, refining until the winding number is reliable."""
    n = n_per_side
    for _ in range(max_refine):
        z = rectangle_contour(*rect, n_per_side=n)
        d = f(z)
        steps = np.angle(np.roll(d, -1) / d)
        if np.abs(steps).max() <= np.pi / 4:
            return count_zeros_upper(d)
        n *= 2
    return count_zeros_upper(f(rectangle_contour(*rect, n_per_side=n)))
