"""Volterra machinery behind the uniqueness argument.

If two potentials agree near ``S`` their data agree for early times after the
front. The convolution identity between the two traces then reduces, on that
window, to a homogeneous Volterra equation of the second kind for the
difference of the inverse transforms ``λ``, whose only solution is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import LeadingValueZero, PreconditionViolated, StepTooLarge, WindowEmpty
from .geometry import Chord


@dataclass(frozen=True, eq=False)
class ConvolutionKernel:
    """Kernel ``ĥ = w δ + p`` sampled from its front (``t_grid[0] = 0``).

    Attributes
    ----------
    samples : array
        Continuous part ``p`` on ``t_grid``.
    leading_weight : float
        Weight ``w`` of the delta part, ``1/(4π r)`` for point-source traces;
        zero when the kernel has no delta part.
    deriv_order : int
        Number of differentiations that turn the first-kind equation into a
        second-kind one (0 when ``w != 0``).
    """

    t_grid: np.ndarray
    samples: np.ndarray
    leading_weight: float = 0.0
    deriv_order: int = 0

    def __post_init__(self) -> None:
        t = np.array(self.t_grid, dtype=float)
        p = np.array(self.samples)
        for a in (t, p):
            a.flags.writeable = False
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "samples", p)
        if t.shape != p.shape or t.ndim != 1 or len(t) < 2:
            raise PreconditionViolated("kernel needs matching 1-d samples")
        if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-8):
            raise PreconditionViolated("kernel grid must be uniform")
        if self.deriv_order == 0 and self.leading_weight == 0:
            raise PreconditionViolated("a kernel without delta part needs deriv_order >= 1")

    @property
    def h(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])


def _uniform_step(t_grid: np.ndarray) -> float:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise PreconditionViolated("need at least two grid points")
    h = t[1] - t[0]
    if h <= 0 or not np.allclose(np.diff(t), h, rtol=1e-8):
        raise PreconditionViolated("grid must be uniform and increasing")
    return float(h)


def solve_second_kind(kernel: np.ndarray, rhs: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    """Solve ``λ(τ) + ∫_0^τ K(τ - s) λ(s) ds = f(τ)`` by trapezoid product integration.

    ``kernel[j] = K(j h)`` and ``rhs[j] = f(t_0 + j h)``. Second order in ``h``.

    Raises
    ------
    StepTooLarge
        If ``h · max|K| >= 1``.
    """
    h = _uniform_step(t_grid)
    K = np.asarray(kernel)
    f = np.asarray(rhs)
    n = len(t_grid)
    if K.shape[0] < n or f.shape[0] < n:
        raise PreconditionViolated("kernel and rhs must cover the grid")
    kmax = float(np.abs(K[:n]).max(initial=0.0))
    if h * kmax >= 1.0:
        raise StepTooLarge(f"h * max|K| = {h * kmax:.3g} >= 1")
    dtype = np.result_type(K.dtype, f.dtype, float)
    lam = np.zeros(n, dtype=dtype)
    if not np.any(f[:n]):
        return lam
    lam[0] = f[0]
    diag = 1.0 + 0.5 * h * K[0]
    for m in range(1, n):
        acc = 0.5 * K[m] * lam[0]
        if m > 1:
            acc = acc + np.dot(K[m - 1 : 0 : -1], lam[1:m])
        lam[m] = (f[m] - h * acc) / diag
    return lam


# ------------------------------------------------------------ derivatives


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the ``m``-th derivative at ``z`` from nodes ``x``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def differentiate(samples: np.ndarray, h: float, order: int, accuracy: int = 4) -> np.ndarray:
    """``order``-th derivative of uniform samples with ``accuracy``-order stencils.

    Central stencils in the interior, one-sided ones near both ends (so the
    value at the front uses only samples at or after it).
    """
    f = np.asarray(samples)
    if order == 0:
        return f.copy()
    n = len(f)
    width = 2 * ((order + 1) // 2) - 1 + accuracy
    side = order + accuracy
    if n < side:
        raise PreconditionViolated(f"need at least {side} samples for a derivative of order {order}")
    half = width // 2
    out = np.empty(n, dtype=np.result_type(f.dtype, float))
    central = fd_weights(0.0, np.arange(-half, half + 1, dtype=float), order) / h**order
    if n > 2 * half:
        out[half : n - half] = np.convolve(f, central[::-1], mode="valid")
    for i in list(range(min(half, n))) + list(range(max(n - half, half), n)):
        lo = 0 if i < half else n - side
        idx = np.arange(lo, lo + side)
        w = fd_weights(float(i), idx.astype(float), order) / h**order
        out[i] = np.dot(w, f[idx])
    return out


def reduce_first_to_second(
    first_kind_kernel: np.ndarray,
    deriv_order: int,
    leading_value: float | None = None,
    h: float = 1.0,
    floor: float = 1e-14,
    rel_floor: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Differentiate ``∫_0^τ P(τ - s) λ(s) ds = F(τ)`` ``deriv_order`` times.

    When ``P`` and its derivatives below ``deriv_order - 1`` vanish at 0 and
    ``P^{(deriv_order-1)}(0) = leading_value``, the result is
    ``λ + scale ∫ P^{(deriv_order)}(τ - s) λ(s) ds = scale F^{(deriv_order)}``
    with ``scale = 1 / leading_value``.

    When ``leading_value`` is measured from ``P`` it carries the O(h⁴)
    truncation error of the stencil, so it is also compared with
    ``rel_floor`` times the largest ``|P^{(deriv_order-1)}|`` on the grid.

    Returns
    -------
    (second_kind_kernel, scale)
        ``P^{(deriv_order)}`` on the same grid, and ``scale``.

    Raises
    ------
    LeadingValueZero
        If ``|leading_value|`` falls below the floor.
    """
    P = np.asarray(first_kind_kernel)
    if deriv_order < 1:
        raise PreconditionViolated("deriv_order must be at least 1")
    if leading_value is None:
        lead = differentiate(P, h, deriv_order - 1)
        floor = max(floor, rel_floor * float(np.abs(lead).max()))
        leading_value = complex(lead[0])
        if leading_value.imag == 0:
            leading_value = leading_value.real
    if abs(leading_value) < floor:
        raise LeadingValueZero(
            f"leading value {abs(leading_value):.3e} below floor {floor:.1e}: the nonvanishing hypothesis fails"
        )
    return differentiate(P, h, deriv_order), 1.0 / leading_value


def point_source_scale(line_integral: float, chord_length: float, floor: float = 1e-14) -> float:
    """Scale ``1/p(front+) = -8π|x - x0| / ∫_L q ds`` for the differentiated point-source kernel."""
    if abs(line_integral) < floor:
        raise LeadingValueZero("line integral of q vanishes on this chord")
    return -8.0 * np.pi * chord_length / line_integral


# ------------------------------------------------------------ convolution


def trapezoid_convolution(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """``(a * b)(t_n) = ∫_0^{t_n} a(t_n - s) b(s) ds`` by the trapezoid rule."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    full = np.convolve(a, b)[:n]
    return h * (full - 0.5 * a * b[0] - 0.5 * a[0] * b)


def convolution_residual(
    h1_hat: np.ndarray, h2_hat: np.ndarray, lam1: np.ndarray, lam2: np.ndarray, t_grid: np.ndarray
) -> np.ndarray:
    """``ĥ1 + ĥ1 * λ2 - ĥ2 - ĥ2 * λ1`` on a common uniform grid."""
    h = _uniform_step(t_grid)
    return (
        np.asarray(h1_hat)
        + trapezoid_convolution(h1_hat, lam2, h)
        - np.asarray(h2_hat)
        - trapezoid_convolution(h2_hat, lam1, h)
    )


# ------------------------------------------------------------- mechanism


@dataclass(frozen=True)
class Verdict:
    """Outcome of the homogeneous Volterra check."""

    holds: bool
    lambda_sup: float
    tolerance: float
    kernel_sup: float
    window: tuple[float, float]
    n_samples: int

    def as_dict(self) -> dict[str, Any]:
        return {
            "holds": self.holds,
            "lambda_sup": self.lambda_sup,
            "tolerance": self.tolerance,
            "kernel_sup": self.kernel_sup,
            "window": list(self.window),
            "n_samples": self.n_samples,
        }


def agreement_window(chord: Chord, epsilon: float) -> tuple[float, float]:
    """``(r, r + (ε - r))`` in absolute time, with ``r = |x - x0|``.

    Raises
    ------
    WindowEmpty
        If ``ε <= r``.
    """
    r = chord.length
    if epsilon <= r:
        raise WindowEmpty(f"epsilon {epsilon} <= |x - x0| = {r}")
    return r, r + (epsilon - r)


def second_kind_kernel(kernel: ConvolutionKernel, leading_value: float | None = None) -> np.ndarray:
    """The kernel ``K`` of ``λ + ∫ K λ = f`` derived from ``ĥ``."""
    if kernel.deriv_order == 0:
        return np.asarray(kernel.samples) / kernel.leading_weight
    K, scale = reduce_first_to_second(kernel.samples, kernel.deriv_order, leading_value, kernel.h)
    return scale * K


def uniqueness_mechanism(
    h_hat_early: ConvolutionKernel,
    window: tuple[float, float],
    forcing: np.ndarray | None = None,
    leading_value: float | None = None,
) -> tuple[Verdict, np.ndarray]:
    """Solve the Volterra equation for ``λ`` on the early-time window.

    ``window`` is in time relative to the kernel grid's start (the front).
    With ``forcing=None`` the equation is homogeneous, which is what equal
    moduli imply; the verdict holds when ``‖λ‖∞ <= 1e-8 (1 + ‖K‖∞ T)``. A
    nonzero ``forcing`` models unequal data and makes the verdict fail.

    Raises
    ------
    WindowEmpty
        If the window has nonpositive length or holds fewer than two samples.
    """
    t0, t1 = window
    if t1 <= t0:
        raise WindowEmpty(f"window {window} is empty")
    t = h_hat_early.t_grid - h_hat_early.t_grid[0]
    K_full = second_kind_kernel(h_hat_early, leading_value)
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    if sel.sum() < 2:
        raise WindowEmpty("window holds fewer than two samples")
    idx = np.nonzero(sel)[0]
    n = idx[-1] + 1
    K = K_full[:n]
    f = np.zeros(n) if forcing is None else np.asarray(forcing)[:n]
    lam = solve_second_kind(K, f, t[:n])
    T = float(t[n - 1])
    ksup = float(np.abs(K).max(initial=0.0))
    tol = 1e-8 * (1.0 + ksup * T)
    lsup = float(np.abs(lam[idx]).max(initial=0.0))
    return Verdict(lsup <= tol, lsup, tol, ksup, (float(t0), float(t1)), int(len(idx))), lam
