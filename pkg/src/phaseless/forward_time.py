"""Time-domain Cauchy problems for ``u_tt = Δu - q u``.

Point source
    ``U = δ(t - r) / (4π r) + Ũ`` with ``r = |x - x0|``. The remainder is
    the Neumann series ``Ũ = Σ_{n≥1} U_n`` of retarded volume potentials.
    The first iterate collapses the delta onto the prolate spheroid
    ``|x - ξ| + |ξ - x0| = t`` and becomes a surface integral::

        U_1(x, t) = -(1 / 32π²) ∫_{-1}^{1} du ∫_0^{2π} dφ q(ξ(u, φ; t))

    Higher iterates are midpoint sums over the cells where ``q > 0`` of the
    previous iterate, tabulated per cell against the retarded time.

Distributed source
    ``v_tt = Δv - q v``, ``v(0) = 0``, ``v_t(0) = g``. The free term is the
    Kirchhoff spherical mean ``V_0(x, t) = t · mean_{|ω|=1} g(x + t ω)`` and
    ``V_n(x, t) = -∫_0^t ρ mean_ω[q V_{n-1}](x + ρ ω, t - ρ) dρ``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateWindow, PreconditionViolated, SeriesNotConverged
from .geometry import Chord, PotentialGrid, SourceGrid, chord_integral
from .quadrature import gauss_legendre, orthonormal_frame, sphere_rule


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Samples of a time-domain field at one receiver.

    The trace is zero before ``t_grid[0]``; for point-source traces the grid
    starts exactly at the front ``|x - x0|`` so that the jump there is a
    sample, not something between samples.

    Attributes
    ----------
    kind : str
        ``"point"`` for the continuous part ``Ũ`` of a point-source field
        (the delta front is implied), ``"volume"`` for distributed-source
        traces and ``"generic"`` otherwise.
    """

    t_grid: np.ndarray
    values: np.ndarray
    front_time: float = 0.0
    receiver: tuple[float, float, float] | None = None
    source: tuple[float, float, float] | None = None
    kind: str = "generic"
    decay_rate: float | None = None
    term_norms: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        t = np.array(self.t_grid, dtype=float)
        v = np.array(self.values)
        for a in (t, v):
            a.flags.writeable = False
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape[-1:]:
            raise PreconditionViolated("t_grid and values must have matching length")
        if len(t) < 2:
            raise PreconditionViolated("a trace needs at least two samples")
        h = np.diff(t)
        if not np.allclose(h, h[0], rtol=1e-8, atol=1e-12):
            raise PreconditionViolated("t_grid must be uniform")
        if t[-1] <= self.front_time:
            raise PreconditionViolated("T must exceed the front time")
        before = t < self.front_time - 1e-12 * max(1.0, self.front_time)
        if np.any(v[..., before] != 0):
            raise PreconditionViolated("values must vanish before the front")

    @property
    def h(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def chord(self) -> Chord | None:
        if self.source is None or self.receiver is None:
            return None
        return Chord(self.source, self.receiver)

    def with_decay_rate(self, rate: float) -> "TimeTrace":
        return TimeTrace(
            self.t_grid, self.values, self.front_time, self.receiver, self.source, self.kind, rate, self.term_norms
        )


@dataclass(frozen=True)
class SeriesQuadrature:
    """Resolution knobs for the Neumann series.

    Attributes
    ----------
    n_u, n_phi : int
        Gauss points along the spheroid axis and azimuthal points, used for
        the first iterate at the receiver.
    cell_n_u, cell_n_phi : int
        Same, for the per-cell tables feeding higher iterates.
    table_step : float
        Retarded-time step of the per-cell tables.
    tol_series : float
        Largest allowed ratio ``max|U_n| / max|Σ U|`` for the last term.
    """

    n_u: int = 32
    n_phi: int = 16
    cell_n_u: int = 24
    cell_n_phi: int = 16
    table_step: float = 0.02
    tol_series: float = 0.25


# ---------------------------------------------------------------- kernels


def smoothed_inverse_distance(d: np.ndarray, cell_radius: float) -> np.ndarray:
    """Mean of ``1/|x - ξ|`` over a ball of radius ``R`` centred at distance ``d``.

    Equals ``1/d`` outside the ball and ``(3R² - d²) / (2R³)`` inside; at
    ``d = 0`` this is the self-cell value whose ball integral is ``2π R²``.
    """
    d = np.asarray(d, dtype=float)
    R = cell_radius
    inside = d < R
    out = np.empty_like(d)
    out[~inside] = 1.0 / d[~inside]
    out[inside] = (3 * R**2 - d[inside] ** 2) / (2 * R**3)
    return out


def equal_volume_radius(h: float) -> float:
    """Radius of the ball whose volume equals a cube of side ``h``."""
    return (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0) * h


def first_iterate(
    q_grid: PotentialGrid,
    x: np.ndarray,
    x0: np.ndarray,
    t: np.ndarray,
    n_u: int = 32,
    n_phi: int = 16,
) -> np.ndarray:
    """``U_1(x, x0, t)`` by Gauss-trapezoid quadrature on the spheroid.

    Valid for ``t >= |x - x0|``; entries with smaller ``t`` return 0.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    r = float(np.linalg.norm(x - x0))
    out = np.zeros(t.shape)
    if r == 0:
        raise PreconditionViolated("receiver coincides with source")
    lo, hi = support_time_window(q_grid, x, x0)
    active = (t >= r) & (t >= lo) & (t <= hi)
    if not np.any(active):
        return out
    c = 0.5 * (x + x0)
    e, e1, e2 = orthonormal_frame(x - x0)
    u, wu = gauss_legendre(n_u)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    ring = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2  # (n_phi, 3)
    su = np.sqrt(1.0 - u**2)
    ta = t[active]
    res = np.empty(ta.shape)
    chunk = max(1, 200_000 // (n_u * n_phi))
    for s in range(0, len(ta), chunk):
        tt = ta[s : s + chunk]
        A = 0.5 * tt
        B = np.sqrt(np.maximum(0.25 * tt**2 - 0.25 * r**2, 0.0))
        axial = c + (A[:, None] * u[None, :])[..., None] * e  # (m, n_u, 3)
        radial = (B[:, None] * su[None, :])[..., None, None] * ring[None, None]  # (m, n_u, n_phi, 3)
        pts = axial[:, :, None, :] + radial
        vals = q_grid.evaluate(pts)
        res[s : s + chunk] = np.einsum("mup,u->m", vals, wu) * (2.0 * np.pi / n_phi)
    out[active] = -res / (32.0 * np.pi**2)
    return out


def support_time_window(q_grid: PotentialGrid, x: np.ndarray, x0: np.ndarray) -> tuple[float, float]:
    """Bounds on ``|x - ξ| + |ξ - x0|`` over the support of ``q``.

    ``U_1`` vanishes outside this window because the spheroid either has not
    reached the support or already encloses it.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if q_grid.analytic is not None and q_grid.bumps:
        lo, hi = np.inf, -np.inf
        for b in q_grid.bumps:
            if b.amplitude == 0:
                continue
            cb = np.asarray(b.center)
            s = np.linalg.norm(x - cb) + np.linalg.norm(cb - x0)
            lo = min(lo, s - 2 * b.radius)
            hi = max(hi, s + 2 * b.radius)
        return lo, hi
    cells, _ = q_grid.support_cells()
    if len(cells) == 0:
        return np.inf, -np.inf
    s = np.linalg.norm(cells - x, axis=1) + np.linalg.norm(cells - x0, axis=1)
    pad = 2.0 * np.sqrt(3.0) * max(q_grid.spacing)
    return float(s.min() - pad), float(s.max() + pad)


# ------------------------------------------------------ point-source series


def point_time_grid(chord: Chord, T: float, h_t: float) -> np.ndarray:
    """Uniform grid starting exactly at the front ``|x - x0|`` and reaching ``T``."""
    r = chord.length
    if T <= r:
        raise PreconditionViolated(f"T={T} must exceed the front time {r}")
    n = int(np.ceil((T - r) / h_t - 1e-9)) + 1
    return r + h_t * np.arange(n)


def default_horizon(q_grid: PotentialGrid, chord: Chord, n_terms: int = 1, margin: float = 0.1) -> float:
    """A final time past the support of the first ``n_terms`` iterates."""
    lo, hi = support_time_window(q_grid, chord.x, chord.x0)
    r = chord.length
    if not np.isfinite(hi):
        return r + 1.0
    width = hi - max(lo, r)
    return max(hi, r) + (n_terms - 1) * max(width, 0.0) + margin


def _cell_tables_point(
    q_grid: PotentialGrid, x0: np.ndarray, sigma_max: float, n_levels: int, quad: SeriesQuadrature
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[np.ndarray]]:
    """Per-cell tables ``U_n(ξ_j, |ξ_j - x0| + σ)`` for ``n = 1..n_levels``."""
    cells, qc = q_grid.support_cells()
    front = np.linalg.norm(cells - x0, axis=1)
    hs = quad.table_step
    sig = hs * np.arange(int(np.ceil(sigma_max / hs)) + 2)
    tab1 = np.zeros((len(cells), len(sig)))
    for j, cj in enumerate(cells):
        if front[j] < 1e-9:
            continue
        tab1[j] = first_iterate(q_grid, cj, x0, front[j] + sig, quad.cell_n_u, quad.cell_n_phi)
    tables = [tab1]
    if n_levels > 1:
        h = q_grid.spacing[0]
        R = equal_volume_radius(h)
        dij = np.linalg.norm(cells[:, None, :] - cells[None, :, :], axis=-1)
        w = q_grid.cell_volume * smoothed_inverse_distance(dij, R) / (4 * np.pi) * qc[None, :]
        shift = front[:, None] - dij - front[None, :]  # retarded offset, always <= 0
        for _ in range(1, n_levels):
            prev = tables[-1]
            new = np.zeros_like(prev)
            for i in range(len(cells)):
                s = shift[i][:, None] + sig[None, :]
                new[i] = -np.sum(w[i][:, None] * _interp_rows(prev, s, hs), axis=0)
            tables.append(new)
    return cells, qc, front, tables


def _interp_rows(table: np.ndarray, s: np.ndarray, hs: float) -> np.ndarray:
    """Row-wise linear interpolation of ``table[j]`` at ``s[j, :]``, zero outside."""
    pos = s / hs
    i0 = np.floor(pos).astype(int)
    frac = pos - i0
    n = table.shape[1]
    ok = (i0 >= 0) & (i0 < n - 1)
    i0c = np.clip(i0, 0, n - 2)
    rows = np.arange(table.shape[0])[:, None]
    v = (1 - frac) * table[rows, i0c] + frac * table[rows, i0c + 1]
    return np.where(ok, v, 0.0)


def neumann_point_source(
    q_grid: PotentialGrid,
    chord: Chord,
    T: float | None = None,
    n_terms: int = 1,
    vol_quad: SeriesQuadrature | None = None,
    h_t: float = 0.005,
) -> TimeTrace:
    """Continuous part ``Ũ = Σ_{n=1}^{n_terms} U_n`` at the chord's receiver.

    Raises
    ------
    SeriesNotConverged
        If the last term exceeds ``tol_series`` times the partial sum (sup norms).
    """
    if n_terms < 1:
        raise PreconditionViolated("n_terms must be at least 1")
    quad = vol_quad or SeriesQuadrature()
    T = default_horizon(q_grid, chord, n_terms) if T is None else float(T)
    t = point_time_grid(chord, T, h_t)
    x, x0 = chord.x, chord.x0
    terms = [first_iterate(q_grid, x, x0, t, quad.n_u, quad.n_phi)]
    if n_terms > 1 and not q_grid.is_zero():
        cells, qc, front, tables = _cell_tables_point(q_grid, x0, T - chord.length, n_terms - 1, quad)
        dx = np.linalg.norm(cells - x, axis=1)
        R = equal_volume_radius(q_grid.spacing[0])
        w = q_grid.cell_volume * smoothed_inverse_distance(dx, R) / (4 * np.pi) * qc
        for tab in tables:
            s = t[None, :] - dx[:, None] - front[:, None]
            terms.append(-np.sum(w[:, None] * _interp_rows(tab, s, quad.table_step), axis=0))
    elif n_terms > 1:
        terms.extend(np.zeros_like(t) for _ in range(n_terms - 1))
    total = np.sum(terms, axis=0)
    norms = tuple(float(np.abs(u).max()) for u in terms)
    _check_series(norms, float(np.abs(total).max()), quad.tol_series)
    return TimeTrace(t, total, chord.length, chord.receiver, chord.source, "point", None, norms)


def _check_series(norms: Sequence[float], total: float, tol: float) -> None:
    if len(norms) > 1 and total > 0 and norms[-1] > tol * total:
        raise SeriesNotConverged(f"last term {norms[-1]:.3e} exceeds {tol} x partial sum {total:.3e}")


def front_value(q_grid: PotentialGrid, chord: Chord, n_quad: int = 401) -> float:
    """Jump of ``Ũ`` at the front: ``-(8π|x - x0|)^{-1} ∫_L q ds``.

    The factor ``8π`` follows from the spheroid Jacobian: on the degenerate
    spheroid ``t = r`` the surface integral reduces to the chord.
    """
    return -chord_integral(q_grid, chord, n_quad) / (8.0 * np.pi * chord.length)


def near_front_limit(q_grid: PotentialGrid, chord: Chord, n_quad: int = 401) -> float:
    """Limit of ``Ũ(x, x0, t)`` as ``t`` decreases to the front; see :func:`front_value`."""
    return front_value(q_grid, chord, n_quad)


def extrapolate_front(trace: TimeTrace, n_points: int = 6, degree: int = 3) -> float:
    """Polynomial extrapolation of ``Ũ`` to ``τ = t - front -> 0+``.

    Only samples with ``τ > 0`` are used, so the value at the front itself
    never enters.
    """
    tau = trace.t_grid - trace.front_time
    sel = np.nonzero(tau > 1e-12)[0][:n_points]
    if len(sel) <= degree:
        raise DegenerateWindow("not enough samples after the front")
    coef = np.polynomial.polynomial.polyfit(tau[sel], trace.values[sel], degree)
    return float(coef[0])


def estimate_decay_rate(trace: TimeTrace, t_window: tuple[float, float] | None = None, floor: float = 1e-30) -> float:
    """Least-squares exponential rate ``c`` with ``|values| ~ exp(-c t)``."""
    lo, hi = (trace.front_time, trace.T) if t_window is None else t_window
    if lo < trace.front_time - 1e-12 or hi > trace.T + 1e-12 or lo >= hi:
        raise DegenerateWindow(f"window {t_window} not inside ({trace.front_time}, {trace.T}]")
    t = trace.t_grid
    a = np.abs(trace.values)
    m = (t > lo) & (t <= hi) & (a > floor)
    if m.sum() < 2:
        raise DegenerateWindow("all values in the window are below the floor")
    slope = np.polyfit(t[m], np.log(a[m]), 1)[0]
    return float(-slope)


# --------------------------------------------------- distributed-source series


@dataclass(frozen=True)
class SphereQuadrature:
    """Spherical-mean resolution for the distributed-source series."""

    n_theta: int = 16
    n_phi: int = 16
    n_rho: int = 12
    outer_theta: int = 8
    outer_phi: int = 12
    table_step: float = 0.02
    tol_series: float = 0.25


def kirchhoff_v0(
    source: SourceGrid,
    x: np.ndarray,
    t: np.ndarray | float,
    surf_quad: tuple[int, int] = (24, 24),
    exact: bool = True,
) -> np.ndarray:
    """``(4πt)^{-1} ∫_{|x-ξ|=t} g dS = t · mean_ω g(x + tω)``.

    The product rule's pole points from ``x`` to the source centre so that a
    narrow source is resolved in the polar direction.
    """
    x = np.asarray(x, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    axis = np.asarray(source.center) - x
    if np.linalg.norm(axis) < 1e-12:
        axis = np.array([0.0, 0.0, 1.0])
    dirs, w = sphere_rule(surf_quad[0], surf_quad[1], axis)
    pts = x + t[..., None, None] * dirs
    g = source.evaluate(pts) if exact else _source_trilinear(source, pts)
    return t * (g @ w) / (4.0 * np.pi)


def _source_trilinear(source: SourceGrid, pts: np.ndarray) -> np.ndarray:
    from .geometry import _trilinear

    return _trilinear(source.values, np.asarray(source.spacing), np.asarray(source.origin), pts)


def _first_volume_iterate(
    q_grid: PotentialGrid, source: SourceGrid, x: np.ndarray, t: np.ndarray, quad: SphereQuadrature
) -> np.ndarray:
    """``V_1(x, t) = -∫_0^t ρ(t-ρ) mean_ω mean_ω' q(x+ρω) g(x+ρω+(t-ρ)ω') dρ``."""
    out = np.zeros(t.shape)
    u, wu = gauss_legendre(quad.n_rho, 0.0, 1.0)
    outer, wo = sphere_rule(quad.outer_theta, quad.outer_phi)
    axis = np.asarray(source.center) - x
    if np.linalg.norm(axis) < 1e-12:
        axis = np.array([0.0, 0.0, 1.0])
    inner, wi = sphere_rule(quad.n_theta, quad.n_phi, axis)
    wo = wo / (4 * np.pi)
    wi = wi / (4 * np.pi)
    for m, tm in enumerate(t):
        if tm <= 0:
            continue
        rho = tm * u
        y = x + rho[:, None, None] * outer[None]  # (n_rho, n_out, 3)
        qy = q_grid.evaluate(y)
        if not np.any(qy):
            continue
        z = y[..., None, :] + (tm - rho)[:, None, None, None] * inner[None, None]
        gz = source.evaluate(z) @ wi  # (n_rho, n_out)
        inner_mean = (qy * gz) @ wo
        out[m] = -tm * np.sum(wu * rho * (tm - rho) * inner_mean)
    return out


def _volume_cell_tables(
    q_grid: PotentialGrid, source: SourceGrid, T: float, n_levels: int, quad: SphereQuadrature
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[np.ndarray]]:
    """Tables ``V_n(ξ_j, τ)`` on support cells for ``n = 0..n_levels-1``."""
    cells, qc = q_grid.support_cells()
    hs = quad.table_step
    tau = hs * np.arange(int(np.ceil(T / hs)) + 2)
    tab0 = np.stack([kirchhoff_v0(source, c, tau, (quad.n_theta, quad.n_phi)) for c in cells]) if len(cells) else np.zeros((0, len(tau)))
    tables = [tab0]
    if n_levels > 1 and len(cells):
        R = equal_volume_radius(q_grid.spacing[0])
        dij = np.linalg.norm(cells[:, None, :] - cells[None, :, :], axis=-1)
        w = q_grid.cell_volume * smoothed_inverse_distance(dij, R) / (4 * np.pi) * qc[None, :]
        for _ in range(1, n_levels):
            prev = tables[-1]
            new = np.zeros_like(prev)
            for i in range(len(cells)):
                s = tau[None, :] - dij[i][:, None]
                new[i] = -np.sum(w[i][:, None] * _interp_rows(prev, s, hs), axis=0)
            tables.append(new)
    return cells, qc, tau, tables


def volume_series_terms(
    q_grid: PotentialGrid,
    source: SourceGrid,
    points: np.ndarray,
    t: np.ndarray,
    n_terms: int,
    quad: SphereQuadrature | None = None,
) -> list[np.ndarray]:
    """Terms ``[V_0, ..., V_{n_terms}]`` at ``points`` (shape ``(P, 3)``) on times ``t``.

    ``V_0`` is the Kirchhoff mean and ``V_1`` the nested spherical integral,
    both with closed-form ``q`` and ``g``. Later terms are midpoint sums over
    the support cells of tabulated previous terms.
    """
    quad = quad or SphereQuadrature()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.asarray(t, dtype=float)
    terms = [np.stack([kirchhoff_v0(source, p, t, (quad.n_theta, quad.n_phi)) for p in points])]
    if n_terms >= 1:
        if q_grid.is_zero():
            terms.append(np.zeros_like(terms[0]))
        else:
            terms.append(np.stack([_first_volume_iterate(q_grid, source, p, t, quad) for p in points]))
    if n_terms >= 2:
        if q_grid.is_zero():
            terms.extend(np.zeros_like(terms[0]) for _ in range(n_terms - 1))
        else:
            cells, qc, tau, tables = _volume_cell_tables(q_grid, source, float(t.max()), n_terms, quad)
            R = equal_volume_radius(q_grid.spacing[0])
            for level in range(2, n_terms + 1):
                tab = tables[level - 1]
                vals = []
                for p in points:
                    dx = np.linalg.norm(cells - p, axis=1)
                    w = q_grid.cell_volume * smoothed_inverse_distance(dx, R) / (4 * np.pi) * qc
                    s = t[None, :] - dx[:, None]
                    vals.append(-np.sum(w[:, None] * _interp_rows(tab, s, quad.table_step), axis=0))
                terms.append(np.stack(vals))
    return terms


@dataclass(frozen=True, eq=False)
class CauchyField:
    """Distributed-source field ``V(x, t)`` on a box of nodes.

    ``values`` has shape ``(nx, ny, nz, nt)``; ``incident`` holds the
    Kirchhoff term ``V_0`` on the same nodes so that the scattered part is
    available without recomputation.
    """

    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    t_grid: np.ndarray
    values: np.ndarray
    incident: np.ndarray
    source: SourceGrid
    term_norms: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name in ("t_grid", "values", "incident"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        object.__setattr__(self, "axes", tuple(np.asarray(a, dtype=float) for a in self.axes))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def trace(self, index: tuple[int, int, int]) -> TimeTrace:
        i, j, k = index
        x = tuple(float(self.axes[d][index[d]]) for d in range(3))
        return TimeTrace(self.t_grid, self.values[i, j, k], 0.0, x, self.source.center, "volume")


def neumann_volume_source(
    q_grid: PotentialGrid,
    source_grid: SourceGrid,
    region: Sequence[np.ndarray],
    T: float,
    n_terms: int = 1,
    h_t: float = 0.01,
    quad: SphereQuadrature | None = None,
) -> CauchyField:
    """``V = Σ_{n=0}^{n_terms} V_n`` on the node box ``region = (xs, ys, zs)``.

    Raises
    ------
    SeriesNotConverged
        If the last term is too large relative to the partial sum.
    """
    if n_terms < 1:
        raise PreconditionViolated("n_terms must be at least 1")
    if T <= 0:
        raise PreconditionViolated("T must be positive")
    quad = quad or SphereQuadrature()
    axes = tuple(np.atleast_1d(np.asarray(a, dtype=float)) for a in region)
    lim = max(abs(o) + (n - 1) * s for o, s, n in zip(q_grid.origin, q_grid.spacing, q_grid.shape))
    if any(np.abs(a).max() > lim for a in axes):
        raise PreconditionViolated("region must lie inside the grid extent")
    t = h_t * np.arange(int(np.ceil(T / h_t - 1e-9)) + 1)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shape = nodes.shape[:-1]
    terms = volume_series_terms(q_grid, source_grid, nodes.reshape(-1, 3), t, n_terms, quad)
    total = np.sum(terms, axis=0)
    norms = tuple(float(np.abs(v).max()) for v in terms)
    _check_series(norms[1:], float(np.abs(total - terms[0]).max()), quad.tol_series)
    return CauchyField(
        axes, t, total.reshape(*shape, len(t)), terms[0].reshape(*shape, len(t)), source_grid, norms
    )


def scattered_time_field(cauchy_field: CauchyField) -> CauchyField:
    """``V_s = V - V_0``."""
    f = cauchy_field
    return CauchyField(f.axes, f.t_grid, f.values - f.incident, np.zeros_like(f.incident), f.source, f.term_norms)


def volume_source_trace(
    q_grid: PotentialGrid,
    source_grid: SourceGrid,
    x: Sequence[float],
    T: float,
    n_terms: int = 1,
    h_t: float = 0.01,
    scattered: bool = False,
    quad: SphereQuadrature | None = None,
) -> TimeTrace:
    """``V`` (or ``V_s`` when ``scattered``) at one receiver as a :class:`TimeTrace`."""
    field = neumann_volume_source(q_grid, source_grid, [[x[0]], [x[1]], [x[2]]], T, n_terms, h_t, quad)
    if scattered:
        field = scattered_time_field(field)
    tr = field.trace((0, 0, 0))
    return TimeTrace(tr.t_grid, tr.values, 0.0, tr.receiver, tr.source, "volume", None, field.term_norms)


def time_derivatives_at_zero(values: np.ndarray, h: float, max_order: int = 3) -> np.ndarray:
    """One-sided finite-difference derivatives of orders ``0..max_order`` at ``t = 0``.

    Interpolates the first ``max_order + 3`` samples by a polynomial and
    differentiates it, so the stencil is exact for polynomials of degree
    ``max_order + 2``.
    """
    n = max_order + 3
    v = np.asarray(values)[..., :n]
    tt = h * np.arange(n)
    V = np.vander(tt, n, increasing=True)
    coef = np.linalg.solve(V, np.moveaxis(v, -1, 0))
    fact = np.array([math.factorial(r) for r in range(max_order + 1)], dtype=float)
    return np.moveaxis(coef[: max_order + 1], 0, -1) * fact
