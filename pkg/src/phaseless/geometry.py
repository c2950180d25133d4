"""Scene construction, grids, chords and source mollification.

All domains are balls centred at the origin: the unknown region ``Omega``,
the measurement ball ``G1`` whose boundary is the sphere ``S``, and the
outer ball ``G`` outside which the potential and the source vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates

from .errors import PreconditionViolated, QuadratureFailure, SeparationViolated

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SceneConfig:
    """Concentric balls ``Omega ⊂ G1 ⊂ G`` plus a frequency band.

    Attributes
    ----------
    omega_radius, g1_radius, g_radius : float
        Radii of the unknown region, the measurement ball and the outer ball.
    epsilon : float
        Separation parameter in (0, 1). Receivers live within ``epsilon`` of
        their source.
    k_band : tuple of float
        Measured wavenumber interval ``(a, b)`` with ``a < b``.
    """

    omega_radius: float
    g1_radius: float
    g_radius: float
    epsilon: float
    k_band: tuple[float, float] = (1.0, 5.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_band", (float(self.k_band[0]), float(self.k_band[1])))
        if min(self.omega_radius, self.g1_radius, self.g_radius, self.epsilon) <= 0:
            raise SeparationViolated("radii and epsilon must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise SeparationViolated(f"epsilon={self.epsilon} must lie in (0, 1)")
        if not self.omega_radius + 2 * self.epsilon < self.g1_radius:
            raise SeparationViolated(
                f"omega_radius + 2*epsilon = {self.omega_radius + 2 * self.epsilon} "
                f">= g1_radius = {self.g1_radius}"
            )
        if not self.g1_radius + 2 * self.epsilon < self.g_radius:
            raise SeparationViolated(
                f"g1_radius + 2*epsilon = {self.g1_radius + 2 * self.epsilon} "
                f">= g_radius = {self.g_radius}"
            )
        if not self.k_band[0] < self.k_band[1]:
            raise SeparationViolated(f"k_band {self.k_band} must satisfy a < b")

    @property
    def omega_diameter(self) -> float:
        return 2.0 * self.omega_radius

    @property
    def g_diameter(self) -> float:
        return 2.0 * self.g_radius


def build_scene(
    omega_radius: float,
    g1_radius: float,
    g_radius: float,
    epsilon: float,
    k_band: tuple[float, float] = (1.0, 5.0),
) -> SceneConfig:
    """Validate and return a :class:`SceneConfig`.

    Raises
    ------
    SeparationViolated
        If ``omega + 2 eps >= g1`` or ``g1 + 2 eps >= g`` or a value is out
        of range.
    """
    return SceneConfig(float(omega_radius), float(g1_radius), float(g_radius), float(epsilon), k_band)


# ---------------------------------------------------------------- profiles


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def f(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        m = x > 0
        out[m] = np.exp(-1.0 / x[m])
        return out

    a, b = f(s), f(1.0 - s)
    return a / (a + b)


def cutoff(points: np.ndarray, scene: SceneConfig) -> np.ndarray:
    """Radial cutoff ``chi``: 1 on ``G1``, 0 outside ``G``, smooth between."""
    r = np.linalg.norm(np.asarray(points, dtype=float), axis=-1)
    s = (scene.g_radius - r) / (scene.g_radius - scene.g1_radius)
    return smooth_step(s)


@dataclass(frozen=True)
class Bump:
    """Compactly supported smooth bump ``amp * exp(-1 / (1 - (r/R)^2))``."""

    center: tuple[float, float, float]
    radius: float
    amplitude: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius <= 0:
            raise PreconditionViolated("bump radius must be positive")
        if self.amplitude < 0:
            raise PreconditionViolated("bump amplitude must be nonnegative")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        c = np.asarray(self.center)
        d2 = ((p[..., 0] - c[0]) ** 2 + (p[..., 1] - c[1]) ** 2 + (p[..., 2] - c[2]) ** 2) / self.radius**2
        out = np.zeros(d2.shape)
        m = d2 < 1.0
        if np.any(m):
            out[m] = self.amplitude * np.exp(-1.0 / (1.0 - d2[m]))
        return out

    @property
    def peak(self) -> float:
        return self.amplitude * np.exp(-1.0)

    def outer_radius(self) -> float:
        """Distance from the origin to the farthest support point."""
        return float(np.linalg.norm(self.center)) + self.radius


def bump_sum(bumps: Sequence[Bump]) -> Field:
    """Return ``x -> sum_j bump_j(x)``."""
    bumps = tuple(bumps)

    def q(points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape[:-1])
        for b in bumps:
            out += b(p)
        return out

    q.bumps = bumps  # type: ignore[attr-defined]
    return q


# ------------------------------------------------------------------- grids


def grid_layout(scene: SceneConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred cubic grid of ``n`` nodes per axis covering ``[-g, g]^3``.

    Returns ``(spacing, origin)`` where ``origin`` is the first node.
    """
    h = 2.0 * scene.g_radius / n
    return np.full(3, h), np.full(3, -scene.g_radius + 0.5 * h)


def _grid_nodes(shape: Sequence[int], spacing: np.ndarray, origin: np.ndarray) -> np.ndarray:
    axes = [origin[i] + spacing[i] * np.arange(shape[i]) for i in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _trilinear(values: np.ndarray, spacing: np.ndarray, origin: np.ndarray, points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    flat = p.reshape(-1, 3)
    coords = ((flat - origin) / spacing).T
    out = map_coordinates(values, coords, order=1, mode="constant", cval=0.0)
    return out.reshape(p.shape[:-1])


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    """Nonnegative potential sampled on a cell-centred Cartesian grid.

    ``analytic`` optionally carries the closed-form field the grid was sampled
    from. Forward solvers use it when present; the line-integral oracle always
    uses trilinear interpolation of ``values``.
    """

    values: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    smoothness_order: int = 2
    analytic: Field | None = field(default=None, repr=False)
    g_radius: float | None = None
    bumps: tuple[Bump, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "bumps", tuple(self.bumps))
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", tuple(float(s) for s in np.broadcast_to(self.spacing, 3)))
        object.__setattr__(self, "origin", tuple(float(s) for s in np.broadcast_to(self.origin, 3)))
        if v.ndim != 3:
            raise PreconditionViolated("potential values must be a 3-d array")
        if np.any(v < 0):
            raise PreconditionViolated("potential must be nonnegative")
        if self.smoothness_order not in (2, 4):
            raise PreconditionViolated("smoothness_order must be 2 or 4")
        if self.g_radius is not None:
            r = np.linalg.norm(self.nodes(), axis=-1)
            if np.any(v[r >= self.g_radius] != 0):
                raise PreconditionViolated("potential must vanish outside G")

    # construction ---------------------------------------------------------
    @classmethod
    def from_function(
        cls, scene: SceneConfig, fn: Field, n: int, smoothness_order: int = 2
    ) -> "PotentialGrid":
        spacing, origin = grid_layout(scene, n)
        nodes = _grid_nodes((n, n, n), spacing, origin)
        vals = np.asarray(fn(nodes), dtype=float)
        vals = np.where(np.linalg.norm(nodes, axis=-1) < scene.g_radius, vals, 0.0)

        def inside(points: np.ndarray, fn: Field = fn) -> np.ndarray:
            p = np.asarray(points, dtype=float)
            return np.where(np.linalg.norm(p, axis=-1) < scene.g_radius, fn(p), 0.0)

        return cls(vals, tuple(spacing), tuple(origin), smoothness_order, inside, scene.g_radius)

    @classmethod
    def from_bumps(
        cls, scene: SceneConfig, bumps: Sequence[Bump], n: int, smoothness_order: int = 2
    ) -> "PotentialGrid":
        for b in bumps:
            if b.outer_radius() >= scene.g_radius:
                raise PreconditionViolated(f"bump {b} is not supported inside G")
        grid = cls.from_function(scene, bump_sum(bumps), n, smoothness_order)
        object.__setattr__(grid, "bumps", tuple(bumps))  # frozen: set once at construction
        return grid

    @classmethod
    def zeros(cls, scene: SceneConfig, n: int) -> "PotentialGrid":
        return cls.from_function(scene, lambda p: np.zeros(np.shape(p)[:-1]), n)

    # queries --------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.spacing[i] * np.arange(self.shape[i]) for i in range(3)]

    def nodes(self) -> np.ndarray:
        return _grid_nodes(self.shape, np.asarray(self.spacing), np.asarray(self.origin))

    def evaluate(self, points: np.ndarray, exact: bool = True) -> np.ndarray:
        """Potential at arbitrary points (closed form if known, else trilinear)."""
        if exact and self.analytic is not None:
            return np.asarray(self.analytic(np.asarray(points, dtype=float)), dtype=float)
        return _trilinear(self.values, np.asarray(self.spacing), np.asarray(self.origin), points)

    def sup_norm(self) -> float:
        return float(self.values.max(initial=0.0))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def support_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Centres and values of the cells where the potential is nonzero."""
        mask = self.values > 0
        return self.nodes()[mask], self.values[mask]

    def with_values(self, values: np.ndarray, analytic: Field | None = None) -> "PotentialGrid":
        return PotentialGrid(values, self.spacing, self.origin, self.smoothness_order, analytic, self.g_radius)


# ------------------------------------------------------------------ chords


@dataclass(frozen=True)
class Chord:
    """Straight segment from a source ``x0`` to a receiver ``x``."""

    source: tuple[float, float, float]
    receiver: tuple[float, float, float]

    def __post_init__(self) -> None:
        s = tuple(float(c) for c in self.source)
        r = tuple(float(c) for c in self.receiver)
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "receiver", r)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(r))):
            raise PreconditionViolated("chord endpoints must be finite")
        if s == r:
            raise PreconditionViolated("receiver must differ from source")

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.source)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.receiver)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.x - self.x0))

    def points(self, s: np.ndarray) -> np.ndarray:
        """Points ``x0 + s (x - x0)`` for parameters ``s`` in [0, 1]."""
        s = np.asarray(s, dtype=float)
        return self.x0 + s[..., None] * (self.x - self.x0)

    def distance_to_origin(self) -> float:
        """Distance from the origin to the closed segment."""
        d = self.x - self.x0
        s = np.clip(-np.dot(self.x0, d) / np.dot(d, d), 0.0, 1.0)
        return float(np.linalg.norm(self.x0 + s * d))


def random_sphere_points(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def measurement_pairs(
    scene: SceneConfig, n_sources: int, n_receivers_per_source: int, seed: int = 0
) -> list[Chord]:
    """Sources uniform on ``S``; receivers uniform in the shell
    ``epsilon/4 <= |x - x0| < epsilon`` around each source."""
    if n_sources < 1 or n_receivers_per_source < 1:
        raise PreconditionViolated("counts must be at least 1")
    rng = np.random.default_rng(seed)
    sources = random_sphere_points(n_sources, scene.g1_radius, rng)
    chords = []
    eps = scene.epsilon
    for x0 in sources:
        for _ in range(n_receivers_per_source):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            lo, hi = (eps / 4) ** 3, eps**3
            rad = (lo + (hi - lo) * rng.random()) ** (1.0 / 3.0)
            rad = min(rad, 0.999 * eps)
            chords.append(Chord(tuple(x0), tuple(x0 + rad * d)))
    return chords


def ellipsoid_contains(x: np.ndarray, x0: np.ndarray, t: float, xi: np.ndarray) -> np.ndarray | bool:
    """True iff ``|x - xi| + |x0 - xi| < t``."""
    if t <= 0:
        raise PreconditionViolated("t must be positive")
    xi = np.asarray(xi, dtype=float)
    s = np.linalg.norm(np.asarray(x) - xi, axis=-1) + np.linalg.norm(np.asarray(x0) - xi, axis=-1)
    out = s < t
    return bool(out) if np.ndim(out) == 0 else out


def in_plane_chord(scene: SceneConfig, z: float, theta: float, s: float) -> Chord:
    """Chord of ``S`` in the plane ``x3 = z`` with normal angle ``theta``
    and signed offset ``s``.

    The line is ``{s n + tau d}`` with ``n = (cos theta, sin theta)`` and
    ``d = (-sin theta, cos theta)``; both endpoints lie on ``S``.
    """
    rho2 = scene.g1_radius**2 - z**2
    if rho2 <= s**2:
        raise PreconditionViolated("line does not cut the sphere in this plane")
    half = np.sqrt(rho2 - s**2)
    n = np.array([np.cos(theta), np.sin(theta)])
    d = np.array([-np.sin(theta), np.cos(theta)])
    a = s * n - half * d
    b = s * n + half * d
    return Chord((a[0], a[1], z), (b[0], b[1], z))


def chord_integral(q_grid: PotentialGrid, chord: Chord, n_quad: int = 201, exact: bool = False) -> float:
    """Trapezoid rule for the line integral of ``q`` along the chord.

    By default ``q`` is trilinearly interpolated from the grid values; with
    ``exact=True`` the closed form is used when the grid carries one.
    """
    if n_quad < 2:
        raise PreconditionViolated("n_quad must be at least 2")
    s = np.linspace(0.0, 1.0, n_quad)
    vals = q_grid.evaluate(chord.points(s), exact=exact)
    return float(trapezoid(vals, s) * chord.length)


# ------------------------------------------------------------------ source


@dataclass(frozen=True, eq=False)
class SourceGrid:
    """Mollified point source ``g = C chi G_sigma(. - x0)`` on a grid."""

    values: np.ndarray
    chi: np.ndarray
    sigma: float
    center: tuple[float, float, float]
    normalization: float
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    scene: SceneConfig

    def __post_init__(self) -> None:
        for name in ("values", "chi"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Closed-form ``g`` at arbitrary points."""
        p = np.asarray(points, dtype=float)
        c = np.asarray(self.center)
        r2 = np.sum((p - c) ** 2, axis=-1)
        gauss = (2.0 * np.sqrt(np.pi * self.sigma)) ** -3 * np.exp(-r2 / (4.0 * self.sigma))
        return self.normalization * cutoff(p, self.scene) * gauss

    def grid_integral(self) -> float:
        return float(self.values.sum() * np.prod(self.spacing))

    def scaled(self, alpha: float) -> "SourceGrid":
        return SourceGrid(
            alpha * self.values, self.chi, self.sigma, self.center, alpha * self.normalization,
            self.spacing, self.origin, self.scene,
        )


def mollified_source(scene: SceneConfig, x0: Sequence[float], sigma: float, n: int = 48) -> SourceGrid:
    """Normalised smooth approximation of a point source at ``x0``.

    The constant ``C`` makes the grid integral over ``G`` equal to one.

    Raises
    ------
    QuadratureFailure
        If the unnormalised grid integral underflows.
    """
    if sigma <= 0:
        raise PreconditionViolated("sigma must be positive")
    x0 = np.asarray(x0, dtype=float)
    if abs(np.linalg.norm(x0) - scene.g1_radius) > 1e-9 * scene.g1_radius:
        raise PreconditionViolated("source centre must lie on S")
    spacing, origin = grid_layout(scene, n)
    nodes = _grid_nodes((n, n, n), spacing, origin)
    chi = cutoff(nodes, scene)
    r2 = np.sum((nodes - x0) ** 2, axis=-1)
    gauss = (2.0 * np.sqrt(np.pi * sigma)) ** -3 * np.exp(-r2 / (4.0 * sigma))
    raw = chi * gauss
    mass = raw.sum() * np.prod(spacing)
    if not np.isfinite(mass) or mass < 1e-300:
        raise QuadratureFailure("source normalisation integral underflowed")
    c = 1.0 / mass
    return SourceGrid(c * raw, chi, float(sigma), tuple(x0), float(c), tuple(spacing), tuple(origin), scene)
