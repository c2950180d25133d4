"""Chords of ``S`` as Radon data and slice-wise filtered back-projection.

Every plane ``x3 = z`` that cuts ``G1`` meets ``S`` in a circle, and the
chords of that circle are all lines of the plane that meet ``G1``. Since
``q`` vanishes outside ``G1``, the chord integrals form the full 2-d Radon
transform of the slice, which the filtered back-projection inverts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import InsufficientCoverage, PreconditionViolated
from .geometry import Chord, PotentialGrid, SceneConfig, in_plane_chord


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Line integrals of one slice, ``values[i, j] = ∫ q`` on the line
    ``{s_j n(θ_i) + τ d(θ_i)}`` of the plane ``x3 = z``.

    Angles cover ``[0, π)``; the offset grid is uniform and symmetric.
    ``evenness`` is the largest gap between ``p(θ, s)`` and ``p(θ + π, -s)``
    seen while binning, i.e. between chords of one bin traversed in opposite
    directions (0 when no bin saw both).
    """

    z: float
    theta: np.ndarray
    s: np.ndarray
    values: np.ndarray
    g1_radius: float
    evenness: float = 0.0

    def __post_init__(self) -> None:
        th = np.array(self.theta, dtype=float)
        s = np.array(self.s, dtype=float)
        v = np.array(self.values, dtype=float)
        for a in (th, s, v):
            a.flags.writeable = False
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)
        if v.shape != (len(th), len(s)):
            raise PreconditionViolated("values must have shape (n_angles, n_offsets)")
        if len(s) < 2 or not np.allclose(np.diff(s), s[1] - s[0], rtol=1e-8):
            raise PreconditionViolated("offset grid must be uniform")

    @property
    def plane(self) -> tuple[float, float, float, float]:
        """Normal and offset of the plane, ``(0, 0, 1, z)``."""
        return (0.0, 0.0, 1.0, float(self.z))

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def slice_radius(self) -> float:
        """Radius of the circle ``S ∩ {x3 = z}``."""
        return float(np.sqrt(max(self.g1_radius**2 - self.z**2, 0.0)))

    def mass(self) -> np.ndarray:
        """``∫ p(θ, s) ds`` per angle (trapezoid)."""
        return trapezoid(self.values, self.s, axis=1)

    def chords(self, scene: SceneConfig) -> list[tuple[int, int, Chord]]:
        """All grid lines that cut ``S``, as ``(i, j, chord)``."""
        out = []
        rho = self.slice_radius
        for i, th in enumerate(self.theta):
            for j, s in enumerate(self.s):
                if abs(s) < rho * (1 - 1e-12):
                    out.append((i, j, in_plane_chord(scene, self.z, th, s)))
        return out


def default_angles(n_angles: int) -> np.ndarray:
    return np.arange(n_angles) * np.pi / n_angles


def default_offsets(scene: SceneConfig, n_offsets: int) -> np.ndarray:
    """Cell-centred offsets covering ``(-R1, R1)``."""
    ds = 2.0 * scene.g1_radius / n_offsets
    return -scene.g1_radius + (np.arange(n_offsets) + 0.5) * ds


def chord_parameters(chord: Chord) -> tuple[float, float, float]:
    """``(z, θ, s)`` of an in-plane chord with ``θ`` folded into ``[0, π)``."""
    z, theta, s, _ = _oriented_parameters(chord)
    return z, theta, s


def _oriented_parameters(chord: Chord) -> tuple[float, float, float, bool]:
    x0, x = chord.x0, chord.x
    if abs(x0[2] - x[2]) > 1e-9 * max(1.0, chord.length):
        raise PreconditionViolated("chord is not parallel to the slicing planes")
    d = (x - x0) / chord.length
    theta = float(np.arctan2(-d[0], d[1]))
    mid = 0.5 * (x0 + x)
    s = float(mid[0] * np.cos(theta) + mid[1] * np.sin(theta))
    flipped = False
    if theta < 0:
        theta += np.pi
        s, flipped = -s, True
    if theta >= np.pi:
        theta -= np.pi
        s, flipped = -s, not flipped
    return float(x0[2]), theta, s, flipped


def chords_to_sinogram(
    scene: SceneConfig,
    line_integrals: Sequence[tuple[Chord, float]],
    plane: float,
    theta: np.ndarray | None = None,
    s: np.ndarray | None = None,
    n_angles: int = 90,
    n_offsets: int = 64,
) -> Sinogram:
    """Bin in-plane chord integrals onto a ``(θ, s)`` grid.

    Each chord goes to its nearest angle and offset bin; bins hit more than
    once are averaged. Empty offset bins are filled by linear interpolation in
    ``s`` between the filled ones, with zeros pinned at the edge ``|s| = ρ``
    of the slice circle and beyond it.

    Raises
    ------
    InsufficientCoverage
        If some angle bin receives no chord.
    """
    theta = default_angles(n_angles) if theta is None else np.asarray(theta, dtype=float)
    s = default_offsets(scene, n_offsets) if s is None else np.asarray(s, dtype=float)
    z = float(plane)
    rho = float(np.sqrt(max(scene.g1_radius**2 - z**2, 0.0)))
    dth = np.pi / len(theta)
    ds = s[1] - s[0]
    acc = np.zeros((2, len(theta), len(s)))
    cnt = np.zeros((2, len(theta), len(s)), dtype=int)
    for chord, value in line_integrals:
        zc, th, off, flipped = _oriented_parameters(chord)
        if abs(zc - z) > 1e-9 * max(1.0, scene.g1_radius):
            raise PreconditionViolated(f"chord lies in plane {zc}, not {z}")
        # angular distance on the half-turn, with the flip s -> -s across π
        dist = np.abs(theta - th)
        wrap = np.pi - dist
        i = int(np.argmin(np.minimum(dist, wrap)))
        if wrap[i] < dist[i]:
            off = -off
            flipped = not flipped
        if min(dist[i], wrap[i]) > 0.5 * dth + 1e-12:
            continue
        j = int(np.argmin(np.abs(s - off)))
        if abs(s[j] - off) > 0.5 * abs(ds) + 1e-12:
            continue
        acc[int(flipped), i, j] += value
        cnt[int(flipped), i, j] += 1
    both = (cnt[0] > 0) & (cnt[1] > 0)
    evenness = 0.0
    if both.any():
        gap = acc[0][both] / cnt[0][both] - acc[1][both] / cnt[1][both]
        evenness = float(np.abs(gap).max())
    acc = acc.sum(axis=0)
    cnt = cnt.sum(axis=0)
    empty = np.nonzero(cnt.sum(axis=1) == 0)[0]
    if len(empty):
        raise InsufficientCoverage(f"{len(empty)} of {len(theta)} angle bins hold no chord")
    values = np.zeros_like(acc)
    inside = np.abs(s) < rho
    for i in range(len(theta)):
        hit = cnt[i] > 0
        xs = np.concatenate([[-rho], s[hit], [rho]])
        ys = np.concatenate([[0.0], acc[i, hit] / cnt[i, hit], [0.0]])
        order = np.argsort(xs)
        values[i] = np.where(inside, np.interp(s, xs[order], ys[order]), 0.0)
        values[i, hit] = acc[i, hit] / cnt[i, hit]
    return Sinogram(z, theta, s, values, scene.g1_radius, evenness)


# ------------------------------------------------------------------ FBP


def ramp_filter_response(n_pad: int, ds: float, cutoff: float = 0.9) -> np.ndarray:
    """Frequency response of the band-limited ramp.

    The passband is flat up to ``cutoff`` times Nyquist, then rolls off with a
    raised cosine to zero at Nyquist.

    The ramp comes from the FFT of the sampled spatial ramp kernel
    ``h[0] = 1/(4 ds²)``, ``h[n odd] = -1/(π n ds)²``, which avoids the DC
    bias of sampling ``|ω|`` directly.
    """
    n = np.arange(-(n_pad // 2), n_pad - n_pad // 2)
    h = np.zeros(n_pad)
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd] * ds) ** 2
    h[n == 0] = 1.0 / (4.0 * ds**2)
    response = np.real(np.fft.fft(np.fft.ifftshift(h))) * ds
    f = np.abs(np.fft.fftfreq(n_pad))  # cycles per sample, Nyquist at 0.5
    fc = cutoff * 0.5
    roll = 0.5 * (1.0 + np.cos(np.pi * (f - fc) / max(0.5 - fc, 1e-12)))
    window = np.where(f <= fc, 1.0, np.where(f < 0.5, roll, 0.0))
    return response * window


def filter_projections(sinogram: Sinogram, cutoff: float = 0.9) -> np.ndarray:
    n_s = len(sinogram.s)
    n_pad = int(2 ** np.ceil(np.log2(2 * n_s)))
    H = ramp_filter_response(n_pad, sinogram.ds, cutoff)
    P = np.fft.fft(sinogram.values, n=n_pad, axis=1)
    return np.real(np.fft.ifft(P * H, axis=1))[:, :n_s]


def fbp_invert(
    sinogram: Sinogram, out_grid: tuple[np.ndarray, np.ndarray], cutoff: float = 0.9
) -> np.ndarray:
    """Filtered back-projection onto the in-plane grid ``(x_axis, y_axis)``.

    Returns an array of shape ``(len(x_axis), len(y_axis))``, zero outside
    the slice circle of ``G1``. Warns when ``n_angles < π/2 · n_offsets``.
    """
    n_a, n_s = sinogram.values.shape
    if n_a < 0.5 * np.pi * n_s:
        warnings.warn(
            f"angular undersampling: {n_a} angles for {n_s} offsets (want >= {int(np.ceil(0.5 * np.pi * n_s))})",
            stacklevel=2,
        )
    xa, ya = (np.asarray(a, dtype=float) for a in out_grid)
    X, Y = np.meshgrid(xa, ya, indexing="ij")
    filtered = filter_projections(sinogram, cutoff)
    s0, ds = sinogram.s[0], sinogram.ds
    out = np.zeros(X.shape)
    for th, row in zip(sinogram.theta, filtered):
        u = (X * np.cos(th) + Y * np.sin(th) - s0) / ds
        j = np.floor(u).astype(int)
        w = u - j
        ok = (j >= 0) & (j < n_s - 1)
        jc = np.clip(j, 0, n_s - 2)
        out += np.where(ok, (1 - w) * row[jc] + w * row[jc + 1], 0.0)
    out *= np.pi / n_a
    out[X**2 + Y**2 >= sinogram.slice_radius**2] = 0.0
    return out


def forward_sinogram(
    q_grid: PotentialGrid, scene: SceneConfig, z: float, n_angles: int, n_offsets: int, n_quad: int = 201
) -> Sinogram:
    """Sinogram of ``q`` in plane ``z`` from chord quadrature (no binning)."""
    from .geometry import chord_integral

    theta = default_angles(n_angles)
    s = default_offsets(scene, n_offsets)
    values = np.zeros((n_angles, n_offsets))
    sino = Sinogram(z, theta, s, values, scene.g1_radius)
    for i, j, chord in sino.chords(scene):
        values[i, j] = chord_integral(q_grid, chord, n_quad)
    return Sinogram(z, theta, s, values, scene.g1_radius)


# ---------------------------------------------------------------- volume


def assemble_volume(
    slices: Sequence[tuple[float, np.ndarray]],
    known: PotentialGrid,
    scene: SceneConfig,
    diagnostics: dict | None = None,
) -> PotentialGrid:
    """Stack reconstructed slices into ``known``'s grid.

    ``slices`` are ``(z, values)`` with values on ``known``'s ``(x, y)``
    nodes. Each grid level inside ``Ω`` takes the nearest slice; everything
    outside ``Ω`` keeps the known values bit for bit. Negative ringing inside
    ``Ω`` is clipped to zero since ``q >= 0``; the clipped amount is reported
    in ``diagnostics`` as ``clipped_negative_sup``.
    """
    if not slices:
        raise PreconditionViolated("no slices to assemble")
    zs = np.array([z for z, _ in slices], dtype=float)
    stack = np.stack([np.asarray(v, dtype=float) for _, v in slices])
    if stack.shape[1:] != known.shape[:2]:
        raise PreconditionViolated(f"slice shape {stack.shape[1:]} does not match grid {known.shape[:2]}")
    ax, ay, az = known.axes()
    values = np.array(known.values, dtype=float)
    X, Y = np.meshgrid(ax, ay, indexing="ij")
    clipped = 0.0
    for kz, z in enumerate(az):
        inside = X**2 + Y**2 + z**2 < scene.omega_radius**2
        if not inside.any():
            continue
        layer = stack[int(np.argmin(np.abs(zs - z)))]
        clipped = max(clipped, float(-np.min(np.where(inside, layer, 0.0))))
        values[:, :, kz] = np.where(inside, np.maximum(layer, 0.0), values[:, :, kz])
    if diagnostics is not None:
        diagnostics["clipped_negative_sup"] = clipped
    return known.with_values(values)
