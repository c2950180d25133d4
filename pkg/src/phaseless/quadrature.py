"""Small quadrature helpers shared by the forward solvers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def orthonormal_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(e, e1, e2)``, a right-handed frame with ``e`` along ``axis``."""
    e = np.asarray(axis, dtype=float)
    e = e / np.linalg.norm(e)
    helper = np.array([1.0, 0.0, 0.0]) if abs(e[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(e, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e, e1)
    return e, e1, e2


def sphere_rule(
    n_theta: int,
    n_phi: int,
    axis: np.ndarray | None = None,
    theta_split: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit sphere.

    Gauss-Legendre in the polar angle (with the ``sin`` Jacobian folded into
    the weights) times the trapezoid rule in azimuth. The pole is aligned with
    ``axis``. When ``theta_split`` is given the polar range is split into two
    Gauss panels ``[0, theta_split]`` and ``[theta_split, pi]``, which
    resolves integrands concentrated in a cap around the pole.

    Returns
    -------
    directions : (M, 3) array of unit vectors
    weights : (M,) array summing to ``4*pi``
    """
    e, e1, e2 = orthonormal_frame(np.array([0.0, 0.0, 1.0]) if axis is None else axis)
    if theta_split is None or not (0.0 < theta_split < np.pi):
        th, wt = gauss_legendre(n_theta, 0.0, np.pi)
    else:
        n1 = max(2, n_theta // 2)
        a, wa = gauss_legendre(n1, 0.0, theta_split)
        b, wb = gauss_legendre(max(2, n_theta - n1), theta_split, np.pi)
        th, wt = np.concatenate([a, b]), np.concatenate([wa, wb])
    wt = wt * np.sin(th)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st, ct = np.sin(th)[:, None], np.cos(th)[:, None]
    dirs = (
        ct[..., None] * e
        + (st * np.cos(phi)[None, :])[..., None] * e1
        + (st * np.sin(phi)[None, :])[..., None] * e2
    )
    w = (wt[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :])
    return dirs.reshape(-1, 3), w.reshape(-1)
