"""Points, directions and rotations on the unit sphere S^2.

Angles follow the physics convention: ``tau`` is the polar angle measured
from the north pole (0, 0, 1) and ``phi`` the azimuth in [0, 2*pi).
All functions are vectorised over leading array dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
NORTH = np.array([0.0, 0.0, 1.0])

# w_x^2 + w_y^2 below this is treated as a pole
POLE_EPS = 1e-24


@dataclass(frozen=True)
class SpherePoint:
    """A single point (tau, phi) on the sphere."""

    tau: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.tau <= np.pi):
            raise ValueError(f"tau={self.tau} outside [0, pi]")
        if not (0.0 <= self.phi < TWO_PI):
            raise ValueError(f"phi={self.phi} outside [0, 2*pi)")

    @property
    def xyz(self) -> np.ndarray:
        return to_cartesian(self.tau, self.phi)

    @classmethod
    def from_xyz(cls, v) -> "SpherePoint":
        tau, phi = from_cartesian(v)
        return cls(float(tau), float(phi))


def to_cartesian(tau, phi) -> np.ndarray:
    """Map polar angles to unit vectors; output has shape ``tau.shape + (3,)``."""
    tau = np.asarray(tau, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(tau)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(tau)], axis=-1)


def from_cartesian(v, tol: float = 1e-9):
    """Inverse of :func:`to_cartesian` for unit vectors.

    Returns ``(tau, phi)`` with phi wrapped into [0, 2*pi). At the poles phi
    is set to 0. Raises ``ValueError`` if any input is not unit length
    within ``tol``.
    """
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("from_cartesian expects unit vectors")
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    tau = np.arctan2(np.hypot(x, y), z)
    pole = x * x + y * y < POLE_EPS
    phi = np.where(pole, 0.0, np.mod(np.arctan2(y, x), TWO_PI))
    # mod can return exactly 2*pi for tiny negative angles
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return tau, phi


def as_direction(w, tol: float = 1e-12) -> np.ndarray:
    """Validate and return ``w`` as a float array of unit 3-vectors."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != 3:
        raise ValueError(f"direction must have 3 components, got shape {w.shape}")
    if np.any(np.abs(np.linalg.norm(w, axis=-1) - 1.0) > tol):
        raise ValueError("direction is not unit length")
    return w


def sample_uniform(n: int, seed: int, method: str = "random"):
    """Area-uniform points on the sphere.

    ``method="random"`` draws i.i.d. points with cos(tau) ~ U[-1, 1] and
    phi ~ U[0, 2*pi) from ``numpy.random.default_rng(seed)``.
    ``method="fibonacci"`` returns the deterministic golden-angle lattice
    (the seed is ignored).

    Returns ``(tau, phi)`` arrays of length ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "random":
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1.0, 1.0, n)
        phi = rng.uniform(0.0, TWO_PI, n)
    elif method == "fibonacci":
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        golden = np.pi * (3.0 - np.sqrt(5.0))
        phi = np.mod(golden * np.arange(n), TWO_PI)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return np.arccos(z), phi


def random_directions(n: int, seed) -> np.ndarray:
    """``n`` area-uniform unit vectors, shape (n, 3)."""
    tau, phi = sample_uniform(n, seed)
    return to_cartesian(tau, phi)


def _skew(k: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -k[2], k[1]],
            [k[2], 0.0, -k[0]],
            [-k[1], k[0], 0.0],
        ]
    )


def rotation_to(w) -> np.ndarray:
    """Rodrigues rotation taking the north pole to the unit vector ``w``.

    The axis is ``(-w_y, w_x, 0)`` normalised and the angle ``arccos(w_z)``
    (evaluated as ``atan2(|w_xy|, w_z)``).
    At the south pole the axis is fixed to (1, 0, 0); at the north pole the
    identity is returned.
    """
    w = as_direction(w, tol=1e-9)
    rho2 = w[0] ** 2 + w[1] ** 2
    if rho2 < POLE_EPS:
        if w[2] > 0:
            return np.eye(3)
        k = np.array([1.0, 0.0, 0.0])
        theta = np.pi
    else:
        rho = np.sqrt(rho2)
        k = np.array([-w[1], w[0], 0.0]) / rho
        # atan2 keeps the angle accurate near the poles where arccos(w_z) loses it
        theta = np.arctan2(rho, w[2])
    K = _skew(k)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)
