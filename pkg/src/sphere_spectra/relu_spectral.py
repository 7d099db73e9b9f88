"""Spherical-harmonic representation of a single bias-free ReLU neuron.

For a unit direction ``w`` the cap function ``x -> max(0, w.x)`` is
axisymmetric about ``w``. In the frame where ``w`` is the north pole it
expands as ``sum_l c_l Y_l^0`` with

    c_l = 2 pi sqrt((2l+1)/(4 pi)) * int_0^1 t P_l(t) dt.

In global coordinates the rotation taking the north pole to ``w`` mixes
orders within each degree, so the coefficient of ``Y_l^j`` becomes
``c_l D^l_{j0}(R_w)`` where ``D^l_{j0}(R_w) = sqrt(4 pi/(2l+1)) conj(Y_l^j(w))``.
The conjugate follows from the addition theorem and is checked against the
rotation identity in the test-suite.

Exact values of the t-integral: ``1/2`` for l = 0, ``1/3`` for l = 1, zero
for odd l >= 3 and alternating in sign for even l >= 2, with magnitude
decaying like ``l^-2``. Two other routes are kept alongside:
:func:`relu_coefficient_quadrature` (independent Gauss-Legendre oracle) and
:func:`relu_coefficient_closed_form` (the ``sqrt(pi)/24 (1/2)^l sqrt(2l+1)
(l^2+3l+2)`` expression, which agrees with the integral only for l = 1, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .geometry import as_direction, from_cartesian
from .harmonics import (
    FOUR_PI,
    HarmonicSpectrum,
    SphereGrid,
    flat_index,
    lm_index,
    sph_harm_dtau_table,
    sph_harm_table,
)

# sin(tau_w) below this is treated as polar for gradients
POLAR_SIN_EPS = 1e-8


def _legendre_at_zero(n: int) -> Fraction:
    if n % 2:
        return Fraction(0)
    k = n // 2
    return Fraction((-1) ** k * math.comb(n, k), 2**n)


def _legendre_integral_01(k: int) -> Fraction:
    """Exact ``int_0^1 P_k(t) dt``."""
    if k == 0:
        return Fraction(1)
    return (_legendre_at_zero(k - 1) - _legendre_at_zero(k + 1)) / (2 * k + 1)


@lru_cache(maxsize=None)
def cap_moment(ell: int) -> Fraction:
    """Exact rational ``int_0^1 t P_ell(t) dt`` via ``(2l+1) t P_l = (l+1) P_{l+1} + l P_{l-1}``."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if ell == 0:
        return Fraction(1, 2)
    return (
        (ell + 1) * _legendre_integral_01(ell + 1) + ell * _legendre_integral_01(ell - 1)
    ) / (2 * ell + 1)


def relu_coefficient(ell: int) -> float:
    """Exact cap coefficient ``c_ell`` of ``max(0, cos tau)``."""
    return math.sqrt(math.pi * (2 * ell + 1)) * float(cap_moment(ell))


def relu_coefficients(ell_max: int) -> np.ndarray:
    return np.array([relu_coefficient(l) for l in range(ell_max + 1)])


def relu_coefficient_closed_form(ell: int) -> float:
    """The published closed-form expression for ``c_ell`` (reference only).

    Returns pi/2 at l = 0, sqrt(3 pi)/3 at l = 1 and
    ``sqrt(pi)/24 (1/2)^l sqrt(2l+1) (l^2+3l+2)`` for l >= 2. Only the l = 1
    and l = 2 values match the defining integral; see :func:`relu_coefficient`.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if ell == 0:
        return math.pi / 2
    if ell == 1:
        return math.sqrt(3 * math.pi) / 3
    return math.sqrt(math.pi) / 24 * 0.5**ell * math.sqrt(2 * ell + 1) * (ell * ell + 3 * ell + 2)


def relu_coefficient_quadrature(ell: int, grid: SphereGrid) -> float:
    """Oracle for ``c_ell``: quadrature of ``max(0, z) Y_ell^0`` on ``grid``.

    Needs an equator-split grid (see :func:`build_grid`) with
    ``exactness_degree >= 2 ell + 2``.
    """
    if not grid.split_equator or grid.exactness_degree < 2 * ell + 2:
        raise ValueError(
            f"grid cannot integrate the degree-{ell} cap moment exactly "
            f"(exactness {grid.exactness_degree}, split={grid.split_equator})"
        )
    if not np.allclose(grid.frame, np.eye(3)):
        raise ValueError("grid must be in the global frame")
    z = np.cos(grid.tau)
    y0 = np.sqrt((2 * ell + 1) / FOUR_PI) * np.polynomial.legendre.legval(
        z, np.eye(ell + 1)[ell]
    )
    return float(np.sum(grid.weights * np.maximum(z, 0.0) * y0))


# ---------------------------------------------------------------------------
# Rotation mixing
# ---------------------------------------------------------------------------


def wigner_d_j0_table(ell_max: int, w) -> np.ndarray:
    """``D^l_{j0}(R_w)`` for all (l, j), flat layout; leading dims follow ``w``."""
    w = as_direction(w, tol=1e-9)
    tau, phi = from_cartesian(w)
    Y = sph_harm_table(ell_max, tau, phi)
    ells, _ = lm_index(ell_max)
    return np.sqrt(FOUR_PI / (2 * ells + 1)) * np.conj(Y)


def wigner_d_j0(ell: int, j: int, w) -> complex:
    """Single rotation-mixing element ``D^ell_{j0}(R_w)``."""
    if abs(j) > ell:
        raise ValueError(f"|j|={abs(j)} exceeds ell={ell}")
    return complex(wigner_d_j0_table(ell, w)[..., flat_index(ell, j)])


def _expand_degree(values_per_ell: np.ndarray, ell_max: int) -> np.ndarray:
    ells, _ = lm_index(ell_max)
    return values_per_ell[ells]


@dataclass
class NeuronSpectrum:
    """Global harmonic spectrum of ``max(0, w.x)``."""

    spectrum: HarmonicSpectrum
    direction: np.ndarray = field(repr=False)

    def check(self, tol: float = 1e-10) -> float:
        """Max deviation from ``c_l D^l_{j0}(R_w)`` recomputed from scratch."""
        L = self.spectrum.ell_max
        expected = _expand_degree(relu_coefficients(L), L) * wigner_d_j0_table(L, self.direction)
        err = float(np.max(np.abs(expected - self.spectrum.coeffs)))
        if err > tol:
            raise AssertionError(f"neuron spectrum inconsistent (max err {err:.3g})")
        return err


def neuron_spectrum_table(W, ell_max: int) -> np.ndarray:
    """Spectra of many neurons at once: shape ``(m, K)`` for ``W`` of shape (m, 3)."""
    W = np.atleast_2d(W)
    c = _expand_degree(relu_coefficients(ell_max), ell_max)
    return c * wigner_d_j0_table(ell_max, W)


def neuron_spectrum(w, ell_max: int) -> NeuronSpectrum:
    w = as_direction(w, tol=1e-9)
    coeffs = neuron_spectrum_table(w[None, :], ell_max)[0]
    return NeuronSpectrum(HarmonicSpectrum(ell_max, coeffs), w.copy())


def neuron_spectrum_grad_table(W, ell_max: int) -> np.ndarray:
    """Gradient of ``c_l D^l_{j0}(R_{w/|w|})`` with respect to the components of ``w``.

    Returns complex array of shape ``(m, K, 3)``. Uses the chain rule
    through the polar angles of ``w``:

        d tau / d w = (z x, z y, -(r^2 - z^2)) / (r^3 sin tau)
        d phi / d w = (-sin phi, cos phi, 0) / (r sin tau)

    with ``r = |w|``; at ``r = 1`` the first reduces to
    ``(cos tau cos phi, cos tau sin phi, -sin tau)``. Because of the
    conjugate in ``D_{j0}``, the azimuthal term enters as ``-i j conj(Y)``.
    Raises ``ValueError`` for directions within 1e-8 of a pole.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    r = np.linalg.norm(W, axis=-1)
    U = W / r[:, None]
    tau, phi = from_cartesian(U)
    sin_t = np.sin(tau)
    if np.any(sin_t <= POLAR_SIN_EPS):
        raise ValueError("gradient of the rotated spectrum is singular at the poles")
    x, y, z = W[:, 0], W[:, 1], W[:, 2]
    r3s = r**3 * sin_t
    dtau_dw = np.stack([z * x / r3s, z * y / r3s, -(r * r - z * z) / r3s], axis=-1)
    dphi_dw = np.stack(
        [-np.sin(phi) / (r * sin_t), np.cos(phi) / (r * sin_t), np.zeros_like(phi)], axis=-1
    )
    ells, js = lm_index(ell_max)
    scale = _expand_degree(relu_coefficients(ell_max), ell_max) * np.sqrt(FOUR_PI / (2 * ells + 1))
    Y = np.conj(sph_harm_table(ell_max, tau, phi))
    dY = np.conj(sph_harm_dtau_table(ell_max, tau, phi))
    out = dY[:, :, None] * dtau_dw[:, None, :] - 1j * (js * Y)[:, :, None] * dphi_dw[:, None, :]
    return scale[None, :, None] * out


def neuron_spectrum_grad(w, ell: int, j: int) -> np.ndarray:
    """Complex 3-vector ``grad_w (c_ell D^ell_{j0}(R_w))``."""
    if abs(j) > ell:
        raise ValueError(f"|j|={abs(j)} exceeds ell={ell}")
    return neuron_spectrum_grad_table(np.asarray(w, dtype=float)[None, :], ell)[0, flat_index(ell, j)]


def network_spectrum(a, W, ell_max: int) -> HarmonicSpectrum:
    """Exact spectrum of ``sum_i a_i max(0, w_i.x)``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return HarmonicSpectrum.zeros(ell_max)
    return HarmonicSpectrum(ell_max, a @ neuron_spectrum_table(W, ell_max))


__all__ = [
    "NeuronSpectrum",
    "cap_moment",
    "network_spectrum",
    "neuron_spectrum",
    "neuron_spectrum_grad",
    "neuron_spectrum_grad_table",
    "neuron_spectrum_table",
    "relu_coefficient",
    "relu_coefficient_closed_form",
    "relu_coefficient_quadrature",
    "relu_coefficients",
    "wigner_d_j0",
    "wigner_d_j0_table",
]
