"""Associated Legendre functions, complex spherical harmonics and quadrature.

Conventions
-----------
* ``P_l^j`` carries the Condon-Shortley phase ``(-1)^j``.
* ``Y_l^j(tau, phi) = N_l^j P_l^j(cos tau) exp(i j phi)`` with
  ``N_l^j = sqrt((2l+1)/(4 pi) (l-j)!/(l+j)!)``; negative orders use
  ``Y_l^{-j} = (-1)^j conj(Y_l^j)``. The set is orthonormal on S^2.
* Spectra are stored flat, entry ``l*l + l + j`` holding order ``j`` of
  degree ``l`` (see :func:`lm_index`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import TWO_PI, from_cartesian, rotation_to, to_cartesian

FOUR_PI = 4.0 * np.pi


def n_coeffs(ell_max: int) -> int:
    return (ell_max + 1) ** 2


def flat_index(ell: int, j: int) -> int:
    if abs(j) > ell:
        raise ValueError(f"|j|={abs(j)} exceeds ell={ell}")
    return ell * ell + ell + j


def lm_index(ell_max: int):
    """Degree and order arrays matching the flat spectrum layout."""
    ells = np.concatenate([np.full(2 * l + 1, l) for l in range(ell_max + 1)])
    js = np.concatenate([np.arange(-l, l + 1) for l in range(ell_max + 1)])
    return ells, js


def fmt(x: float) -> str:
    """Decimal text with 17 significant digits (round-trips a float64)."""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# Legendre functions
# ---------------------------------------------------------------------------


def assoc_legendre(ell: int, j: int, x):
    """Unnormalised ``P_ell^j(x)`` for ``0 <= j <= ell`` by upward recurrence in ell."""
    if j < 0 or j > ell:
        raise ValueError(f"order j={j} must satisfy 0 <= j <= ell={ell}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("|x| must be <= 1")
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.ones_like(x)
    for m in range(1, j + 1):
        pmm = -(2 * m - 1) * s * pmm
    if ell == j:
        return pmm
    p_prev, p = pmm, (2 * j + 1) * x * pmm
    for l in range(j + 2, ell + 1):
        p_prev, p = p, ((2 * l - 1) * x * p - (l + j - 1) * p_prev) / (l - j)
    return p


def assoc_legendre_dtau(ell: int, j: int, tau):
    """Derivative of ``P_ell^j(cos tau)`` with respect to ``tau``.

    Uses ``d/dtau P_l^j(cos tau) = [l cos(tau) P_l^j - (l+j) P_{l-1}^j] / sin(tau)``,
    valid strictly inside (0, pi).
    """
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0.0) | (tau >= np.pi)):
        raise ValueError("assoc_legendre_dtau requires 0 < tau < pi")
    x = np.cos(tau)
    p = assoc_legendre(ell, j, x)
    p_lower = assoc_legendre(ell - 1, j, x) if ell - 1 >= j else np.zeros_like(x)
    return (ell * x * p - (ell + j) * p_lower) / np.sin(tau)


def normalized_legendre_table(ell_max: int, x) -> np.ndarray:
    """``N_l^m P_l^m(x)`` for ``0 <= m <= l <= ell_max``.

    Returns shape ``x.shape + (ell_max+1, ell_max+1)`` indexed ``[..., l, m]``
    (zero above the diagonal). The normalised recurrence stays finite for
    large degrees where the unnormalised values overflow.
    """
    x = np.asarray(x, dtype=float)
    L = ell_max
    out = np.zeros(x.shape + (L + 1, L + 1))
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.full(x.shape, 1.0 / np.sqrt(FOUR_PI))
    for m in range(L + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        out[..., m, m] = pmm
        if m + 1 <= L:
            out[..., m + 1, m] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[..., l, m] = a * (x * out[..., l - 1, m] - b * out[..., l - 2, m])
    return out


def normalized_legendre_dtau_table(ell_max: int, tau) -> np.ndarray:
    """tau-derivative of :func:`normalized_legendre_table` at ``x = cos(tau)``.

    Same layout; requires 0 < tau < pi.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0.0) | (tau >= np.pi)):
        raise ValueError("derivative table requires 0 < tau < pi")
    x = np.cos(tau)[..., None, None]
    sin_t = np.sin(tau)[..., None, None]
    P = normalized_legendre_table(ell_max, np.cos(tau))
    l = np.arange(ell_max + 1)[:, None].astype(float)
    m = np.arange(ell_max + 1)[None, :].astype(float)
    # N_l^m / N_{l-1}^m folded into the (l+m) factor
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sqrt((2 * l + 1) * (l - m) * (l + m) / (2 * l - 1))
    ratio = np.where(l > m, ratio, 0.0)
    P_lower = np.zeros_like(P)
    P_lower[..., 1:, :] = P[..., :-1, :]
    return (l * x * P - ratio * P_lower) / sin_t


# ---------------------------------------------------------------------------
# Spherical harmonics
# ---------------------------------------------------------------------------


def _expand_orders(table_lm: np.ndarray, phi, ell_max: int) -> np.ndarray:
    """Turn a ``[..., l, m>=0]`` real table into the flat complex ``Y`` layout."""
    phi = np.asarray(phi, dtype=float)
    K = n_coeffs(ell_max)
    out = np.zeros(phi.shape + (K,), dtype=complex)
    m = np.arange(ell_max + 1)
    phase = np.exp(1j * phi[..., None] * m)  # [..., m]
    sign = (-1.0) ** m
    for l in range(ell_max + 1):
        base = l * l + l
        pos = table_lm[..., l, : l + 1] * phase[..., : l + 1]
        out[..., base : base + l + 1] = pos
        if l > 0:
            neg = sign[1 : l + 1] * np.conj(pos[..., 1:])
            out[..., base - l : base] = neg[..., ::-1]
    return out


def sph_harm_table(ell_max: int, tau, phi) -> np.ndarray:
    """All ``Y_l^j(tau, phi)`` with ``l <= ell_max``; shape ``tau.shape + (K,)``."""
    tau = np.asarray(tau, dtype=float)
    P = normalized_legendre_table(ell_max, np.cos(tau))
    return _expand_orders(P, np.broadcast_to(phi, tau.shape), ell_max)


def sph_harm_dtau_table(ell_max: int, tau, phi) -> np.ndarray:
    """All ``dY_l^j/dtau``; same layout as :func:`sph_harm_table`."""
    tau = np.asarray(tau, dtype=float)
    dP = normalized_legendre_dtau_table(ell_max, tau)
    return _expand_orders(dP, np.broadcast_to(phi, tau.shape), ell_max)


def sph_harm(ell: int, j: int, tau, phi):
    """Orthonormal complex harmonic ``Y_ell^j`` at (tau, phi)."""
    if abs(j) > ell:
        raise ValueError(f"|j|={abs(j)} exceeds ell={ell}")
    tau = np.asarray(tau, dtype=float)
    phi = np.asarray(phi, dtype=float)
    table = sph_harm_table(ell, tau, phi)
    return table[..., flat_index(ell, j)]


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


@dataclass
class HarmonicSpectrum:
    """Complex coefficients ``h_{lj}`` for ``l <= ell_max`` in the flat layout."""

    ell_max: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (n_coeffs(self.ell_max),):
            raise ValueError(
                f"expected {n_coeffs(self.ell_max)} coefficients, got {self.coeffs.shape}"
            )

    @classmethod
    def zeros(cls, ell_max: int) -> "HarmonicSpectrum":
        return cls(ell_max, np.zeros(n_coeffs(ell_max), dtype=complex))

    def __getitem__(self, key) -> complex:
        ell, j = key
        return self.coeffs[flat_index(ell, j)]

    def __setitem__(self, key, value):
        ell, j = key
        self.coeffs[flat_index(ell, j)] = value

    def __sub__(self, other: "HarmonicSpectrum") -> "HarmonicSpectrum":
        if other.ell_max != self.ell_max:
            raise ValueError("spectra have different ell_max")
        return HarmonicSpectrum(self.ell_max, self.coeffs - other.coeffs)

    def __add__(self, other: "HarmonicSpectrum") -> "HarmonicSpectrum":
        if other.ell_max != self.ell_max:
            raise ValueError("spectra have different ell_max")
        return HarmonicSpectrum(self.ell_max, self.coeffs + other.coeffs)

    def __neg__(self) -> "HarmonicSpectrum":
        return HarmonicSpectrum(self.ell_max, -self.coeffs)

    def __mul__(self, scalar) -> "HarmonicSpectrum":
        return HarmonicSpectrum(self.ell_max, self.coeffs * scalar)

    __rmul__ = __mul__

    def truncate(self, ell_max: int) -> "HarmonicSpectrum":
        if ell_max > self.ell_max:
            raise ValueError("cannot truncate to a larger ell_max")
        return HarmonicSpectrum(ell_max, self.coeffs[: n_coeffs(ell_max)].copy())

    def conjugate_symmetry_error(self) -> float:
        """max |h_{l,-j} - (-1)^j conj(h_{l,j})|; zero for real functions."""
        ells, js = lm_index(self.ell_max)
        mirror = ells * ells + ells - js
        expected = (-1.0) ** np.abs(js) * np.conj(self.coeffs)
        return float(np.max(np.abs(self.coeffs[mirror] - expected)))

    def to_csv(self, path) -> None:
        ells, js = lm_index(self.ell_max)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ell", "j", "re", "im"])
            for l, j, c in zip(ells, js, self.coeffs):
                w.writerow([int(l), int(j), fmt(c.real), fmt(c.imag)])

    @classmethod
    def from_csv(cls, path) -> "HarmonicSpectrum":
        rows = list(csv.DictReader(Path(path).open(encoding="utf-8")))
        ell_max = max(int(r["ell"]) for r in rows)
        spec = cls.zeros(ell_max)
        for r in rows:
            spec[int(r["ell"]), int(r["j"])] = complex(float(r["re"]), float(r["im"]))
        return spec


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature nodes ``(tau, phi)`` with weights summing to 4*pi.

    ``exactness_degree`` is the largest total degree ``d`` such that all
    ``Y_l^j conj(Y_l'^j')`` with ``l + l' <= d`` integrate exactly.
    ``split_equator`` marks grids whose polar rule is split at the
    equator of their own frame, so hemisphere-supported integrands
    (cap functions) are integrated exactly as well.
    """

    tau: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    exactness_degree: int
    split_equator: bool = False
    frame: np.ndarray = field(default_factory=lambda: np.eye(3), repr=False)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def xyz(self) -> np.ndarray:
        return to_cartesian(self.tau, self.phi)

    @property
    def max_projection_degree(self) -> int:
        return self.exactness_degree // 2

    def integrate(self, values) -> complex | float:
        return np.sum(self.weights * np.asarray(values))

    def rotated(self, R) -> "SphereGrid":
        """The same rule with every node mapped through rotation ``R``.

        Exactness for band-limited integrands is preserved; a split grid
        becomes split along the great circle orthogonal to ``R @ north``.
        """
        R = np.asarray(R, dtype=float)
        xyz = self.xyz @ R.T
        xyz /= np.linalg.norm(xyz, axis=-1, keepdims=True)
        tau, phi = from_cartesian(xyz)
        return SphereGrid(
            tau, phi, self.weights, self.exactness_degree, self.split_equator, R @ self.frame
        )


def _gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def build_grid(ell_max: int, n_z: int | None = None, n_phi: int | None = None) -> SphereGrid:
    """Gauss-Legendre (in cos tau) x uniform-phi product rule.

    The cos(tau) rule uses ``n_z`` Gauss-Legendre nodes on each of [-1, 0]
    and [0, 1] (default ``ell_max + 1``), which integrates polynomials of
    degree ``2 n_z - 1`` exactly and also handles integrands with a kink at
    the equator. ``n_phi`` defaults to ``2 ell_max + 2``.
    """
    if ell_max < 0:
        raise ValueError("ell_max must be >= 0")
    n_z = max(ell_max + 1, n_z or 0)
    n_phi = max(2 * ell_max + 2, n_phi or 0)
    z_lo, w_lo = _gauss_legendre(n_z, -1.0, 0.0)
    z_hi, w_hi = _gauss_legendre(n_z, 0.0, 1.0)
    z = np.concatenate([z_lo, z_hi])
    wz = np.concatenate([w_lo, w_hi])
    phi = TWO_PI * np.arange(n_phi) / n_phi
    tau_grid = np.repeat(np.arccos(z), n_phi)
    phi_grid = np.tile(phi, z.size)
    weights = np.repeat(wz, n_phi) * (TWO_PI / n_phi)
    exactness = min(2 * n_z - 1, n_phi - 1)
    return SphereGrid(tau_grid, phi_grid, weights, exactness, split_equator=True)


def cap_grid(w, n_t: int = 48, n_phi: int = 96) -> SphereGrid:
    """Quadrature over the hemisphere ``{x : w.x >= 0}`` only.

    Gauss-Legendre in the polar angle about ``w`` on [0, pi/2] (with the
    ``sin`` Jacobian folded into the weights) times a uniform azimuth. Weights
    sum to 2*pi up to quadrature error. Working in the angle rather than in
    ``w.x`` keeps integrands like ``x - (w.x) w`` smooth at the cap centre.
    """
    t, wt = _gauss_legendre(n_t, 0.0, np.pi / 2)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    tau_loc = np.repeat(t, n_phi)
    phi_loc = np.tile(phi, n_t)
    weights = np.repeat(wt * np.sin(t), n_phi) * (TWO_PI / n_phi)
    local = SphereGrid(tau_loc, phi_loc, weights, exactness_degree=0, split_equator=False)
    return local.rotated(rotation_to(w))


def _values_on(f, grid: SphereGrid) -> np.ndarray:
    if callable(f):
        return np.asarray(f(grid.tau, grid.phi))
    values = np.asarray(f)
    if values.shape != grid.weights.shape:
        raise ValueError("value array does not match grid size")
    return values


def project(f, grid: SphereGrid, ell_max: int) -> HarmonicSpectrum:
    """Harmonic coefficients ``sum_k w_k f(p_k) conj(Y_l^j(p_k))``.

    ``f`` is either a callable ``f(tau, phi)`` or an array of values at the
    grid nodes.
    """
    if ell_max > grid.max_projection_degree:
        raise ValueError(
            f"ell_max={ell_max} exceeds grid capacity {grid.max_projection_degree}"
        )
    values = _values_on(f, grid)
    Y = sph_harm_table(ell_max, grid.tau, grid.phi)
    coeffs = (grid.weights * values) @ np.conj(Y)
    return HarmonicSpectrum(ell_max, coeffs)


def evaluate(spectrum: HarmonicSpectrum, tau, phi):
    """Synthesis ``sum_{l,j} h_{lj} Y_l^j(tau, phi)``."""
    tau = np.asarray(tau, dtype=float)
    Y = sph_harm_table(spectrum.ell_max, tau, np.broadcast_to(phi, tau.shape))
    return Y @ spectrum.coeffs
