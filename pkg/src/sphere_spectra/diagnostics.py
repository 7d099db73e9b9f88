"""Frequency-resolved diagnostics of the training error.

The error field is ``D = u - h``. Its harmonic spectrum, the fixed-direction
mode factors ``D_l``, the amplitude and rotation contributions ``C`` and
``G`` to the time derivative of the spectrum, power-law decay fits, and a
trajectory-level classifier of low-before-high convergence all live here.

Integrals over the sphere use quadrature grids rather than the training
samples, since the statements they check are about the continuum.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .geometry import as_direction, from_cartesian
from .harmonics import (
    HarmonicSpectrum,
    SphereGrid,
    build_grid,
    cap_grid,
    fmt,
    lm_index,
    n_coeffs,
    project,
)
from .network import ErrorTrace, NetworkParams, TargetFunction, forward
from .relu_spectral import (
    POLAR_SIN_EPS,
    neuron_spectrum_grad_table,
    neuron_spectrum_table,
    relu_coefficients,
)

LABELS = ("adheres", "partial", "violates")
NEGLIGIBLE_ERROR = 1e-8
# directions closer than this to +-north count as aligned with the polar axis
ALIGN_TOL = 1e-10


@dataclass(frozen=True)
class ErrorField:
    """``D(tau, phi)`` as a vectorised callable."""

    evaluator: Callable

    @classmethod
    def from_network(cls, params: NetworkParams, h: TargetFunction) -> "ErrorField":
        def D(tau, phi):
            return forward(params, tau, phi) - h(tau, phi)

        return cls(D)

    @classmethod
    def constant(cls, value: float) -> "ErrorField":
        return cls(lambda tau, phi: np.full(np.broadcast(tau, phi).shape, float(value)))

    def __call__(self, tau, phi):
        return np.asarray(self.evaluator(tau, phi), dtype=float)


def _as_field(D) -> ErrorField:
    return D if isinstance(D, ErrorField) else ErrorField(D)


def error_spectrum(
    params: NetworkParams,
    h: TargetFunction,
    ell_max: int,
    grid: SphereGrid | None = None,
    method: str = "analytic",
) -> HarmonicSpectrum:
    """Spectrum of ``D = u - h`` up to ``ell_max``.

    ``method="analytic"`` uses the exact rotated cap coefficients for the
    network and projects only ``h`` (on ``grid`` or the dense target grid).
    ``method="grid"`` projects ``D`` itself on ``grid``; the cap kinks then
    limit accuracy to the grid's resolution.
    """
    if method == "analytic":
        net = params.a @ neuron_spectrum_table(params.w, ell_max)
        return HarmonicSpectrum(ell_max, net) - h.spectrum(ell_max, grid)
    if method == "grid":
        grid = grid or build_grid(max(2 * ell_max, 48), n_z=128, n_phi=256)
        return project(ErrorField.from_network(params, h), grid, ell_max)
    raise ValueError(f"unknown method {method!r}")


def _cap_nodes(w, grid):
    w = as_direction(w, tol=1e-9)
    grid = grid if grid is not None else cap_grid(w)
    xyz = grid.xyz
    act = np.maximum(xyz @ w, 0.0)
    return grid, xyz, act


def cap_integral_scalar(D, w, grid: SphereGrid | None = None) -> float:
    """``int D(x) max(0, w.x) dOmega``; default grid is a hemisphere rule around ``w``."""
    grid, _, act = _cap_nodes(w, grid)
    return float(np.sum(grid.weights * _as_field(D)(grid.tau, grid.phi) * act))


def cap_integral_vector(D, w, grid: SphereGrid | None = None) -> np.ndarray:
    """``int_{w.x > 0} D(x) x dOmega``, the direction-gradient moment of the cap."""
    grid, xyz, act = _cap_nodes(w, grid)
    vals = grid.weights * _as_field(D)(grid.tau, grid.phi) * (act > 0.0)
    return vals @ xyz


def c_of_h(h, grid: SphereGrid | None = None) -> float:
    """Upper-hemisphere moment ``int_{z>0} h cos(tau) dOmega``."""
    if isinstance(h, TargetFunction) and h.kind == "zero":
        return 0.0
    return cap_integral_scalar(h, np.array([0.0, 0.0, 1.0]), grid)


def _check_aligned(W: np.ndarray):
    if np.any(np.abs(np.abs(W[:, 2]) - 1.0) > ALIGN_TOL):
        raise ValueError("fixed_mode_d_ell needs every direction aligned with the polar axis")


def fixed_mode_d_ell(
    params: NetworkParams, h: TargetFunction, ell_max: int, grid: SphereGrid | None = None
) -> np.ndarray:
    """``D_l = m (2 pi/3 sum_k a_k - C(h)) c_l`` for ``l = 0..ell_max``.

    Requires all directions at the north pole (checked). The bracket is the
    cap moment of ``D`` when every neuron sits at the pole.
    """
    _check_aligned(params.w)
    factor = params.m * (2.0 * math.pi / 3.0 * float(np.sum(params.a)) - c_of_h(h, grid))
    return factor * relu_coefficients(ell_max)


def fixed_mode_threshold(h: TargetFunction, grid: SphereGrid | None = None) -> float:
    """The value ``(3 / 2 pi) C(h)`` of ``sum a_k`` at which every ``D_l`` vanishes."""
    return 3.0 / (2.0 * math.pi) * c_of_h(h, grid)


@dataclass
class EvolutionTerms:
    """Amplitude (``C``) and rotation (``G``) parts of ``d/dt`` of the error spectrum."""

    ell_max: int
    C: np.ndarray
    G: np.ndarray
    skipped: list = field(default_factory=list)

    def total(self) -> np.ndarray:
        return self.C + self.G

    def at(self, ell: int, j: int):
        k = ell * ell + ell + j
        return complex(self.C[k]), complex(self.G[k])

    def degree_series(self, which: str = "C", j: int = 0) -> np.ndarray:
        arr = self.C if which == "C" else self.G
        return np.array(
            [abs(arr[l * l + l + j]) if abs(j) <= l else np.nan for l in range(self.ell_max + 1)]
        )

    def to_csv(self, path) -> None:
        ells, js = lm_index(self.ell_max)
        with open(path, "w", newline="", encoding="utf-8") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["ell", "j", "C_re", "C_im", "G_re", "G_im"])
            for l, j, c, g in zip(ells, js, self.C, self.G):
                out.writerow([l, j, fmt(c.real), fmt(c.imag), fmt(g.real), fmt(g.imag)])

    @classmethod
    def from_csv(cls, path) -> "EvolutionTerms":
        with open(path, encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        ell_max = max(int(r["ell"]) for r in rows)
        C = np.zeros(n_coeffs(ell_max), dtype=complex)
        G = np.zeros_like(C)
        for r in rows:
            k = int(r["ell"]) ** 2 + int(r["ell"]) + int(r["j"])
            C[k] = complex(float(r["C_re"]), float(r["C_im"]))
            G[k] = complex(float(r["G_re"]), float(r["G_im"]))
        return cls(ell_max, C, G)


def evolution_terms(
    params: NetworkParams,
    h: TargetFunction,
    ell_max: int,
    grid: SphereGrid | None = None,
    n_t: int = 48,
    n_phi: int = 96,
) -> EvolutionTerms:
    """``C(l,j) = -sum_i S_i c_l D_{j0}(w_i)`` and ``G(l,j) = -sum_i a_i^2 V_i . grad(c_l D_{j0})(w_i)``.

    ``S_i`` and ``V_i`` are the scalar and vector cap integrals of ``D``,
    each computed on a hemisphere rule aligned with ``w_i`` unless a shared
    ``grid`` is given (e.g. the grid used as a training set). ``G`` is zero
    in fixed-direction mode. Neurons within ``1e-8`` of a pole are left out
    of ``G`` with a warning (the rotation parametrisation is singular there).
    """
    D = ErrorField.from_network(params, h)
    S = np.empty(params.m)
    V = np.empty((params.m, 3))
    for i, w in enumerate(params.w):
        g = grid if grid is not None else cap_grid(w, n_t, n_phi)
        S[i] = cap_integral_scalar(D, w, g)
        if params.trainable:
            V[i] = cap_integral_vector(D, w, g)
    C = -(S @ neuron_spectrum_table(params.w, ell_max))
    G = np.zeros(n_coeffs(ell_max), dtype=complex)
    skipped = []
    if params.trainable:
        tau, _ = from_cartesian(params.w, tol=1e-9)
        ok = np.sin(tau) > POLAR_SIN_EPS
        skipped = [int(i) for i in np.flatnonzero(~ok)]
        if skipped:
            warnings.warn(f"polar directions skipped in rotation term: {skipped}", RuntimeWarning)
        if np.any(ok):
            grad = neuron_spectrum_grad_table(params.w[ok], ell_max)  # (m, K, 3)
            coef = (params.a[ok] ** 2)[:, None] * V[ok]
            G = -np.einsum("mkd,md->k", grad, coef)
    return EvolutionTerms(ell_max, C, G, skipped)


def decay_fit(values, ell_range) -> tuple[float, float]:
    """Fit ``log2|v_l| + l = k log2(l) + b`` and return ``(k, R^2)``.

    ``values`` is indexed by degree (``values[l]``). Degrees with
    non-positive or non-finite values are dropped; fewer than four usable
    points raise ``ValueError``.
    """
    values = np.asarray(values, dtype=float)
    ells = np.array([l for l in ell_range if l >= 1], dtype=int)
    ells = ells[ells < values.size]
    v = values[ells]
    keep = np.isfinite(v) & (v > 0)
    ells, v = ells[keep], v[keep]
    if ells.size < 4:
        raise ValueError("decay_fit needs at least four positive values")
    x = np.log2(ells)
    y = np.log2(v) + ells
    k, b = np.polyfit(x, y, 1)
    resid = y - (k * x + b)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(k), float(r2)


# ---------------------------------------------------------------------------
# Frequency-ordering verdicts
# ---------------------------------------------------------------------------


@dataclass
class FpVerdict:
    j: int
    label: str
    convergence_epochs: dict
    witnesses: list
    n_pairs: int
    n_inverted: int

    def summary(self) -> str:
        shown = ", ".join(f"({a},{b})" for a, b in self.witnesses[:8])
        more = "" if len(self.witnesses) <= 8 else f" +{len(self.witnesses) - 8} more"
        return (
            f"j={self.j}: {self.label} ({self.n_inverted}/{self.n_pairs} pairs inverted)"
            + (f" witnesses {shown}{more}" if self.witnesses else "")
        )


def convergence_epochs(trace: ErrorTrace, j: int = 0, threshold: float = 0.2, ells=None):
    """First recorded epoch at which ``|err(l, j)| <= threshold * |err_0(l, j)|``.

    Returns ``{l: (epoch or inf, final/initial ratio)}`` for modes whose
    initial error is at least 1e-8.
    """
    if len(trace.epochs) < 2:
        raise ValueError("need at least two recorded epochs")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    E = trace.error_matrix()
    epochs = np.asarray(trace.epochs)
    ells = range(max(1, abs(j)), trace.ell_max + 1) if ells is None else ells
    out = {}
    for l in ells:
        if abs(j) > l or l > trace.ell_max:
            continue
        series = E[:, l * l + l + j]
        e0 = series[0]
        if e0 < NEGLIGIBLE_ERROR:
            continue
        hit = np.flatnonzero(series <= threshold * e0)
        t = float(epochs[hit[0]]) if hit.size else math.inf
        out[l] = (t, float(series[-1] / e0))
    return out


def classify_fp(trace: ErrorTrace, j: int = 0, threshold: float = 0.2, ells=None) -> FpVerdict:
    """Label the convergence order of degrees at fixed order ``j``.

    A pair ``l1 < l2`` is inverted when ``l2`` reaches the threshold
    strictly earlier. Pairs where neither converges are compared by the
    final/initial error ratio (smaller ratio counts as earlier). ``adheres``
    means no inverted pair, ``violates`` means at least half inverted,
    otherwise ``partial``.
    """
    conv = convergence_epochs(trace, j, threshold, ells)
    degrees = sorted(conv)
    witnesses = []
    n_pairs = 0
    for i, l1 in enumerate(degrees):
        t1, r1 = conv[l1]
        for l2 in degrees[i + 1 :]:
            t2, r2 = conv[l2]
            n_pairs += 1
            if math.isinf(t1) and math.isinf(t2):
                inverted = r2 < r1
            else:
                inverted = t2 < t1
            if inverted:
                witnesses.append((l1, l2))
    n_inv = len(witnesses)
    if n_inv == 0:
        label = "adheres"
    elif 2 * n_inv >= n_pairs:
        label = "violates"
    else:
        label = "partial"
    return FpVerdict(j, label, {l: conv[l][0] for l in degrees}, witnesses, n_pairs, n_inv)


def instantaneous_fp_series(
    params_series, h: TargetFunction, ell_max: int, j: int = 0, target_spectrum=None
):
    """Per snapshot: fraction of pairs ``l1 < l2`` with both ``Re D_lj < 0`` satisfying ``|Re D_l1j| > |Re D_l2j|``.

    ``params_series`` is an iterable of :class:`NetworkParams`. Returns an
    array with NaN where no pair qualifies. This is the pointwise inequality
    form of the ordering and is reported alongside, not folded into, the
    trajectory verdict.
    """
    target = (target_spectrum or h.spectrum(ell_max)).coeffs
    ells = [l for l in range(max(1, abs(j)), ell_max + 1)]
    idx = [l * l + l + j for l in ells]
    out = []
    for p in params_series:
        d = (p.a @ neuron_spectrum_table(p.w, ell_max) - target)[idx].real
        good = total = 0
        for a in range(len(ells)):
            for b in range(a + 1, len(ells)):
                if d[a] < 0 and d[b] < 0:
                    total += 1
                    good += abs(d[a]) > abs(d[b])
        out.append(good / total if total else np.nan)
    return np.array(out)


def write_verdicts(verdicts, csv_path, text_path=None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["j", "label", "n_pairs", "n_inverted"])
        for v in verdicts:
            out.writerow([v.j, v.label, v.n_pairs, v.n_inverted])
    if text_path is not None:
        Path(text_path).write_text("\n".join(v.summary() for v in verdicts) + "\n", encoding="utf-8")


def read_verdicts(csv_path) -> list[dict]:
    with open(csv_path, encoding="utf-8") as f:
        return [
            {"j": int(r["j"]), "label": r["label"], "n_pairs": int(r["n_pairs"]), "n_inverted": int(r["n_inverted"])}
            for r in csv.DictReader(f)
        ]
