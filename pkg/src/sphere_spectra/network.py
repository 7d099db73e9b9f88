"""Shallow bias-free ReLU network on S^2 and its gradient-descent training.

    u(x) = sum_i a_i max(0, w_i . x),   |w_i| = 1

trained on the sin(tau)-weighted mean squared error

    L = (1/N) sum_k (u(x_k) - h(x_k))^2 sin(tau_k).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .geometry import as_direction, random_directions, sample_uniform, to_cartesian
from .harmonics import HarmonicSpectrum, SphereGrid, build_grid, n_coeffs, project
from .relu_spectral import neuron_spectrum_table

Mode = Literal["fixed_directions", "trainable_directions"]
MODES = ("fixed_directions", "trainable_directions")

DIVERGENCE_LOSS = 1e6


class TrainingDiverged(RuntimeError):
    """Loss exceeded the divergence guard; ``trace`` holds records up to the abort."""

    def __init__(self, message, params=None, trace=None):
        super().__init__(message)
        self.params = params
        self.trace = trace


@dataclass(frozen=True)
class NetworkParams:
    a: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    mode: Mode = "fixed_directions"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1, 3)
        if a.size < 1 or a.size != w.shape[0]:
            raise ValueError("need m >= 1 output weights matching m directions")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        as_direction(w, tol=1e-10)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def trainable(self) -> bool:
        return self.mode == "trainable_directions"


@dataclass(frozen=True)
class TargetFunction:
    """Target ``h(tau, phi)``.

    ``harmonic_sum`` terms ``(amp, p, q)`` mean ``amp sin(p tau) cos(q phi)``.
    """

    kind: Literal["zero", "trig_paper", "harmonic_sum"] = "zero"
    terms: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "trig_paper", "harmonic_sum"):
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def zero(cls) -> "TargetFunction":
        return cls("zero")

    @classmethod
    def trig_paper(cls) -> "TargetFunction":
        return cls("trig_paper", ((1.0, 1, 3), (1.0, 3, 5)))

    @classmethod
    def harmonic_sum(cls, terms) -> "TargetFunction":
        return cls("harmonic_sum", tuple((float(a), int(p), int(q)) for a, p, q in terms))

    @classmethod
    def by_name(cls, name: str) -> "TargetFunction":
        if name == "zero":
            return cls.zero()
        if name in ("trig", "trig_paper"):
            return cls.trig_paper()
        if name in ("highfreq", "high_frequency"):
            return cls.harmonic_sum([(1.0, 10, 10)])
        raise ValueError(f"unknown target name {name!r}")

    def __call__(self, tau, phi):
        tau = np.asarray(tau, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(tau, phi).shape)
        if self.kind == "zero":
            return out
        for amp, p, q in self.terms:
            out = out + amp * np.sin(p * tau) * np.cos(q * phi)
        return out

    def spectrum(self, ell_max: int, grid: SphereGrid | None = None) -> HarmonicSpectrum:
        if self.kind == "zero":
            return HarmonicSpectrum.zeros(ell_max)
        grid = grid or target_grid(ell_max)
        return project(self, grid, ell_max)


def target_grid(ell_max: int) -> SphereGrid:
    """Dense default grid for projecting (non band-limited) targets."""
    return build_grid(max(ell_max, 64), n_z=160, n_phi=256)


@dataclass(frozen=True)
class TrainingConfig:
    m: int = 100
    lr: float = 1e-3
    epochs: int = 10_000
    n_samples: int = 100
    seed: int = 0
    ell_max: int = 12
    mode: Mode = "fixed_directions"
    init: Literal["default", "high_frequency"] = "default"
    record_every: int = 10
    batch: int | None = None  # None means full batch
    sampling: Literal["random", "fibonacci"] = "random"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.record_every < 1 or self.m < 1 or self.n_samples < 1:
            raise ValueError("epochs, record_every, m and n_samples must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.init not in ("default", "high_frequency"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class ErrorTrace:
    """Per recorded epoch: loss and ``|c_pred - c_true|`` for every (l, j)."""

    ell_max: int
    epochs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    harmonic_errors: list = field(default_factory=list)
    sum_a: list = field(default_factory=list)
    C_h: float | None = None

    def append(self, epoch, loss, errors, sum_a=None):
        if self.epochs and epoch <= self.epochs[-1]:
            raise ValueError("epochs must be strictly increasing")
        if loss < 0:
            raise ValueError("loss must be non-negative")
        self.epochs.append(int(epoch))
        self.losses.append(float(loss))
        self.harmonic_errors.append(np.asarray(errors, dtype=float))
        if sum_a is not None:
            self.sum_a.append(float(sum_a))

    def error_matrix(self) -> np.ndarray:
        """Shape ``(n_records, K)``."""
        if not self.harmonic_errors:
            return np.zeros((0, n_coeffs(self.ell_max)))
        return np.vstack(self.harmonic_errors)

    def mode_series(self, ell: int, j: int) -> np.ndarray:
        return self.error_matrix()[:, ell * ell + ell + j]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def best_loss(self) -> float:
        return min(self.losses)


# ---------------------------------------------------------------------------
# Forward pass, loss, gradient
# ---------------------------------------------------------------------------


def _points(tau, phi) -> np.ndarray:
    return to_cartesian(np.asarray(tau, dtype=float), np.asarray(phi, dtype=float))


def forward(params: NetworkParams, tau, phi):
    x = _points(tau, phi)
    return np.maximum(x @ params.w.T, 0.0) @ params.a


def _sample_weights(tau, weights):
    tau = np.asarray(tau, dtype=float)
    if tau.size == 0:
        raise ValueError("loss needs at least one sample")
    if weights is None:
        return np.sin(tau) / tau.size
    weights = np.asarray(weights, dtype=float)
    if weights.shape != tau.shape:
        raise ValueError("weights must match samples")
    return weights


def loss(params: NetworkParams, tau, phi, h, weights=None) -> float:
    """Weighted squared error; default weights are ``sin(tau_k) / N``.

    Passing quadrature ``weights`` turns this into the continuum loss
    ``int (u - h)^2 dOmega``.
    """
    wts = _sample_weights(tau, weights)
    err = forward(params, tau, phi) - h(tau, phi)
    return float(np.sum(wts * err * err))


def gradient(params: NetworkParams, tau, phi, h, weights=None):
    """Exact gradient of :func:`loss`.

    Returns ``(da, dw)`` with ``dw`` of shape (m, 3) in trainable mode and
    ``None`` otherwise. The ReLU derivative at zero is taken as 0.
    """
    wts = _sample_weights(tau, weights)
    x = _points(tau, phi)
    pre = x @ params.w.T  # (N, m)
    act = np.maximum(pre, 0.0)
    err = act @ params.a - h(tau, phi)
    r = 2.0 * wts * err  # dL/du_k
    da = r @ act
    if not params.trainable:
        return da, None
    mask = (pre > 0.0).astype(float)
    dw = params.a[:, None] * ((r[:, None] * mask).T @ x)
    return da, dw


def renormalize_directions(params: NetworkParams) -> NetworkParams:
    norms = np.linalg.norm(params.w, axis=-1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise ValueError("cannot renormalise a zero or non-finite direction")
    return replace(params, w=params.w / norms[:, None])


def gradient_step(params: NetworkParams, da, dw, lr) -> NetworkParams:
    """One descent step; directions are renormalised after the update."""
    a = params.a - lr * da
    if dw is None:
        return replace(params, a=a)
    w = params.w - lr * dw
    norms = np.linalg.norm(w, axis=-1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise TrainingDiverged("direction update produced a zero or non-finite vector")
    return NetworkParams(a, w / norms[:, None], params.mode)


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------


def _init_rngs(config: TrainingConfig):
    ss = np.random.SeedSequence(config.seed)
    return ss.spawn(4)  # samples, directions, output weights, batch order


def training_samples(config: TrainingConfig):
    s_samples = _init_rngs(config)[0]
    seed = int(s_samples.generate_state(1)[0])
    return sample_uniform(config.n_samples, seed, config.sampling)


def init_default(config: TrainingConfig) -> NetworkParams:
    """Area-uniform directions, ``a_i ~ N(0, 1/m)``; deterministic in ``config.seed``."""
    _, s_dirs, s_weights, _ = _init_rngs(config)
    w = random_directions(config.m, np.random.default_rng(s_dirs))
    a = np.random.default_rng(s_weights).normal(0.0, 1.0 / np.sqrt(config.m), config.m)
    return NetworkParams(a, w, config.mode)


HIGH_FREQUENCY_INIT = TargetFunction.harmonic_sum([(1.0, 10, 10)])


def ridge_fit(features: np.ndarray, target: np.ndarray, weights: np.ndarray, ridge=1e-8):
    """Weighted ridge least squares ``min sum w (F a - y)^2 + ridge s |a|^2``.

    ``s`` is the mean diagonal of the Gram matrix, so ``ridge`` is relative.
    The ridge is raised tenfold while the system is numerically singular.
    Returns ``(a, ridge_used)``.
    """
    Fw = features * weights[:, None]
    gram = features.T @ Fw
    rhs = Fw.T @ target
    scale = np.trace(gram) / gram.shape[0]
    lam = ridge
    while lam <= 1e6:
        M = gram + lam * scale * np.eye(gram.shape[0])
        if np.linalg.cond(M) < 1e14:
            try:
                a = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                a = None
            if a is not None and np.all(np.isfinite(a)):
                return a, lam
        lam *= 10.0
    raise np.linalg.LinAlgError("ridge fit failed even with heavy regularisation")


def _rel_error(pred, y, weights) -> float:
    den = np.sum(weights * y * y)
    return float(np.sqrt(np.sum(weights * (pred - y) ** 2) / den)) if den > 0 else float("nan")


def init_high_frequency(
    config: TrainingConfig, grid: SphereGrid | None = None, shape=None, fit_on: str = "samples"
):
    """Directions as in :func:`init_default`; output weights fitted to ``sin(10 tau) cos(10 phi)``.

    ``fit_on="samples"`` (default) solves the ridge problem in the training
    norm, i.e. at the training points with their ``sin(tau)/N`` weights, so
    the network starts out reproducing the shape on the data it is trained
    on. ``fit_on="grid"`` fits in the quadrature L2 norm on ``grid``. The
    default shape is odd under ``x -> -x`` and has no degree-1 part, so it
    is L2-orthogonal to every bias-free ReLU network; the grid fit therefore
    returns (numerically) zero weights.

    Returns ``(params, info)``; ``info`` holds the relative fit errors in
    both norms and the ridge actually used.
    """
    shape = shape or HIGH_FREQUENCY_INIT
    grid = grid or build_grid(48, n_z=96, n_phi=192)
    base = init_default(config)
    tau_s, phi_s = training_samples(config)
    w_s = np.sin(tau_s) / tau_s.size
    F_s = np.maximum(to_cartesian(tau_s, phi_s) @ base.w.T, 0.0)
    y_s = shape(tau_s, phi_s)
    F_g = np.maximum(grid.xyz @ base.w.T, 0.0)
    y_g = shape(grid.tau, grid.phi)
    if fit_on == "samples":
        a, lam = ridge_fit(F_s, y_s, w_s)
    elif fit_on == "grid":
        a, lam = ridge_fit(F_g, y_g, grid.weights)
    else:
        raise ValueError(f"fit_on must be 'samples' or 'grid', not {fit_on!r}")
    info = {
        "fit_on": fit_on,
        "ridge": lam,
        "rel_err_samples": _rel_error(F_s @ a, y_s, w_s),
        "rel_err_grid": _rel_error(F_g @ a, y_g, grid.weights),
    }
    return NetworkParams(a, base.w, config.mode), info


def initialize(config: TrainingConfig):
    """Dispatch on ``config.init``; returns ``(params, info)``."""
    if config.init == "high_frequency":
        return init_high_frequency(config)
    return init_default(config), {}


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class SpectrumTracker:
    """Exact network spectra; caches the mixing table while directions are fixed."""

    def __init__(self, ell_max: int, target_spectrum: HarmonicSpectrum):
        self.ell_max = ell_max
        self.target = target_spectrum.coeffs
        self._fixed_table = None

    def network(self, params: NetworkParams) -> np.ndarray:
        if params.trainable:
            return params.a @ neuron_spectrum_table(params.w, self.ell_max)
        if self._fixed_table is None:
            self._fixed_table = neuron_spectrum_table(params.w, self.ell_max)
        return params.a @ self._fixed_table

    def errors(self, params: NetworkParams) -> np.ndarray:
        return np.abs(self.network(params) - self.target)


def _minibatch_epoch(a, W, X, y, s, order, batch, lr, trainable, Phi):
    """One pass over ``order`` in chunks of ``batch``; updates ``a``/``W`` in place.

    Each chunk uses the batch-mean of the per-sample losses ``(u - h)^2 sin(tau)``.
    """
    n = order.size
    for start in range(0, n, batch):
        idx = order[start : start + batch]
        if batch == 1:
            k = idx[0]
            if trainable:
                pre = W @ X[k]
                act = np.maximum(pre, 0.0)
                g = 2.0 * s[k] * (act @ a - y[k])
                W -= (lr * g) * (a * (pre > 0.0))[:, None] * X[k][None, :]
                a -= (lr * g) * act
                W /= np.linalg.norm(W, axis=1, keepdims=True)
            else:
                act = Phi[k]
                a -= (lr * 2.0 * s[k] * (act @ a - y[k])) * act
            continue
        Xb = X[idx]
        pre = Xb @ W.T if trainable else None
        act = np.maximum(pre, 0.0) if trainable else Phi[idx]
        r = 2.0 * s[idx] * (act @ a - y[idx]) / idx.size
        if trainable:
            W -= lr * a[:, None] * (((pre > 0.0) * r[:, None]).T @ Xb)
            a -= lr * (r @ act)
            W /= np.linalg.norm(W, axis=1, keepdims=True)
        else:
            a -= lr * (r @ act)
    return a, W


def train(
    config: TrainingConfig,
    h: TargetFunction,
    params: NetworkParams | None = None,
    target_spectrum: HarmonicSpectrum | None = None,
):
    """Gradient descent with a fixed learning rate.

    Full batch when ``config.batch`` is None (or >= n_samples); otherwise
    the samples are reshuffled each epoch and visited in mini-batches.
    Records epoch 0, every ``record_every`` epochs and the final epoch.
    In trainable mode each step is followed by renormalising every ``w_i``.
    Raises :class:`TrainingDiverged` (carrying the partial trace) when the
    recorded loss is non-finite or above 1e6.
    """
    if params is None:
        params, _ = initialize(config)
    if params.mode != config.mode:
        params = replace(params, mode=config.mode)
    tau, phi = training_samples(config)
    X = to_cartesian(tau, phi)
    y = h(tau, phi)
    s = np.sin(tau)
    n = tau.size
    target_spectrum = target_spectrum or h.spectrum(config.ell_max)
    tracker = SpectrumTracker(config.ell_max, target_spectrum)
    trace = ErrorTrace(config.ell_max)
    batch_rng = np.random.default_rng(_init_rngs(config)[3])
    batch = config.batch if config.batch and config.batch < n else None
    trainable = params.trainable

    a = params.a.copy()
    W = params.w.copy()
    Phi = None if trainable else np.maximum(X @ W.T, 0.0)

    def snapshot():
        return NetworkParams(a.copy(), W.copy(), params.mode)

    def record(epoch):
        act = np.maximum(X @ W.T, 0.0) if trainable else Phi
        err = act @ a - y
        L = float(np.sum(s * err * err) / n)
        if not np.isfinite(L) or L > DIVERGENCE_LOSS:
            raise TrainingDiverged(
                f"loss {L:.3g} at epoch {epoch} exceeds divergence guard {DIVERGENCE_LOSS:g}",
                None,
                trace,
            )
        current = snapshot()
        trace.append(epoch, L, tracker.errors(current), float(a.sum()))
        return current

    record(0)
    for epoch in range(1, config.epochs + 1):
        if batch is None:
            if trainable:
                pre = X @ W.T
                act = np.maximum(pre, 0.0)
            else:
                act = Phi
            r = 2.0 * s * (act @ a - y) / n
            if trainable:
                W -= config.lr * a[:, None] * (((pre > 0.0) * r[:, None]).T @ X)
                a -= config.lr * (r @ act)
                norms = np.linalg.norm(W, axis=1, keepdims=True)
                if np.any(norms == 0.0):
                    raise TrainingDiverged(f"zero direction at epoch {epoch}", None, trace)
                W /= norms
            else:
                a -= config.lr * (r @ act)
        else:
            order = batch_rng.permutation(n)
            a, W = _minibatch_epoch(a, W, X, y, s, order, batch, config.lr, trainable, Phi)
        if epoch % config.record_every == 0 or epoch == config.epochs:
            try:
                record(epoch)
            except TrainingDiverged as exc:
                exc.params = None
                raise
    return snapshot(), trace
