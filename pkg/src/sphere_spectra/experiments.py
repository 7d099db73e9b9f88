"""Registry of the eight training cases, run artifacts and plot data.

A run directory holds::

    loss.csv            epoch,loss
    harmonics.csv       epoch,ell,j,abs_err
    params_init.csv     i,a,wx,wy,wz
    params_final.csv    i,a,wx,wy,wz
    verdict.csv         j,label,n_pairs,n_inverted   (+ verdict.txt)
    evolution.csv       ell,j,C_re,C_im,G_re,G_im    (final parameters)
    meta.json           config, target, seed, git describe, wall time, checks
    plot/               tidy curves, field raster and a plotting stub
"""

from __future__ import annotations

import csv
import dataclasses
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import classify_fp, decay_fit, evolution_terms, write_verdicts
from .harmonics import fmt, lm_index
from .network import (
    ErrorTrace,
    NetworkParams,
    TargetFunction,
    TrainingConfig,
    TrainingDiverged,
    forward,
    initialize,
    train,
)

VERDICT_ELLS = range(1, 11)
DESK_TRIG_EPOCHS = 20_000
PAPER_TRIG_EPOCHS = 100_000


@dataclass(frozen=True)
class Expected:
    max_final_loss: float | None = None
    fp_labels: frozenset | None = None
    fp_order: int = 0


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    config: TrainingConfig
    target: str
    expected: Expected | None = None

    @property
    def target_function(self) -> TargetFunction:
        return TargetFunction.by_name(self.target)

    @property
    def init(self) -> str:
        return self.config.init


_VIOLATING = frozenset({"partial", "violates"})


def registry(paper_scale: bool = False) -> list[ExperimentSpec]:
    """The {zero, trig} x {fixed, trainable} x {default, highfreq} cases.

    Every case uses m=100, lr=1e-3, 100 training points and per-sample SGD
    with a reshuffle each epoch, and pins seed 0.
    """
    trig_epochs = PAPER_TRIG_EPOCHS if paper_scale else DESK_TRIG_EPOCHS
    specs = []
    for target in ("zero", "trig"):
        for mode, mode_tag in (("fixed_directions", "fixed"), ("trainable_directions", "trainable")):
            for init, init_tag in (("default", "default"), ("high_frequency", "highfreq")):
                name = f"{target}_{mode_tag}_{init_tag}"
                epochs = 10_000 if target == "zero" else trig_epochs
                config = TrainingConfig(
                    m=100,
                    lr=1e-3,
                    epochs=epochs,
                    n_samples=100,
                    seed=0,
                    ell_max=12,
                    mode=mode,
                    init=init,
                    record_every=10 if epochs <= 20_000 else 50,
                    batch=1,
                )
                specs.append(ExperimentSpec(name, config, target, _expected(name, paper_scale)))
    return specs


def _expected(name: str, paper_scale: bool) -> Expected | None:
    if name in ("zero_fixed_default", "zero_trainable_default"):
        return Expected(max_final_loss=1e-4)
    if name == "zero_fixed_highfreq":
        return Expected(fp_labels=_VIOLATING)
    if name == "trig_trainable_highfreq":
        return Expected(max_final_loss=5e-3, fp_labels=_VIOLATING)
    if name == "trig_fixed_default" and paper_scale:
        return Expected(max_final_loss=2e-2)
    return None


def get_spec(name: str, paper_scale: bool = False) -> ExperimentSpec:
    for spec in registry(paper_scale):
        if spec.name == name:
            return spec
    raise KeyError(f"no registry case named {name!r}")


# ---------------------------------------------------------------------------
# key=value configuration
# ---------------------------------------------------------------------------

CONFIG_KEYS = {f.name: f for f in dataclasses.fields(TrainingConfig)}
CONFIG_HELP = {
    "m": "number of neurons",
    "lr": "learning rate",
    "epochs": "passes over the training set",
    "n_samples": "training points on the sphere",
    "seed": "seed for samples, directions, weights and batch order",
    "ell_max": "largest degree tracked in harmonics.csv",
    "mode": "fixed_directions | trainable_directions",
    "init": "default | high_frequency",
    "record_every": "epochs between trace records",
    "batch": "mini-batch size, or 'full'",
    "sampling": "random | fibonacci",
}


def _coerce(key: str, text: str):
    text = text.strip()
    if key == "batch":
        return None if text.lower() in ("full", "none", "") else int(text)
    default = CONFIG_KEYS[key].default
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_overrides(pairs) -> dict:
    """``["lr=1e-2", "batch=full"]`` -> typed dict; unknown keys raise ``KeyError``."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise KeyError(f"unknown config key {key!r}; known: {', '.join(CONFIG_KEYS)}")
        out[key] = _coerce(key, value)
    return out


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            pairs.append(line)
    return parse_overrides(pairs)


def with_overrides(spec: ExperimentSpec, overrides: dict) -> ExperimentSpec:
    if not overrides:
        return spec
    return dataclasses.replace(spec, config=dataclasses.replace(spec.config, **overrides))


def config_to_text(config: TrainingConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        value = getattr(config, key)
        lines.append(f"{key}={'full' if key == 'batch' and value is None else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _writer(f):
    return csv.writer(f, lineterminator="\n")


def write_loss_csv(trace: ErrorTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = _writer(f)
        out.writerow(["epoch", "loss"])
        for e, L in zip(trace.epochs, trace.losses):
            out.writerow([e, fmt(L)])


def write_harmonics_csv(trace: ErrorTrace, path) -> None:
    ells, js = lm_index(trace.ell_max)
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = _writer(f)
        out.writerow(["epoch", "ell", "j", "abs_err"])
        for e, errs in zip(trace.epochs, trace.harmonic_errors):
            for l, j, v in zip(ells, js, errs):
                out.writerow([e, l, j, fmt(v)])


def write_params_csv(params: NetworkParams, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = _writer(f)
        out.writerow(["i", "a", "wx", "wy", "wz"])
        for i, (a, w) in enumerate(zip(params.a, params.w)):
            out.writerow([i, fmt(a), fmt(w[0]), fmt(w[1]), fmt(w[2])])


def read_params_csv(path, mode="fixed_directions") -> NetworkParams:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return NetworkParams(data[:, 1], data[:, 2:5], mode)


def read_trace(run_dir) -> ErrorTrace:
    """Rebuild the :class:`ErrorTrace` stored in ``loss.csv`` + ``harmonics.csv``."""
    run_dir = Path(run_dir)
    loss = np.loadtxt(run_dir / "loss.csv", delimiter=",", skiprows=1, ndmin=2)
    harm = np.loadtxt(run_dir / "harmonics.csv", delimiter=",", skiprows=1, ndmin=2)
    ell_max = int(harm[:, 1].max())
    K = (ell_max + 1) ** 2
    if harm.shape[0] != K * loss.shape[0]:
        raise ValueError("harmonics.csv does not match loss.csv record count")
    trace = ErrorTrace(ell_max)
    errs = harm[:, 3].reshape(loss.shape[0], K)
    for (e, L), row in zip(loss, errs):
        trace.append(int(e), float(L), row)
    return trace


def git_describe() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, frozenset):
        return sorted(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


@dataclass
class RunResult:
    out_dir: Path
    spec: ExperimentSpec
    trace: ErrorTrace
    params: NetworkParams | None
    verdicts: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_expected(spec: ExperimentSpec, trace: ErrorTrace, verdicts) -> list[str]:
    """Human-readable list of violated expected bounds (empty when all hold)."""
    exp = spec.expected
    if exp is None:
        return []
    failures = []
    if exp.max_final_loss is not None and not trace.final_loss <= exp.max_final_loss:
        failures.append(f"max_final_loss: final loss {trace.final_loss:.3g} > {exp.max_final_loss:g}")
    if exp.fp_labels is not None:
        v = next((v for v in verdicts if v.j == exp.fp_order), None)
        if v is None or v.label not in exp.fp_labels:
            got = v.label if v else "missing"
            failures.append(f"fp_label: j={exp.fp_order} verdict {got!r} not in {sorted(exp.fp_labels)}")
    return failures


def run_experiment(spec: ExperimentSpec, out_dir, plot_data: bool = True) -> RunResult:
    """Train ``spec``, write every artifact into ``out_dir`` and check bounds.

    On divergence the partial trace and the failure are still written and
    the result carries ``diverged=True``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = spec.config
    h = spec.target_function
    t0 = time.perf_counter()
    params0, init_info = initialize(cfg)
    write_params_csv(params0, out_dir / "params_init.csv")
    (out_dir / "config.txt").write_text(
        f"# {spec.name}\ntarget={spec.target}\n" + config_to_text(cfg), encoding="utf-8"
    )
    diverged = False
    failures = []
    try:
        params, trace = train(cfg, h, params0)
    except TrainingDiverged as exc:
        diverged = True
        params, trace = None, exc.trace
        failures.append(f"diverged: {exc}")
    write_loss_csv(trace, out_dir / "loss.csv")
    write_harmonics_csv(trace, out_dir / "harmonics.csv")

    verdicts = []
    if len(trace.epochs) >= 2:
        orders = (0, 1) if cfg.mode == "trainable_directions" else (0,)
        verdicts = [classify_fp(trace, j, ells=VERDICT_ELLS) for j in orders]
        write_verdicts(verdicts, out_dir / "verdict.csv", out_dir / "verdict.txt")

    decay = {}
    if params is not None:
        write_params_csv(params, out_dir / "params_final.csv")
        terms = evolution_terms(params, h, cfg.ell_max)
        terms.to_csv(out_dir / "evolution.csv")
        for which in ("C", "G") if params.trainable else ("C",):
            try:
                k, r2 = decay_fit(terms.degree_series(which, 0), range(6, cfg.ell_max + 1))
                decay[which] = {"exponent": k, "r2": r2}
            except ValueError as exc:
                decay[which] = {"error": str(exc)}
    if not diverged:
        failures += check_expected(spec, trace, verdicts)

    wall = time.perf_counter() - t0
    meta = {
        "name": spec.name,
        "target": spec.target,
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "git_describe": git_describe(),
        "wall_time_s": wall,
        "init_info": init_info,
        "final_loss": trace.losses[-1] if trace.losses else None,
        "best_loss": min(trace.losses) if trace.losses else None,
        "diverged": diverged,
        "expected": dataclasses.asdict(spec.expected) if spec.expected else None,
        "failures": failures,
        "decay_fit_j0": decay,
        "verdicts": [v.summary() for v in verdicts],
    }
    (out_dir / "meta.json").write_text(
        json.dumps(meta, indent=2, default=_json_default) + "\n", encoding="utf-8"
    )
    result = RunResult(out_dir, spec, trace, params, verdicts, failures, diverged, meta)
    if plot_data and params is not None:
        emit_plotdata(result)
    return result


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

CURVE_PANELS = (("1-5", range(1, 6)), ("6-10", range(6, 11)))

PLOT_STUB = '''"""Render the CSVs in this directory (needs matplotlib)."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)

for path in sorted(here.glob("curves_j*.csv")):
    series = defaultdict(lambda: defaultdict(list))
    with open(path) as f:
        for row in csv.DictReader(f):
            s = series[row["panel"]][int(row["ell"])]
            s.append((int(row["epoch"]), float(row["abs_err"])))
    fig, axes = plt.subplots(1, len(series), figsize=(6 * len(series), 4), squeeze=False)
    for ax, (panel, curves) in zip(axes[0], sorted(series.items())):
        for ell, pts in sorted(curves.items()):
            x, y = zip(*pts)
            ax.semilogy(x, y, label=f"l={ell}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("|c_pred - c_true|")
        ax.set_title(f"{path.stem} l={panel}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(here / f"{path.stem}.png", dpi=120)

rows = list(csv.DictReader(open(here / "raster.csv")))
taus = sorted({float(r["tau"]) for r in rows})
phis = sorted({float(r["phi"]) for r in rows})
fig, axes = plt.subplots(1, 3, figsize=(15, 4))
for ax, col in zip(axes, ("target", "output", "abs_err")):
    grid = [[0.0] * len(phis) for _ in taus]
    for k, r in enumerate(rows):
        grid[k // len(phis)][k % len(phis)] = float(r[col])
    im = ax.imshow(grid, extent=(0, 6.2832, 3.1416, 0), aspect="auto")
    ax.set_title(col)
    ax.set_xlabel("phi")
    ax.set_ylabel("tau")
    fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig(here / "raster.png", dpi=120)
'''


def raster_points(n_tau: int = 90, n_phi: int = 180):
    """Cell-centred polar angles and left-edge azimuths, flattened row-major in tau."""
    tau = (np.arange(n_tau) + 0.5) * np.pi / n_tau
    phi = np.arange(n_phi) * 2.0 * np.pi / n_phi
    T, P = np.meshgrid(tau, phi, indexing="ij")
    return T.ravel(), P.ravel()


def emit_plotdata(result: RunResult, raster=(90, 180)) -> list[Path]:
    """Write tidy curve files, the field raster and a plotting stub under ``plot/``."""
    plot_dir = result.out_dir / "plot"
    plot_dir.mkdir(exist_ok=True)
    trace = result.trace
    written = []
    orders = (0, 1) if result.spec.config.mode == "trainable_directions" else (0,)
    for j in orders:
        path = plot_dir / f"curves_j{j}.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            out = _writer(f)
            out.writerow(["panel", "epoch", "ell", "j", "abs_err"])
            for panel, ells in CURVE_PANELS:
                for l in ells:
                    if l > trace.ell_max:
                        continue
                    series = trace.mode_series(l, j)
                    for e, v in zip(trace.epochs, series):
                        out.writerow([panel, e, l, j, fmt(v)])
        written.append(path)

    tau, phi = raster_points(*raster)
    target = result.spec.target_function(tau, phi)
    output = forward(result.params, tau, phi)
    path = plot_dir / "raster.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = _writer(f)
        out.writerow(["tau", "phi", "target", "output", "abs_err"])
        for row in zip(tau, phi, target, output, np.abs(output - target)):
            out.writerow([fmt(v) for v in row])
    written.append(path)
    stub = plot_dir / "plot_run.py"
    stub.write_text(PLOT_STUB, encoding="utf-8")
    written.append(stub)
    return written


def diagnose(run_dir, threshold: float = 0.2) -> dict:
    """Recompute verdicts from a stored trace and compare with ``verdict.csv``."""
    run_dir = Path(run_dir)
    trace = read_trace(run_dir)
    meta_path = run_dir / "meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    mode = meta.get("config", {}).get("mode", "fixed_directions")
    orders = (0, 1) if mode == "trainable_directions" else (0,)
    verdicts = [classify_fp(trace, j, threshold, ells=VERDICT_ELLS) for j in orders]
    stored = []
    if (run_dir / "verdict.csv").exists():
        from .diagnostics import read_verdicts

        stored = read_verdicts(run_dir / "verdict.csv")
    recomputed = [
        {"j": v.j, "label": v.label, "n_pairs": v.n_pairs, "n_inverted": v.n_inverted} for v in verdicts
    ]
    return {
        "verdicts": verdicts,
        "stored": stored,
        "consistent": not stored or stored == recomputed,
        "final_loss": trace.final_loss,
        "best_loss": trace.best_loss,
    }


__all__ = [
    "CONFIG_HELP",
    "ExperimentSpec",
    "Expected",
    "RunResult",
    "check_expected",
    "config_to_text",
    "diagnose",
    "emit_plotdata",
    "get_spec",
    "parse_overrides",
    "read_config_file",
    "read_params_csv",
    "read_trace",
    "registry",
    "run_experiment",
    "with_overrides",
]
