"""Command-line entry point: ``sphere-spectra <command>`` or ``python3 -m sphere_spectra``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .experiments import (
    CONFIG_HELP,
    diagnose,
    get_spec,
    parse_overrides,
    read_config_file,
    registry,
    run_experiment,
    with_overrides,
)
from .harmonics import build_grid, fmt, lm_index
from .network import TargetFunction
from .relu_spectral import relu_coefficient, relu_coefficient_closed_form, relu_coefficient_quadrature

OUT_ENV = "SPHERE_SPECTRA_OUT"


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def cmd_list(args) -> int:
    print(f"{'name':26s} {'mode':22s} {'init':15s} {'epochs':>7s} {'seed':>4s}  expected")
    for spec in registry(args.paper_scale):
        c = spec.config
        exp = ""
        if spec.expected:
            parts = []
            if spec.expected.max_final_loss is not None:
                parts.append(f"loss<={spec.expected.max_final_loss:g}")
            if spec.expected.fp_labels is not None:
                parts.append("fp in {" + ",".join(sorted(spec.expected.fp_labels)) + "}")
            exp = "; ".join(parts)
        print(f"{spec.name:26s} {c.mode:22s} {c.init:15s} {c.epochs:7d} {c.seed:4d}  {exp}")
    return 0


def cmd_run(args) -> int:
    try:
        spec = get_spec(args.name, args.paper_scale)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    overrides = {}
    try:
        if args.config:
            overrides.update(read_config_file(args.config))
        overrides.update(parse_overrides(args.set or []))
    except (KeyError, ValueError) as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    if args.seed is not None:
        overrides["seed"] = args.seed
    spec = with_overrides(spec, overrides)
    out_root = Path(args.out) if args.out else default_out_root()
    out_dir = out_root / spec.name
    t0 = time.perf_counter()
    result = run_experiment(spec, out_dir, plot_data=not args.no_plot_data)
    print(f"{spec.name}: final loss {result.meta['final_loss']:.4g} "
          f"(best {result.meta['best_loss']:.4g}) in {time.perf_counter() - t0:.1f}s -> {out_dir}")
    for v in result.verdicts:
        print("  " + v.summary())
    if result.failures:
        for f in result.failures:
            print(f"FAILED {f}", file=sys.stderr)
        return 1
    return 0


def cmd_expand_relu(args) -> int:
    L = args.ell_max
    grid = build_grid(L + 2, n_z=L + 2)
    print("ell,exact,closed_form,quadrature,closed_minus_quadrature,ratio_closed_over_quadrature")
    for l in range(L + 1):
        exact = relu_coefficient(l)
        closed = relu_coefficient_closed_form(l)
        quad = relu_coefficient_quadrature(l, grid)
        ratio = closed / quad if abs(quad) > 1e-14 else float("inf")
        print(",".join([str(l), fmt(exact), fmt(closed), fmt(quad), fmt(closed - quad), fmt(ratio)]))
    return 0


def cmd_diagnose(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "harmonics.csv").exists():
        print(f"error: no harmonics.csv in {run_dir}", file=sys.stderr)
        return 2
    report = diagnose(run_dir, args.threshold)
    print(f"final loss {report['final_loss']:.4g}, best {report['best_loss']:.4g}")
    for v in report["verdicts"]:
        print(v.summary())
        print("  convergence epochs: " + ", ".join(
            f"l={l}:{'never' if t == float('inf') else int(t)}" for l, t in v.convergence_epochs.items()
        ))
    if not report["consistent"]:
        print("stored verdict.csv differs from the recomputed verdict", file=sys.stderr)
        return 1
    return 0


def cmd_spectrum(args) -> int:
    try:
        h = TargetFunction.by_name(args.target)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    spec = h.spectrum(args.ell_max)
    ells, js = lm_index(args.ell_max)
    print("ell,j,re,im")
    for l, j, c in zip(ells, js, spec.coeffs):
        print(f"{l},{j},{fmt(c.real)},{fmt(c.imag)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:13s} {v}" for k, v in CONFIG_HELP.items())
    p = argparse.ArgumentParser(
        prog="sphere-spectra",
        description="Frequency-resolved training of bias-free ReLU networks on the sphere.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"config keys for --set / --config:\n{keys}\n\n"
        f"{OUT_ENV} sets the default output root (default ./runs).",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("list", help="show the registry of experiment cases")
    s.add_argument("--paper-scale", action="store_true", help="long trig runs (100k epochs)")
    s.set_defaults(func=cmd_list)

    s = sub.add_parser(
        "run",
        help="run one registry case and write its artifacts",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"config keys:\n{keys}",
    )
    s.add_argument("name")
    s.add_argument("--seed", type=int)
    s.add_argument("--paper-scale", action="store_true", help="100k epochs for trig cases")
    s.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.add_argument("--config", help="flat key=value file applied before --set")
    s.add_argument("--no-plot-data", action="store_true", help="skip the plot/ directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("expand-relu", help="table of cap coefficients c_l")
    s.add_argument("--ell-max", type=int, default=20)
    s.set_defaults(func=cmd_expand_relu)

    s = sub.add_parser("diagnose", help="recompute frequency-ordering verdicts of a run")
    s.add_argument("run_dir")
    s.add_argument("--threshold", type=float, default=0.2)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("spectrum", help="harmonic spectrum of a named target")
    s.add_argument("--target", required=True, help="zero | trig | highfreq")
    s.add_argument("--ell-max", type=int, default=12)
    s.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
