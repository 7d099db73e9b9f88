"""Which degrees a small network learns first.

Trains the zero-target and high-frequency-init cases for a few thousand
epochs and prints the j=0 harmonic error of each degree relative to its
starting value, then the resulting verdict.

    python3 demos/frequency_order.py [epochs]
"""

import sys

import numpy as np

from sphere_spectra.diagnostics import classify_fp
from sphere_spectra.experiments import VERDICT_ELLS, get_spec, with_overrides
from sphere_spectra.network import initialize, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

for name in ("zero_fixed_default", "zero_fixed_highfreq"):
    spec = with_overrides(get_spec(name), {"epochs": epochs, "record_every": max(epochs // 10, 1)})
    params0, info = initialize(spec.config)
    _, trace = train(spec.config, spec.target_function, params0)
    print(f"\n{name}: loss {trace.losses[0]:.3e} -> {trace.final_loss:.3e}")
    print("epoch " + " ".join(f"l={l:<5d}" for l in range(1, 11)))
    initial = np.array([trace.mode_series(l, 0)[0] for l in range(1, 11)])
    for k, e in enumerate(trace.epochs):
        now = np.array([trace.mode_series(l, 0)[k] for l in range(1, 11)])
        ratio = np.where(initial > 1e-8, now / np.where(initial > 0, initial, 1), np.nan)
        print(f"{e:5d} " + " ".join("  -    " if np.isnan(r) else f"{r:7.3f}" for r in ratio))
    print(classify_fp(trace, 0, ells=VERDICT_ELLS).summary())
