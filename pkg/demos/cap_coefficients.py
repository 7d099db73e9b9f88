"""Where the energy of a single ReLU cap lives on the sphere.

Prints the exact cap coefficients next to the closed-form expression and a
quadrature check, then shows that a rotated neuron keeps the same per-degree
energy while spreading it over the orders j.

    python3 demos/cap_coefficients.py
"""

import numpy as np

from sphere_spectra.geometry import random_directions
from sphere_spectra.harmonics import build_grid, lm_index
from sphere_spectra.relu_spectral import (
    neuron_spectrum,
    relu_coefficient,
    relu_coefficient_closed_form,
    relu_coefficient_quadrature,
)

L = 12
grid = build_grid(L + 2)

print(f"{'l':>3} {'exact':>12} {'closed form':>12} {'quadrature':>12}")
for l in range(L + 1):
    print(f"{l:3d} {relu_coefficient(l):12.8f} {relu_coefficient_closed_form(l):12.8f} "
          f"{relu_coefficient_quadrature(l, grid):12.8f}")

# odd degrees above 1 vanish: the cap is x_3 on one half and 0 on the other,
# i.e. (|x_3| + x_3) / 2, an even function plus a degree-one term
print("\nodd l >= 3 are exactly zero; even l alternate in sign")

w = random_directions(1, seed=5)[0]
spec = neuron_spectrum(w, L).spectrum
ells, js = lm_index(L)
print(f"\nneuron along w = {np.round(w, 3)}")
print(f"{'l':>3} {'sum_j |coef|^2':>15} {'c_l^2':>12} {'active orders':>14}")
for l in range(L + 1):
    sel = ells == l
    energy = np.sum(np.abs(spec.coeffs[sel]) ** 2)
    active = int(np.sum(np.abs(spec.coeffs[sel]) > 1e-12))
    print(f"{l:3d} {energy:15.10f} {relu_coefficient(l) ** 2:12.10f} {active:14d}")
