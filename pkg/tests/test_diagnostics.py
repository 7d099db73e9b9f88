import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sphere_spectra.diagnostics import (
    ErrorField,
    EvolutionTerms,
    c_of_h,
    cap_integral_scalar,
    cap_integral_vector,
    classify_fp,
    convergence_epochs,
    decay_fit,
    error_spectrum,
    evolution_terms,
    fixed_mode_d_ell,
    fixed_mode_threshold,
    instantaneous_fp_series,
    read_verdicts,
    write_verdicts,
)
from sphere_spectra.geometry import random_directions
from sphere_spectra.harmonics import build_grid, lm_index
from sphere_spectra.network import (
    ErrorTrace,
    NetworkParams,
    TargetFunction,
    forward,
    gradient,
    gradient_step,
)
from sphere_spectra.relu_spectral import neuron_spectrum, relu_coefficients

NORTH = np.array([0.0, 0.0, 1.0])


class NetworkTarget:
    def __init__(self, params):
        self.params = params

    def __call__(self, tau, phi):
        return forward(self.params, tau, phi)

    def spectrum(self, ell_max, grid=None):
        return error_spectrum(
            NetworkParams(self.params.a, self.params.w), TargetFunction.zero(), ell_max
        )


def _random_params(seed, m=20, mode="fixed_directions"):
    rng = np.random.default_rng(seed)
    return NetworkParams(rng.normal(size=m), random_directions(m, rng), mode)


def _trace_from(fn, ell_max=10, epochs=None, j=0):
    """Synthetic trace with error(l, t) = fn(l, t) on order j, zero elsewhere."""
    epochs = np.arange(0, 200, 2) if epochs is None else epochs
    tr = ErrorTrace(ell_max)
    ells, js = lm_index(ell_max)
    for t in epochs:
        row = np.zeros(ells.size)
        sel = (js == j) & (ells >= max(1, abs(j)))
        row[sel] = fn(ells[sel].astype(float), float(t))
        tr.append(int(t), 1.0, row)
    return tr


# --- error spectrum ---------------------------------------------------------


def test_error_spectrum_vanishes_when_network_equals_target():
    p = _random_params(0)
    assert np.max(np.abs(error_spectrum(p, NetworkTarget(p), 10).coeffs)) < 1e-10


def test_error_spectrum_of_zero_network_is_minus_target():
    p = NetworkParams(np.zeros(3), random_directions(3, 0))
    h = TargetFunction.trig_paper()
    np.testing.assert_allclose(error_spectrum(p, h, 10).coeffs, -h.spectrum(10).coeffs, atol=1e-15)


def test_error_spectrum_single_north_neuron():
    p = NetworkParams([1.0], NORTH[None, :])
    np.testing.assert_allclose(
        error_spectrum(p, TargetFunction.zero(), 10).coeffs,
        neuron_spectrum(NORTH, 10).spectrum.coeffs,
        atol=1e-15,
    )


def test_error_spectrum_grid_method_agrees_with_analytic():
    p = _random_params(3, m=5)
    h = TargetFunction.trig_paper()
    a = error_spectrum(p, h, 8).coeffs
    g = error_spectrum(p, h, 8, build_grid(48, n_z=200, n_phi=400), method="grid").coeffs
    assert np.max(np.abs(a - g)) < 2e-4


# --- cap integrals and C(h) -------------------------------------------------


def test_cap_integral_scalar_reference_values():
    assert cap_integral_scalar(ErrorField.constant(0.0), NORTH) == 0.0
    assert cap_integral_scalar(ErrorField.constant(1.0), NORTH) == pytest.approx(math.pi, abs=1e-12)
    assert cap_integral_scalar(lambda t, p: np.cos(t), NORTH) == pytest.approx(2 * math.pi / 3, abs=1e-12)


def test_cap_integral_scalar_tilted_direction_matches_full_grid():
    w = random_directions(1, 4)[0]
    D = lambda t, p: np.sin(2 * t) * np.cos(p) + 0.3
    from sphere_spectra.geometry import rotation_to

    full = build_grid(40).rotated(rotation_to(w))
    assert cap_integral_scalar(D, w) == pytest.approx(cap_integral_scalar(D, w, full), abs=1e-10)


def test_cap_integral_vector_reference_values():
    np.testing.assert_array_equal(cap_integral_vector(ErrorField.constant(0.0), NORTH), 0.0)
    np.testing.assert_allclose(cap_integral_vector(ErrorField.constant(1.0), NORTH), [0, 0, math.pi], atol=1e-12)


def test_cap_integral_vector_odd_in_phi():
    v = cap_integral_vector(lambda t, p: np.sin(p), NORTH)
    # 1D oracle: y-component = pi * int_0^{pi/2} sin^2(tau) dtau
    oracle_y = math.pi * integrate.quad(lambda t: math.sin(t) ** 2, 0, math.pi / 2)[0]
    assert v[0] == pytest.approx(0.0, abs=1e-12)
    assert v[1] == pytest.approx(oracle_y, abs=1e-10)
    assert v[1] == pytest.approx(math.pi**2 / 4, abs=1e-10)
    assert v[2] == pytest.approx(0.0, abs=1e-12)


def test_c_of_h_reference_values():
    assert c_of_h(TargetFunction.zero()) == 0.0
    assert c_of_h(lambda t, p: np.ones_like(t)) == pytest.approx(math.pi, abs=1e-12)
    assert c_of_h(lambda t, p: np.cos(t)) == pytest.approx(2 * math.pi / 3, abs=1e-12)


# --- fixed-direction theorems -----------------------------------------------


def _aligned(a):
    a = np.asarray(a, dtype=float)
    return NetworkParams(a, np.tile(NORTH, (a.size, 1)))


def test_fixed_mode_d_ell_single_neuron_zero_target():
    d = fixed_mode_d_ell(_aligned([1.0]), TargetFunction.zero(), 12)
    np.testing.assert_allclose(d, 2 * math.pi / 3 * relu_coefficients(12), atol=1e-15)


def test_fixed_mode_d_ell_degenerate_case():
    h = TargetFunction.harmonic_sum([(1.0, 1, 0), (0.5, 2, 0)])
    thr = fixed_mode_threshold(h)
    a = np.full(4, thr / 4)
    assert np.max(np.abs(fixed_mode_d_ell(_aligned(a), h, 12))) < 1e-10


def test_fixed_mode_d_ell_requires_alignment():
    with pytest.raises(ValueError):
        fixed_mode_d_ell(_random_params(0), TargetFunction.zero(), 5)


def test_fixed_mode_d_ell_sign_flips_at_threshold():
    h = TargetFunction.harmonic_sum([(1.0, 1, 0)])
    thr = fixed_mode_threshold(h)
    c = relu_coefficients(12)
    pos = c > 0
    below = fixed_mode_d_ell(_aligned([thr / 2 - 0.05, thr / 2 - 0.05]), h, 12)
    above = fixed_mode_d_ell(_aligned([thr / 2 + 0.05, thr / 2 + 0.05]), h, 12)
    # the sign is shared by every degree with c_l > 0 ...
    assert np.all(below[pos] < 0) and np.all(above[pos] > 0)
    # ... and flips for every degree with c_l != 0
    nz = c != 0
    assert np.all(np.sign(below[nz]) == -np.sign(above[nz]))


def test_fixed_mode_d_ell_agrees_with_cap_moment_of_error():
    # the bracket equals int D max(0, cos tau) dOmega when all neurons are at the pole
    h = TargetFunction.harmonic_sum([(0.8, 1, 0), (0.3, 3, 2)])
    p = _aligned([0.4, -0.1, 0.9])
    D = ErrorField.from_network(p, h)
    bracket = cap_integral_scalar(D, NORTH)
    np.testing.assert_allclose(fixed_mode_d_ell(p, h, 8), p.m * bracket * relu_coefficients(8), atol=1e-12)


# --- evolution terms --------------------------------------------------------


def test_evolution_terms_vanish_at_zero_error():
    p = _random_params(1, mode="trainable_directions")
    t = evolution_terms(p, NetworkTarget(p), 10)
    assert np.max(np.abs(t.C)) < 1e-10 and np.max(np.abs(t.G)) < 1e-10


def test_rotation_term_zero_in_fixed_mode():
    t = evolution_terms(_random_params(2), TargetFunction.trig_paper(), 10)
    assert np.all(t.G == 0)
    assert np.max(np.abs(t.C)) > 0


def test_evolution_terms_single_north_neuron():
    a = np.random.default_rng(5).normal()
    p = NetworkParams([a], NORTH[None, :])
    t = evolution_terms(p, TargetFunction.zero(), 10)
    S = cap_integral_scalar(ErrorField.from_network(p, TargetFunction.zero()), NORTH)
    ells, js = lm_index(10)
    np.testing.assert_allclose(t.C[js == 0], -S * relu_coefficients(10), atol=1e-13)
    assert np.max(np.abs(t.C[js != 0])) == 0.0


def test_polar_neuron_skipped_in_rotation_term():
    W = np.vstack([NORTH, random_directions(2, 3)])
    p = NetworkParams([0.5, 1.0, -1.0], W, "trainable_directions")
    with pytest.warns(RuntimeWarning):
        t = evolution_terms(p, TargetFunction.trig_paper(), 6)
    assert t.skipped == [0]


def test_spectral_bookkeeping_fixed_mode():
    """d/d(lr) of the error spectrum after one step equals 2 C with the grid as dataset."""
    p = _random_params(11)
    h = TargetFunction.trig_paper()
    grid = build_grid(24)
    L = 10
    terms = evolution_terms(p, h, L, grid=grid)
    base = error_spectrum(p, h, L).coeffs
    da, _ = gradient(p, grid.tau, grid.phi, h, grid.weights)
    eps = 1e-6
    step = error_spectrum(gradient_step(p, da, None, eps), h, L).coeffs
    rate = (step - base) / eps
    big = np.abs(terms.C) > 1e-6 * np.abs(terms.C).max()
    np.testing.assert_allclose(rate[big] / terms.C[big], 2.0, rtol=1e-3)


def test_spectral_bookkeeping_trainable_mode():
    p = _random_params(12, m=10, mode="trainable_directions")
    h = TargetFunction.trig_paper()
    grid = build_grid(32)
    L = 8
    terms = evolution_terms(p, h, L, grid=grid)
    base = error_spectrum(p, h, L).coeffs
    da, dw = gradient(p, grid.tau, grid.phi, h, grid.weights)
    eps = 1e-7
    rate = (error_spectrum(gradient_step(p, da, dw, eps), h, L).coeffs - base) / eps
    total = terms.total()
    assert np.max(np.abs(rate - 2 * total)) < 1e-4 * np.max(np.abs(total))


def test_evolution_csv_round_trip(tmp_path):
    t = evolution_terms(_random_params(3, m=5, mode="trainable_directions"), TargetFunction.trig_paper(), 4)
    path = tmp_path / "evolution.csv"
    t.to_csv(path)
    assert path.read_text().splitlines()[0] == "ell,j,C_re,C_im,G_re,G_im"
    back = EvolutionTerms.from_csv(path)
    np.testing.assert_array_equal(back.C, t.C)
    np.testing.assert_array_equal(back.G, t.G)


# --- decay fits -------------------------------------------------------------


def test_decay_fit_recovers_planted_exponent():
    ells = np.arange(0, 30)
    values = np.where(ells > 0, ells.astype(float) ** 3.5 / 2.0**ells, 0.0)
    k, r2 = decay_fit(values, range(6, 25))
    assert k == pytest.approx(3.5, abs=1e-6)
    assert r2 == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-3, 6), st.floats(-5, 5))
@settings(max_examples=30)
def test_decay_fit_recovers_any_planted_exponent(k_true, b):
    ells = np.arange(25)
    values = np.zeros(25)
    values[1:] = 2.0 ** (b - ells[1:]) * ells[1:] ** k_true
    k, _ = decay_fit(values, range(4, 25))
    assert k == pytest.approx(k_true, abs=1e-6)


def test_decay_fit_drops_non_positive_and_needs_four_points():
    values = np.array([0, 1, 0.5, 0, 0.2, 0, 0.08, 0, 0.03])
    k, _ = decay_fit(values, range(1, 9))
    assert np.isfinite(k)
    with pytest.raises(ValueError):
        decay_fit(values, range(3, 9))


# --- verdicts ---------------------------------------------------------------


def test_classify_fp_adheres_when_low_degrees_converge_first():
    v = classify_fp(_trace_from(lambda l, t: np.exp(-t / l)), 0)
    assert v.label == "adheres" and v.witnesses == []


def test_classify_fp_violates_when_order_is_inverted():
    v = classify_fp(_trace_from(lambda l, t: np.exp(-t * l / 100), epochs=np.arange(400)), 0)
    assert v.label == "violates"
    assert v.n_inverted == v.n_pairs


def test_classify_fp_partial():
    # degrees 9 and 10 converge first, the rest in order
    def fn(l, t):
        rate = np.where(l >= 9, 1.0, 1.0 / l)
        return np.exp(-t * rate)

    v = classify_fp(_trace_from(fn), 0)
    assert v.label == "partial"
    assert (2, 9) in v.witnesses and (1, 9) not in v.witnesses


def test_classify_fp_never_converged_pairs_use_final_ratio():
    # nothing reaches 20%; degree 2 decays further than degree 1
    def fn(l, t):
        return 1.0 - 0.1 * (t / 200) * l

    v = classify_fp(_trace_from(fn, ell_max=2), 0)
    assert v.witnesses == [(1, 2)] and v.label == "violates"


def test_classify_fp_vacuous_when_all_negligible():
    v = classify_fp(_trace_from(lambda l, t: 0 * l), 0)
    assert v.label == "adheres" and v.n_pairs == 0


def test_classify_fp_preconditions():
    tr = _trace_from(lambda l, t: np.exp(-t / l), epochs=[0])
    with pytest.raises(ValueError):
        classify_fp(tr, 0)
    with pytest.raises(ValueError):
        classify_fp(_trace_from(lambda l, t: np.exp(-t / l)), 0, threshold=1.5)


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_classify_fp_invariant_under_rescaling(scale, seed):
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0.01, 0.2, size=11)
    tr = _trace_from(lambda l, t: np.exp(-t * rates[l.astype(int)]))
    scaled = ErrorTrace(tr.ell_max)
    for e, L, row in zip(tr.epochs, tr.losses, tr.harmonic_errors):
        scaled.append(e, L, row * scale)
    a, b = classify_fp(tr, 0), classify_fp(scaled, 0)
    assert (a.label, a.witnesses) == (b.label, b.witnesses)


def test_convergence_epochs_order_one():
    tr = _trace_from(lambda l, t: np.exp(-t / l), j=1)
    conv = convergence_epochs(tr, 1)
    assert sorted(conv) == list(range(1, 11))
    assert classify_fp(tr, 1).label == "adheres"


def test_verdict_csv_round_trip(tmp_path):
    verdicts = [classify_fp(_trace_from(lambda l, t: np.exp(-t * l / 10)), 0)]
    write_verdicts(verdicts, tmp_path / "v.csv", tmp_path / "v.txt")
    assert (tmp_path / "v.csv").read_text().splitlines()[0] == "j,label,n_pairs,n_inverted"
    assert read_verdicts(tmp_path / "v.csv") == [
        {"j": 0, "label": "violates", "n_pairs": verdicts[0].n_pairs, "n_inverted": verdicts[0].n_inverted}
    ]
    assert "violates" in (tmp_path / "v.txt").read_text()


def test_instantaneous_fp_series():
    h = TargetFunction.harmonic_sum([(1.0, 1, 0)])
    # zero network: D = -h, and the target's j=0 content decays with degree
    zero = NetworkParams(np.zeros(2), random_directions(2, 0))
    series = instantaneous_fp_series([zero], h, 8)
    assert series.shape == (1,)
    assert 0.0 <= series[0] <= 1.0 or np.isnan(series[0])
