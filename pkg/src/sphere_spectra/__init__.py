"""Spherical-harmonic analysis of bias-free shallow ReLU networks on S^2."""

from .diagnostics import (
    ErrorField,
    EvolutionTerms,
    FpVerdict,
    c_of_h,
    cap_integral_scalar,
    cap_integral_vector,
    classify_fp,
    decay_fit,
    error_spectrum,
    evolution_terms,
    fixed_mode_d_ell,
)
from .geometry import SpherePoint, from_cartesian, rotation_to, sample_uniform, to_cartesian
from .harmonics import HarmonicSpectrum, SphereGrid, build_grid, evaluate, project, sph_harm
from .network import (
    ErrorTrace,
    NetworkParams,
    TargetFunction,
    TrainingConfig,
    TrainingDiverged,
    forward,
    gradient,
    init_default,
    init_high_frequency,
    loss,
    renormalize_directions,
    train,
)
from .relu_spectral import (
    neuron_spectrum,
    neuron_spectrum_grad,
    relu_coefficient,
    relu_coefficient_closed_form,
    relu_coefficient_quadrature,
    wigner_d_j0,
)

__version__ = "0.1.0"

__all__ = [
    "ErrorField",
    "ErrorTrace",
    "EvolutionTerms",
    "FpVerdict",
    "HarmonicSpectrum",
    "NetworkParams",
    "SphereGrid",
    "SpherePoint",
    "TargetFunction",
    "TrainingConfig",
    "TrainingDiverged",
    "build_grid",
    "c_of_h",
    "cap_integral_scalar",
    "cap_integral_vector",
    "classify_fp",
    "decay_fit",
    "error_spectrum",
    "evaluate",
    "evolution_terms",
    "fixed_mode_d_ell",
    "forward",
    "from_cartesian",
    "gradient",
    "init_default",
    "init_high_frequency",
    "loss",
    "neuron_spectrum",
    "neuron_spectrum_grad",
    "project",
    "relu_coefficient",
    "relu_coefficient_closed_form",
    "relu_coefficient_quadrature",
    "renormalize_directions",
    "rotation_to",
    "sample_uniform",
    "sph_harm",
    "to_cartesian",
    "train",
    "wigner_d_j0",
]
