"""Invariant-measure sampling for semilinear stochastic PDEs.

The dynamics integrated here is the preconditioned gradient flow whose
equilibrium is a Gibbs measure absolutely continuous with respect to a
trace-class Gaussian; preconditioning trades spatial stiffness for
temporal regularity, which is what lets simple one-step schemes reach
first and (postprocessed) second order for equilibrium averages.
"""

from .analytics import (
    DerivativeBundle,
    gaussian_phi_expectation,
    lm_variance_factors,
    order2_condition_residual,
    pie_variance_factors,
    rk2_variance_factor,
    theta_variance_factor,
)
from .harness import (
    ConvergenceReport,
    CoupledComparison,
    EnsembleEstimate,
    ReferenceValue,
    alpha_sweep,
    coupled_bias_comparison,
    dt_sweep,
    reference_value,
    run_ensemble,
    scheme_family,
)
from .model import CATALOG, Nonlinearity, get_nonlinearity, nemytskii, potential
from .rng import NoiseStream, normals
from .schemes import SchemeSpec, StepOutput, make_scheme, run_trajectory
from .spectral import Preconditioner, SpectralSpace, make_preconditioner, make_space

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "ConvergenceReport",
    "CoupledComparison",
    "DerivativeBundle",
    "EnsembleEstimate",
    "NoiseStream",
    "Nonlinearity",
    "Preconditioner",
    "ReferenceValue",
    "SchemeSpec",
    "SpectralSpace",
    "StepOutput",
    "alpha_sweep",
    "coupled_bias_comparison",
    "dt_sweep",
    "gaussian_phi_expectation",
    "get_nonlinearity",
    "lm_variance_factors",
    "make_preconditioner",
    "make_scheme",
    "make_space",
    "nemytskii",
    "normals",
    "order2_condition_residual",
    "pie_variance_factors",
    "potential",
    "reference_value",
    "rk2_variance_factor",
    "run_ensemble",
    "run_trajectory",
    "scheme_family",
    "theta_variance_factor",
]
