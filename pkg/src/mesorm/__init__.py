"""Mesoscopic linear-statistics laboratory for deformed random matrices.

Deterministic predictions (free-convolution densities, variance kernels,
bias, closed-form limits) and seeded Monte Carlo verification for
deformed Wigner and sample covariance ensembles.
"""

__version__ = "0.1.0"

from .cltengine import ScaledTestFunction, bump, cosine_window, \
    cubic_spline_hat, finite_bias, finite_variance_Vf, limit_bulk_variance, \
    limit_edge_mean, limit_edge_variance, preset_test_function
from .freeconv import FreeConvolutionModel, SolverError, additive_model, \
    multiplicative_model
from .harness import ExperimentConfig, ExperimentReport, edge_experiment, \
    normality_verdict, run_experiment
from .kernels import KernelContext, KernelPoleError
from .linstat import SpectrumSample, centering_integral, eigenvalues, \
    linear_statistic, local_law_residual, sample_spectrum
from .spectra import AtomicMeasure, EnsembleSpec, ModelAssumptionError, \
    MomentProfile, build_atomic_measure, check_regularity, sample_matrix

__all__ = [
    "__version__",
    "AtomicMeasure",
    "MomentProfile",
    "EnsembleSpec",
    "ModelAssumptionError",
    "build_atomic_measure",
    "check_regularity",
    "sample_matrix",
    "FreeConvolutionModel",
    "SolverError",
    "additive_model",
    "multiplicative_model",
    "KernelContext",
    "KernelPoleError",
    "ScaledTestFunction",
    "bump",
    "cosine_window",
    "cubic_spline_hat",
    "preset_test_function",
    "finite_variance_Vf",
    "finite_bias",
    "limit_bulk_variance",
    "limit_edge_variance",
    "limit_edge_mean",
    "SpectrumSample",
    "eigenvalues",
    "sample_spectrum",
    "linear_statistic",
    "centering_integral",
    "local_law_residual",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "edge_experiment",
    "normality_verdict",
]
