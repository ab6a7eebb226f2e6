"""Penalized smoothing-spline estimation and multiplier-bootstrap inference
for the partially linear single-index model ``Y = g(X'beta) + Z'gamma + eps``."""

from .eigensystem import (EigenSystem, Interval, KernelHandle, apply_m_lambda,
                          build_eigensystem, estimate_density, eval_basis, kernel_eval,
                          kernel_matrix)
from .exceptions import (BootstrapInstabilityError, DataError, DegenerateSampleError,
                         DomainError, InitializationError, NumericalError, PathDegenerateError,
                         SimSplineError, SingularDesignError)
from .inference import (BandResult, BootstrapConfig, BootstrapSample, JointTestResult,
                        RelevantTestResult, band_from_sample, bootstrap_band, draw_multipliers,
                        duality_test, empirical_quantile, joint_from_sample, joint_test,
                        pointwise_interval, relevant_from_sample, relevant_sweep, relevant_test,
                        run_bootstrap, sweep_from_sample)
from .model import (Dataset, FitConfig, SingleIndexFit, Truth, beta_path, fit, gcv_score,
                    grad_beta, l2_risk, loss, predict, predict_g, solve_ridge, tau_bounds,
                    update_beta)
from .serialize import load_fit, save_fit

__version__ = "0.1.0"

__all__ = [
    "BandResult", "BootstrapConfig", "BootstrapSample", "BootstrapInstabilityError", "DataError", "Dataset",
    "DegenerateSampleError", "DomainError", "EigenSystem", "FitConfig", "InitializationError",
    "Interval", "JointTestResult", "KernelHandle", "NumericalError", "PathDegenerateError",
    "RelevantTestResult", "SimSplineError", "SingleIndexFit", "SingularDesignError", "Truth",
    "apply_m_lambda", "band_from_sample", "beta_path", "bootstrap_band", "build_eigensystem", "draw_multipliers",
    "duality_test", "empirical_quantile", "estimate_density", "eval_basis", "fit",
    "gcv_score", "grad_beta", "joint_from_sample", "joint_test", "kernel_eval", "kernel_matrix", "l2_risk",
    "load_fit", "loss", "pointwise_interval", "predict", "predict_g", "relevant_sweep",
    "relevant_from_sample", "relevant_test", "run_bootstrap", "save_fit", "solve_ridge",
    "sweep_from_sample", "tau_bounds", "update_beta",
]
