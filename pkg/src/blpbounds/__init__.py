"""Sharp bounds on best linear approximations under partial identification,
estimated through the support function with series first stages and
Bayesian-bootstrap inference."""

__version__ = "0.1.0"

from .basis import BasisSpec, build_basis, evaluate_basis, recommend_k
from .bounds import (BoundingSurface, BoundMethod, IndexGrid, apply_selection_restriction,
                     crossing_diagnostic, fit_bounding_surface, intersect_over_instrument)
from .dataset import Dataset, JitterPlan, jitter_discrete, load_csv, save_csv, validate
from .errors import (BlpError, ConfigError, ConvergenceError, DataError, NumericalError,
                     ParameterError)
from .inference import (BootstrapEnsemble, bayesian_bootstrap, bootstrap_critical_value,
                        pointwise_ci, sign_positivity_test, uniform_band)
from .mc import DGPSpec, coverage_experiment, population_support_oracle, simulate_dgp
from .pipeline import Pipeline, prepare, run_pipeline
from .support import (DirectionSet, SupportSurface, compute_support_surface, project_bounds,
                      reconstruct_polygon_2d)

__all__ = [
    "BasisSpec", "build_basis", "evaluate_basis", "recommend_k",
    "BoundingSurface", "BoundMethod", "IndexGrid", "apply_selection_restriction",
    "crossing_diagnostic", "fit_bounding_surface", "intersect_over_instrument",
    "Dataset", "JitterPlan", "jitter_discrete", "load_csv", "save_csv", "validate",
    "BlpError", "ConfigError", "ConvergenceError", "DataError", "NumericalError",
    "ParameterError", "BootstrapEnsemble", "bayesian_bootstrap", "bootstrap_critical_value",
    "pointwise_ci", "sign_positivity_test", "uniform_band", "DGPSpec", "coverage_experiment",
    "population_support_oracle", "simulate_dgp", "Pipeline", "prepare", "run_pipeline",
    "DirectionSet", "SupportSurface", "compute_support_surface", "project_bounds",
    "reconstruct_polygon_2d", "__version__",
]
