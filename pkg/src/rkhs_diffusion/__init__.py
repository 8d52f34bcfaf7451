"""Spectral estimation of diffusion operators with kernel methods."""

__version__ = "0.1.0"

from .errors import ArgumentError, DivergenceError, FormatError, NumericError, UnsupportedVersionError  # noqa: E402
from .kernel import KernelSpec  # noqa: E402
from .sampling import Dataset, PotentialSpec, langevin_sample, sample_iid  # noqa: E402
from .estimator import (  # noqa: E402
    EstimatorConfig,
    SpectralModel,
    estimated_operator_eigenvalues,
    eval_functions,
    fit,
    fit_dataset,
    load_model,
    save_model,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "DivergenceError",
    "FormatError",
    "NumericError",
    "UnsupportedVersionError",
    "KernelSpec",
    "Dataset",
    "PotentialSpec",
    "langevin_sample",
    "sample_iid",
    "EstimatorConfig",
    "SpectralModel",
    "estimated_operator_eigenvalues",
    "eval_functions",
    "fit",
    "fit_dataset",
    "load_model",
    "save_model",
]
