"""GMMP / P1-Galerkin solver for the time-fractional stochastic heat equation."""

__version__ = "0.1.0"

from .fem import Mesh1D, assemble, generalized_eigs, l2_project, solve_shifted  # noqa: E402
from .gmmp import GmmpWeights, caputo_apply, make_weights  # noqa: E402
from .noise import CovarianceSpec, SigmaSpec, WienerPath, coarsen, noise_load, sample_path  # noqa: E402
from .oracle import SpectralField, additive_convolution, exact_deterministic  # noqa: E402
from .special_functions import gamma_ratio, mittag_leffler  # noqa: E402
from .stepper import InitialCondition, SchemeConfig, init, run, step, strong_error_at_T  # noqa: E402

__all__ = [
    "CovarianceSpec", "GmmpWeights", "InitialCondition", "Mesh1D", "SchemeConfig",
    "SigmaSpec", "SpectralField", "WienerPath", "additive_convolution", "assemble",
    "caputo_apply", "coarsen", "exact_deterministic", "gamma_ratio", "generalized_eigs",
    "init", "l2_project", "make_weights", "mittag_leffler", "noise_load", "run",
    "sample_path", "solve_shifted", "step", "strong_error_at_T",
]
