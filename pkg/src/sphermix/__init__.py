"""Smooth mixing-density estimation for directional data on the unit sphere.

Core pipeline: predictive recursion (PR) over a spherical quadrature grid,
structural-parameter estimation by PR marginal likelihood, Bayes-factor
goodness-of-fit testing, EM/BIC finite-mixture baseline, and mode-based
clustering.
"""

__version__ = "0.1.0"

from .kernels import KernelFamily, KernelSpec, schladitz_density, vmf_density
from .pr import PREstimate, WeightSchedule, mixture_density, permutation_average, pr_sweep
from .sphere import (
    MixingDensityGrid,
    SphereGrid,
    build_grid,
    cartesian_to_spherical,
    quadrature,
    rotation_to,
    spherical_to_cartesian,
)
from .structural import MarginalLikelihoodCurve, maximize_marginal, pr_marginal_loglik

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "MarginalLikelihoodCurve",
    "MixingDensityGrid",
    "PREstimate",
    "SphereGrid",
    "WeightSchedule",
    "build_grid",
    "cartesian_to_spherical",
    "maximize_marginal",
    "mixture_density",
    "permutation_average",
    "pr_marginal_loglik",
    "pr_sweep",
    "quadrature",
    "rotation_to",
    "schladitz_density",
    "spherical_to_cartesian",
    "vmf_density",
]
