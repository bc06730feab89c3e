"""PR marginal likelihood over the structural parameter and its maximization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, kernel_matrix
from .pr import WeightSchedule, permutation_average
from .sphere import MixingDensityGrid, build_grid

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

DEFAULT_OPT_BUDGET = 40
DEFAULT_LAMBDA_TOL = 1e-3


@dataclass(frozen=True)
class MarginalLikelihoodCurve:
    """Record of a 1-D marginal-likelihood search."""

    lambdas: np.ndarray = field(repr=False)
    log_liks: np.ndarray = field(repr=False)
    argmax: float
    argmax_log_lik: float
    boundary_solution: bool = False


def pr_marginal_loglik(data, spec: KernelSpec, psi0: MixingDensityGrid,
                       schedule: WeightSchedule = WeightSchedule(),
                       n_perms=1, rng_seed=0, kernel_mat=None):
    """log of the running product of PR predictive densities at fixed lambda.

    Identical (by construction) to the log_marginal field of
    permutation_average with the same arguments.
    """
    est = permutation_average(data, spec, psi0, schedule=schedule,
                              n_perms=n_perms, rng_seed=rng_seed,
                              kernel_mat=kernel_mat)
    return est.log_marginal


def golden_section_maximize(f, lo, hi, tol=DEFAULT_LAMBDA_TOL, max_evals=DEFAULT_OPT_BUDGET):
    """Derivative-free bounded 1-D maximization; returns (x, fx, history).

    tol is relative to the interval midpoint; history is the list of all
    (x, f(x)) evaluations including the bracket endpoints.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    history = []

    def eval_at(x):
        fx = f(x)
        history.append((x, fx))
        return fx

    f_lo = eval_at(lo)
    f_hi = eval_at(hi)
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    f_c = eval_at(c)
    f_d = eval_at(d)
    while len(history) < max_evals and (b - a) > tol * max(abs(a + b) / 2.0, tol):
        if f_c >= f_d:
            b, d, f_d = d, c, f_c
            c = b - _INV_GOLDEN * (b - a)
            f_c = eval_at(c)
        else:
            a, c, f_c = c, d, f_d
            d = a + _INV_GOLDEN * (b - a)
            f_d = eval_at(d)
    xs, fs = zip(*history)
    best = int(np.argmax(fs))
    return xs[best], fs[best], history


def maximize_marginal(data, spec: KernelSpec, lambda_range=None,
                      schedule: WeightSchedule = WeightSchedule(),
                      n_perms=1, rng_seed=0, grid=None,
                      tol=DEFAULT_LAMBDA_TOL, budget=DEFAULT_OPT_BUDGET,
                      log_scale=True):
    """Maximize the PR marginal likelihood over the structural parameter.

    Golden-section search on a bounded interval (in log-lambda by default;
    the admissible ranges span decades). A single RNG seed is shared across
    all lambda evaluations so the objective is deterministic in lambda.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if lambda_range is None:
        lambda_range = spec.lam_range
    lo, hi = lambda_range
    if not 0 < lo < hi:
        raise ValueError("invalid lambda range")
    if grid is None:
        grid = _default_support_grid(spec)
    psi0 = MixingDensityGrid.uniform(grid)
    dots = data @ grid.nodes.T  # geometry shared across lambda evaluations

    def objective(t):
        lam = float(np.exp(t)) if log_scale else float(t)
        k_mat = kernel_matrix(spec.with_lambda(lam), data, grid, dots=dots)
        return pr_marginal_loglik(data, spec.with_lambda(lam), psi0,
                                  schedule=schedule, n_perms=n_perms,
                                  rng_seed=rng_seed, kernel_mat=k_mat)

    if log_scale:
        t_best, f_best, history = golden_section_maximize(
            objective, np.log(lo), np.log(hi), tol=tol, max_evals=budget)
        lambdas = np.exp([t for t, _ in history])
        lam_best = float(np.exp(t_best))
    else:
        lam_best, f_best, history = golden_section_maximize(
            objective, lo, hi, tol=tol, max_evals=budget)
        lambdas = np.array([t for t, _ in history])
    log_liks = np.array([v for _, v in history])
    boundary = (lam_best <= lo * (1.0 + 10 * tol)) or (lam_best >= hi * (1.0 - 10 * tol))
    return MarginalLikelihoodCurve(lambdas=lambdas, log_liks=log_liks,
                                   argmax=lam_best,
                                   argmax_log_lik=float(f_best),
                                   boundary_solution=bool(boundary))


def _default_support_grid(spec: KernelSpec):
    theta_max = spec.support_theta_max
    n_theta = 60 if theta_max > np.pi / 2 + 1e-12 else 30
    return build_grid(theta_max=theta_max, n_theta=n_theta, n_phi=120)
