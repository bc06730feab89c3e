"""Predictive recursion on the sphere: sequential mixing-density updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, kernel_matrix
from .sphere import MixingDensityGrid

DEFAULT_GAMMA = 2.0 / 3.0
DEFAULT_N_PERMS = 25


def weight(i, gamma=DEFAULT_GAMMA):
    """Step size w_i = (i+1)^(-gamma) for the i-th update, i >= 1."""
    if i < 1:
        raise ValueError("step index must be >= 1")
    if not 0.5 < gamma <= 1.0:
        raise ValueError("gamma must lie in (1/2, 1]")
    return (i + 1.0) ** -gamma


@dataclass(frozen=True)
class WeightSchedule:
    """Decaying weights (i+1)^(-gamma); gamma in (1/2, 1] gives the
    divergent-sum / square-summable pair required for convergence."""

    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (1/2, 1]")

    def weights(self, n):
        return (np.arange(1, n + 1) + 1.0) ** -self.gamma


@dataclass(frozen=True)
class PREstimate:
    """Output of a predictive recursion run."""

    psi: MixingDensityGrid
    kernel: KernelSpec
    log_marginal: float
    n: int
    permutations: int
    # log f_{i-1}(Y_i) for the identity-order sweep, indexed by position.
    predictive_log_densities: np.ndarray = field(repr=False, default=None)


def _sweep_core(kernel_mat, perms, psi0_values, quad_weights, step_weights):
    """Run PR sweeps for several orderings at once.

    kernel_mat: (n, N) kernel rows per observation; perms: (P, n) index
    orderings. Returns (psi (P, N), logs (P, n)).
    """
    n = perms.shape[1]
    psi = np.tile(psi0_values, (perms.shape[0], 1))
    logs = np.empty(perms.shape, dtype=float)
    for i in range(n):
        rows = kernel_mat[perms[:, i]]
        weighted = rows * psi
        f = weighted @ quad_weights
        if np.any(f <= 0.0) or not np.all(np.isfinite(f)):
            bad = int(np.argmin(f))
            raise ValueError(
                f"predictive density vanished at step {i} (permutation {bad})"
            )
        w_i = step_weights[i]
        psi = (1.0 - w_i) * psi + w_i * weighted / f[:, None]
        psi /= (psi @ quad_weights)[:, None]
        logs[:, i] = np.log(f)
    return psi, logs


def pr_sweep(data, spec: KernelSpec, psi0: MixingDensityGrid,
             schedule: WeightSchedule = WeightSchedule(), kernel_mat=None):
    """One PR pass over the data in the given order.

    psi0 lives on the support grid for the kernel family (full sphere for
    vMF, upper hemisphere for Schladitz). Every intermediate density is
    renormalized under the grid's quadrature rule.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    grid = psi0.grid
    if n == 0:
        return PREstimate(psi=psi0, kernel=spec, log_marginal=0.0, n=0,
                          permutations=1,
                          predictive_log_densities=np.empty(0))
    if kernel_mat is None:
        kernel_mat = kernel_matrix(spec, data, grid)
    perms = np.arange(n)[None, :]
    psi, logs = _sweep_core(kernel_mat, perms, psi0.values, grid.weights,
                            schedule.weights(n))
    psi_grid = MixingDensityGrid.from_unnormalized(grid, psi[0])
    return PREstimate(psi=psi_grid, kernel=spec,
                      log_marginal=float(logs.sum()), n=n, permutations=1,
                      predictive_log_densities=logs[0])


def permutation_average(data, spec: KernelSpec, psi0: MixingDensityGrid,
                        schedule: WeightSchedule = WeightSchedule(),
                        n_perms=DEFAULT_N_PERMS, rng_seed=0, kernel_mat=None):
    """Average PR estimates over random data orderings (Rao-Blackwellization).

    The first permutation is always the identity order, so n_perms=1
    reproduces pr_sweep on the data as given. All sweeps run on the shared
    kernel matrix; the result is deterministic in rng_seed.
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    grid = psi0.grid
    if n == 0:
        return PREstimate(psi=psi0, kernel=spec, log_marginal=0.0, n=0,
                          permutations=n_perms,
                          predictive_log_densities=np.empty(0))
    if kernel_mat is None:
        kernel_mat = kernel_matrix(spec, data, grid)
    rng = np.random.default_rng(rng_seed)
    perms = np.empty((n_perms, n), dtype=np.intp)
    perms[0] = np.arange(n)
    for p in range(1, n_perms):
        perms[p] = rng.permutation(n)
    psi, logs = _sweep_core(kernel_mat, perms, psi0.values, grid.weights,
                            schedule.weights(n))
    psi_mean = MixingDensityGrid.from_unnormalized(grid, psi.mean(axis=0))
    return PREstimate(psi=psi_mean, kernel=spec,
                      log_marginal=float(logs.sum(axis=1).mean()), n=n,
                      permutations=n_perms,
                      predictive_log_densities=logs[0])


def mixture_density(psi: MixingDensityGrid, spec: KernelSpec, y):
    """Mixture density f(y) = integral of k(y | x) psi(x) over the grid.

    y may be a single unit vector or an (m, 3) array.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    rows = kernel_matrix(spec, np.atleast_2d(y), psi.grid)
    out = rows @ (psi.values * psi.grid.weights)
    return float(out[0]) if single else out
