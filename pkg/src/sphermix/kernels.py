"""von Mises-Fisher and Schladitz kernel densities on the unit sphere."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .sphere import SphereGrid, rotation_to

_KAPPA_UNIFORM_CUTOFF = 1e-8
LOG_4PI = np.log(4.0 * np.pi)

DEFAULT_KAPPA_RANGE = (0.1, 500.0)
DEFAULT_BETA_RANGE = (0.01, 0.99)


class KernelFamily(str, enum.Enum):
    VMF = "vmf"
    SCHLADITZ = "schladitz"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its structural parameter and admissible range."""

    family: KernelFamily
    lam: float
    lam_range: tuple = field(default=None)

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if family is KernelFamily.VMF:
            if self.lam < 0:
                raise ValueError("vMF concentration kappa must be >= 0")
            default_range = DEFAULT_KAPPA_RANGE
        else:
            if self.lam <= 0:
                raise ValueError("Schladitz shape beta must be > 0")
            default_range = DEFAULT_BETA_RANGE
        if self.lam_range is None:
            object.__setattr__(self, "lam_range", default_range)

    @property
    def support_theta_max(self):
        """Mixing support: full sphere for vMF, upper hemisphere for Schladitz."""
        return np.pi if self.family is KernelFamily.VMF else np.pi / 2.0

    def with_lambda(self, lam):
        return KernelSpec(self.family, float(lam), self.lam_range)


def vmf_log_normalizer(kappa):
    """log C(kappa) with C = kappa / (4*pi*sinh(kappa)); 1/(4*pi) at kappa=0.

    The order-1/2 Bessel normalizer reduces to this elementary form; computed
    with log1p to stay finite for large kappa.
    """
    kappa = np.asarray(kappa, dtype=float)
    safe = np.where(kappa > _KAPPA_UNIFORM_CUTOFF, kappa, 1.0)
    log_sinh = safe + np.log1p(-np.exp(-2.0 * safe)) - np.log(2.0)
    out = np.where(
        kappa > _KAPPA_UNIFORM_CUTOFF,
        np.log(safe) - LOG_4PI - log_sinh,
        -LOG_4PI,
    )
    return out if out.ndim else float(out)


def vmf_density(y, mu, kappa):
    """vMF density C(kappa) * exp(kappa * mu.y); symmetric in (y, mu)."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    dots = y @ mu if y.ndim > mu.ndim else np.sum(y * mu, axis=-1)
    out = np.exp(vmf_log_normalizer(kappa) + kappa * dots)
    return out if np.ndim(out) else float(out)


def schladitz_scatter(mu, beta):
    """Scatter matrix Sigma with axis mu: Q diag(1, 1, beta^-2) Q^T.

    Q maps (0,0,1) onto mu, so the beta^-2 eigenvalue sits along mu and the
    density mode is at +/- mu for beta < 1.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    q = rotation_to(mu)
    return q @ np.diag([1.0, 1.0, beta**-2]) @ q.T


def schladitz_density(y, mu, beta):
    """Schladitz (axial ACG) density; antipodally symmetric in y.

    With Sigma^-1 = I - (1 - beta^2) mu mu^T the quadratic form reduces to
    q(y) = 1 - (1 - beta^2) (mu.y)^2, so the density is
    beta / (4*pi) * q(y)^(-3/2).
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    dots = y @ mu if y.ndim > mu.ndim else np.sum(y * mu, axis=-1)
    q = 1.0 - (1.0 - beta**2) * dots**2
    out = beta / (4.0 * np.pi) * q**-1.5
    return out if np.ndim(out) else float(out)


def kernel_density(spec: KernelSpec, y, mu):
    if spec.family is KernelFamily.VMF:
        return vmf_density(y, mu, spec.lam)
    return schladitz_density(y, mu, spec.lam)


def kernel_row(spec: KernelSpec, y, grid: SphereGrid):
    """Kernel density k(y | x) at every grid node x, as a vector."""
    return kernel_density(spec, grid.nodes, np.asarray(y, dtype=float))


def kernel_matrix(spec: KernelSpec, data, grid: SphereGrid, dots=None):
    """(n_obs, n_nodes) matrix of k(Y_i | x_j); the hot input of a PR sweep.

    `dots` may carry a precomputed data @ nodes.T product so that repeated
    evaluation at different lambda re-uses the geometry.
    """
    if dots is None:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        dots = data @ grid.nodes.T
    if spec.family is KernelFamily.VMF:
        return np.exp(vmf_log_normalizer(spec.lam) + spec.lam * dots)
    beta = spec.lam
    q = 1.0 - (1.0 - beta**2) * dots**2
    return beta / (4.0 * np.pi) * q**-1.5


def log_kernel_matrix(spec: KernelSpec, data, grid: SphereGrid, dots=None):
    """Elementwise log of :func:`kernel_matrix`, computed stably."""
    if dots is None:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        dots = data @ grid.nodes.T
    if spec.family is KernelFamily.VMF:
        return vmf_log_normalizer(spec.lam) + spec.lam * dots
    beta = spec.lam
    q = 1.0 - (1.0 - beta**2) * dots**2
    return np.log(beta) - LOG_4PI - 1.5 * np.log(q)
