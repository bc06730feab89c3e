"""Mode extraction from a mixing-density estimate and cluster assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelFamily, KernelSpec, vmf_log_normalizer
from .sphere import MixingDensityGrid


@dataclass(frozen=True)
class ClusterModel:
    """Local maxima of the mixing density plus their attributed mass."""

    modes: np.ndarray = field(repr=False)  # (J, 3) unit vectors
    mode_masses: np.ndarray = field(repr=False)
    kernel: KernelSpec = None

    @property
    def n_modes(self):
        return self.modes.shape[0]


def find_modes(psi: MixingDensityGrid, rel_threshold=0.2, kernel=None):
    """Locate grid-local maxima of the mixing density above a relative cutoff.

    A node is a mode iff it dominates its 8 lattice neighbors (phi wraps
    around, theta does not) and exceeds rel_threshold times the global
    maximum. Exactly-tied plateaus (which arise when a symmetric density is
    sampled on the symmetric grid) yield a single mode: a node must beat
    lexicographically-earlier neighbors strictly and later ones weakly.
    Each node's probability mass is attributed to the nearest mode.
    """
    if not 0.0 < rel_threshold < 1.0:
        raise ValueError("rel_threshold must lie in (0, 1)")
    grid = psi.grid
    v = psi.values.reshape(grid.n_theta, grid.n_phi)
    is_max = np.ones_like(v, dtype=bool)
    for dt in (-1, 0, 1):
        for dp in (-1, 0, 1):
            if dt == 0 and dp == 0:
                continue
            shifted = np.roll(v, -dp, axis=1)
            if dt == -1:
                neighbor = np.vstack([np.full((1, grid.n_phi), -np.inf),
                                      shifted[:-1]])
            elif dt == 1:
                neighbor = np.vstack([shifted[1:],
                                      np.full((1, grid.n_phi), -np.inf)])
            else:
                neighbor = shifted
            if (dt, dp) < (0, 0):
                is_max &= v > neighbor
            else:
                is_max &= v >= neighbor
    is_max &= v > rel_threshold * v.max()
    mode_idx = np.flatnonzero(is_max.ravel())
    if mode_idx.size == 0:
        raise ValueError("no modes above threshold")
    modes = grid.nodes[mode_idx]

    # nearest-mode attribution of each cell's mass (great-circle distance)
    cos_dist = grid.nodes @ modes.T
    nearest = np.argmax(cos_dist, axis=1)
    masses = np.zeros(mode_idx.size)
    np.add.at(masses, nearest, psi.values * grid.weights)
    return ClusterModel(modes=modes, mode_masses=masses, kernel=kernel)


def assign_clusters(data, model: ClusterModel, lam=None):
    """Maximum-posterior labels: argmax_j mass_j * k(y | mode_j).

    Ties break to the lowest mode index. lam overrides the structural
    parameter recorded in the model's kernel spec.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    spec = model.kernel
    if lam is not None:
        spec = spec.with_lambda(lam)
    if spec is None:
        raise ValueError("no kernel spec available for assignment")
    dots = data @ model.modes.T
    if spec.family is KernelFamily.VMF:
        log_k = vmf_log_normalizer(spec.lam) + spec.lam * dots
    else:
        beta = spec.lam
        q = 1.0 - (1.0 - beta**2) * dots**2
        log_k = np.log(beta) - np.log(4.0 * np.pi) - 1.5 * np.log(q)
    scores = log_k + np.log(np.maximum(model.mode_masses, 1e-300))
    return np.argmax(scores, axis=1)
