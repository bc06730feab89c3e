"""EM fitting of finite kernel mixtures with BIC model selection (baseline)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernels import (
    DEFAULT_BETA_RANGE,
    DEFAULT_KAPPA_RANGE,
    KernelFamily,
    KernelSpec,
    kernel_density,
    vmf_log_normalizer,
)
from .sphere import cartesian_to_spherical

LOG_4PI = np.log(4.0 * np.pi)


@dataclass(frozen=True)
class FiniteMixture:
    """Finite mixture with a structural parameter shared across components."""

    family: KernelFamily
    mus: np.ndarray = field(repr=False)  # (J, 3)
    weights: np.ndarray = field(repr=False)  # (J,), sums to 1
    lam: float = 1.0
    log_lik: float = np.nan
    bic: float = np.nan
    n_iter: int = 0

    @property
    def n_components(self):
        return self.mus.shape[0]

    def to_dict(self):
        thetas, phis = cartesian_to_spherical(self.mus)
        return {
            "family": KernelFamily(self.family).value,
            "n_components": int(self.n_components),
            "mus": self.mus.tolist(),
            "mus_theta": np.atleast_1d(thetas).tolist(),
            "mus_phi": np.atleast_1d(phis).tolist(),
            "weights": self.weights.tolist(),
            "lambda": float(self.lam),
            "log_lik": float(self.log_lik),
            "bic": float(self.bic),
            "n_iter": int(self.n_iter),
        }


def finite_mixture_density(fit: FiniteMixture, y):
    """Mixture density sum_j w_j k(y | mu_j) at y (vector or (m, 3) array)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    spec = KernelSpec(fit.family, fit.lam)
    out = np.zeros(ys.shape[0])
    for w, mu in zip(fit.weights, fit.mus):
        out += w * kernel_density(spec, ys, mu)
    return float(out[0]) if single else out


def _log_component_matrix(family, data, mus, lam):
    """(n, J) log kernel densities."""
    dots = data @ mus.T
    if family is KernelFamily.VMF:
        return vmf_log_normalizer(lam) + lam * dots
    q = 1.0 - (1.0 - lam**2) * dots**2
    return np.log(lam) - LOG_4PI - 1.5 * np.log(q)


def _kappa_from_rbar(rbar, lam_range):
    # standard S^2 inversion approximation of A(kappa) = rbar
    rbar = min(max(rbar, 0.0), 1.0 - 1e-12)
    kappa = rbar * (3.0 - rbar**2) / (1.0 - rbar**2)
    return float(np.clip(kappa, lam_range[0], lam_range[1]))


def _vmf_m_step(data, resp, lam_range):
    weights = resp.mean(axis=0)
    resultants = resp.T @ data  # (J, 3)
    norms = np.linalg.norm(resultants, axis=1)
    mus = resultants / np.where(norms > 0, norms, 1.0)[:, None]
    rbar = norms.sum() / data.shape[0]
    kappa = _kappa_from_rbar(rbar, lam_range)
    return mus, weights, kappa


def _tyler_scatter(data, resp_j, sigma, n_inner=2, tol=1e-8):
    # warm-started across EM iterations, so a couple of inner passes suffice
    """Responsibility-weighted Tyler fixed point, trace-normalized to 3."""
    total = resp_j.sum()
    for _ in range(n_inner):
        q = np.einsum("ij,jk,ik->i", data, np.linalg.inv(sigma), data)
        u = resp_j / np.maximum(q, 1e-300)
        new = 3.0 * (data.T * u) @ data / total
        new *= 3.0 / np.trace(new)
        if np.max(np.abs(new - sigma)) < tol:
            sigma = new
            break
        sigma = new
    return sigma


def _schladitz_project(sigma):
    """Nearest (mu, beta) parameters for a Tyler scatter.

    The Schladitz scatter has eigenvalues (s, s, s/beta^2) with the large
    one along mu; mu is reported in the upper hemisphere.
    """
    evals, evecs = np.linalg.eigh(sigma)
    mu = evecs[:, -1]
    if mu[2] < 0 or (mu[2] == 0 and mu[0] < 0):
        mu = -mu
    s = 0.5 * (evals[0] + evals[1])
    beta = float(np.sqrt(max(s, 1e-300) / max(evals[-1], 1e-300)))
    return mu, beta


def _schladitz_m_step(data, resp, sigmas, lam_range):
    weights = resp.mean(axis=0)
    mus = np.empty((resp.shape[1], 3))
    betas = np.empty(resp.shape[1])
    for j in range(resp.shape[1]):
        sigmas[j] = _tyler_scatter(data, resp[:, j], sigmas[j])
        mus[j], betas[j] = _schladitz_project(sigmas[j])
    mass = resp.sum(axis=0)
    beta = float(np.clip(np.average(betas, weights=mass),
                         lam_range[0], lam_range[1]))
    return mus, weights, beta, sigmas


def _seed_locations(data, n_components, rng, family):
    idx = rng.choice(data.shape[0], size=n_components, replace=False)
    mus = data[idx].copy()
    if family is KernelFamily.SCHLADITZ:
        flip = mus[:, 2] < 0
        mus[flip] *= -1.0
    return mus


def em_fit(data, family, n_components, init_mus=None, init_lam=None,
           max_iter=500, tol=1e-8, rng_seed=0, lam_range=None):
    """Fit a J-component mixture with a shared structural parameter by EM.

    Seeding uses randomly chosen observations unless init_mus is supplied.
    The observed-data log likelihood is guaranteed non-decreasing across the
    recorded iterations: if an M-step projection ever decreases it (possible
    for the Schladitz scatter projection), the previous parameters are kept
    and iteration stops.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    family = KernelFamily(family)
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if lam_range is None:
        lam_range = (DEFAULT_KAPPA_RANGE if family is KernelFamily.VMF
                     else DEFAULT_BETA_RANGE)
    rng = np.random.default_rng(rng_seed)
    mus = (np.atleast_2d(np.asarray(init_mus, dtype=float))
           if init_mus is not None
           else _seed_locations(data, n_components, rng, family))
    weights = np.full(mus.shape[0], 1.0 / mus.shape[0])
    lam = float(init_lam) if init_lam is not None else (
        10.0 if family is KernelFamily.VMF else 0.3)
    lam = float(np.clip(lam, lam_range[0], lam_range[1]))
    sigmas = [np.eye(3) for _ in range(mus.shape[0])]

    log_lik = -np.inf
    it = 0
    for it in range(1, max_iter + 1):
        log_comp = _log_component_matrix(family, data, mus, lam)
        log_joint = log_comp + np.log(np.maximum(weights, 1e-300))
        log_f = logsumexp(log_joint, axis=1)
        new_log_lik = float(log_f.sum())
        if new_log_lik < log_lik - 1e-8:
            break  # projection overshoot; keep previous parameters
        improved = new_log_lik - log_lik
        log_lik = new_log_lik
        if improved < tol:
            break
        resp = np.exp(log_joint - log_f[:, None])

        mass = resp.sum(axis=0)
        keep = mass >= 1e-8 * n
        if not np.all(keep):
            warnings.warn(f"pruning {np.count_nonzero(~keep)} empty component(s)")
            resp = resp[:, keep]
            resp /= resp.sum(axis=1, keepdims=True)
            mus = mus[keep]
            sigmas = [s for s, k in zip(sigmas, keep) if k]

        if family is KernelFamily.VMF:
            new_mus, new_weights, new_lam = _vmf_m_step(data, resp, lam_range)
        else:
            new_mus, new_weights, new_lam, sigmas = _schladitz_m_step(
                data, resp, sigmas, lam_range)

        # accept only ascent steps so the recorded likelihood is monotone
        cand_comp = _log_component_matrix(family, data, new_mus, new_lam)
        cand = float(logsumexp(
            cand_comp + np.log(np.maximum(new_weights, 1e-300)), axis=1).sum())
        if cand < log_lik - 1e-8:
            break
        mus, weights, lam = new_mus, new_weights, new_lam

    bic = -2.0 * log_lik + 3.0 * mus.shape[0] * np.log(n)
    return FiniteMixture(family=family, mus=mus, weights=weights, lam=lam,
                         log_lik=log_lik, bic=float(bic), n_iter=it)


def select_bic(data, family, j_max=10, restarts=5, rng_seed=0, **em_kwargs):
    """Fit J = 1..j_max with several random seedings; keep the lowest BIC."""
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    best = None
    failures = []
    seed_stream = np.random.default_rng(rng_seed).integers(0, 2**31, size=(j_max, restarts))
    for j in range(1, j_max + 1):
        for r in range(restarts):
            try:
                fit = em_fit(data, family, j, rng_seed=int(seed_stream[j - 1, r]),
                             **em_kwargs)
            except (ValueError, np.linalg.LinAlgError) as exc:
                failures.append((j, r, str(exc)))
                continue
            if best is None or fit.bic < best.bic:
                best = fit
    if best is None:
        raise RuntimeError(f"all EM fits failed: {failures[:3]}")
    return best
