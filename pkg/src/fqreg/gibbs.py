"""Blocked Gibbs sampler for Bayesian functional quantile regression.

Model, for curve ``i`` at grid location ``l``::

    y_i(t_l) = x_i' B(t_l) + theta * xi_il + sqrt(psi_scale * sigma_l * xi_il) * z_il
    xi_il ~ Exp(mean sigma_l),   B = B* Phi
    B*_ajh ~ N(0, lambda_ajh^2 psi_aj^2)

Each iteration runs, in this order:

1. ``sigma_l`` given B, with ``xi`` integrated out (inverse gamma);
2. ``1/xi_il`` given B and sigma (inverse Gaussian);
3. ``B*_a`` for each covariate in ascending order (multivariate normal);
4. local and global shrinkage scales and their auxiliaries;

and then stores ``B = B* Phi``.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.linalg import blas, lapack

from ._kernels import covariate_stats, latent_xi
from .data import FunctionalDataset, check_curves, check_design
from .dists import (
    QuantileLevel, RngStream, check_loss, cholesky_with_jitter,
    sample_inverse_gamma, sample_inverse_gaussian,
)
from .exceptions import ConfigError, DataError, NumericalError
from .wavelet import BasisTransform, WaveletSpec, build_basis

__all__ = [
    "PriorSpec",
    "MCMCSpec",
    "ModelSpec",
    "SamplerState",
    "PosteriorDraws",
    "GibbsSampler",
    "init_state",
    "run_chain",
    "run_chains",
    "merge_draws",
    "geweke_z",
]

log = logging.getLogger(__name__)

RESID_FLOOR = 1e-10
SCALE_FLOOR = 1e-12
SIGMA_INIT_FLOOR = 1e-6
SHRINK_BOUNDS = (1e-12, 1e12)

PRIOR_FAMILIES = ("horseshoe", "lasso", "ridge")


@dataclass(frozen=True)
class PriorSpec:
    """Global-local shrinkage prior on the basis coefficients.

    Parameters
    ----------
    family : {"horseshoe", "lasso", "ridge"}
        Local-scale law: half-Cauchy, ``lambda^2 ~ Exp(rate 1/2)``, or
        ``lambda == 1``.
    global_scale : float or "vague"
        Scale ``s_a`` of the half-Cauchy prior on each group scale
        ``psi_aj``. ``"vague"`` puts a half-Cauchy(0, 1) hyperprior on
        ``s_a``.
    fixed_psi : float, optional
        Hold every ``psi_aj`` at this value instead of sampling it.
    """

    family: str = "horseshoe"
    global_scale: float | str = "vague"
    fixed_psi: float | None = None

    def __post_init__(self):
        if self.family not in PRIOR_FAMILIES:
            raise ConfigError(f"unknown prior family {self.family!r}")
        if self.global_scale != "vague":
            try:
                s = float(self.global_scale)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"global_scale must be 'vague' or a positive number, "
                    f"got {self.global_scale!r}") from None
            if not s > 0:
                raise ConfigError("global_scale must be positive")
            object.__setattr__(self, "global_scale", s)
        if self.fixed_psi is not None and not float(self.fixed_psi) > 0:
            raise ConfigError("fixed_psi must be positive")


@dataclass(frozen=True)
class MCMCSpec:
    n_iter: int = 8000
    burn_in: int = 2000
    thin: int = 3
    n_chains: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise ConfigError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")

    @property
    def n_keep(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(frozen=True)
class ModelSpec:
    tau: QuantileLevel
    basis: WaveletSpec = field(default_factory=WaveletSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    sigma_prior: tuple = (0.01, 0.01)
    mcmc: MCMCSpec = field(default_factory=MCMCSpec)

    def __post_init__(self):
        if not isinstance(self.tau, QuantileLevel):
            object.__setattr__(self, "tau", QuantileLevel(self.tau))
        a0, b0 = self.sigma_prior
        if not (a0 > 0 and b0 > 0):
            raise ConfigError("sigma prior hyperparameters must be positive")

    def to_dict(self):
        return {
            "tau": self.tau.tau,
            "basis": {"family": self.basis.family, "order": self.basis.order,
                      "levels": self.basis.levels},
            "prior": {"family": self.prior.family,
                      "global_scale": self.prior.global_scale,
                      "fixed_psi": self.prior.fixed_psi},
            "sigma_prior": list(self.sigma_prior),
            "mcmc": {"n_iter": self.mcmc.n_iter, "burn_in": self.mcmc.burn_in,
                     "thin": self.mcmc.thin, "n_chains": self.mcmc.n_chains,
                     "seed": self.mcmc.seed},
        }


@dataclass
class SamplerState:
    """Current values of one chain. Scale parameters are stored squared."""

    b_star: np.ndarray      # (p, K)
    b: np.ndarray           # (p, T), kept equal to b_star @ phi
    sigma: np.ndarray       # (T,)
    xi: np.ndarray          # (N, T)
    lambda2: np.ndarray     # (p, K)
    nu: np.ndarray          # (p, K)
    psi2: np.ndarray        # (p, J+1)
    gamma: np.ndarray       # (p, J+1)
    s2: np.ndarray          # (p,)
    kappa: np.ndarray       # (p,)
    jitter_retries: int = 0

    @property
    def lambda_local(self):
        return np.sqrt(self.lambda2)

    @property
    def psi_global(self):
        return np.sqrt(self.psi2)

    def copy(self):
        return SamplerState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                               for k, v in vars(self).items()})


@dataclass
class PosteriorDraws:
    """Retained draws of one or more chains.

    Attributes
    ----------
    b_draws : ndarray, shape (G, p, T)
    sigma_draws : ndarray, shape (G, T)
    tau : float
    meta : dict
        Spec, seeds, chain ids, jitter retries and wall time.
    b_star_draws : ndarray, shape (G, p, K), optional
    """

    b_draws: np.ndarray
    sigma_draws: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)
    b_star_draws: np.ndarray | None = None

    @property
    def n_draws(self):
        return self.b_draws.shape[0]

    def geweke(self, first=0.1, last=0.5):
        """Geweke z-scores for log sigma(t_l) and for ||B_a||_2 per covariate."""
        return {
            "log_sigma": np.array([geweke_z(np.log(s), first, last)
                                   for s in self.sigma_draws.T]),
            "b_norm": np.array([geweke_z(np.linalg.norm(self.b_draws[:, a], axis=1),
                                         first, last)
                                for a in range(self.b_draws.shape[1])]),
        }


def _spectral_var0(x):
    # batch-means estimate of the long-run variance (spectral density at 0)
    n = x.size
    n_batch = max(2, int(np.sqrt(n)))
    size = n // n_batch
    if size < 1:
        return np.var(x, ddof=1) if n > 1 else 0.0
    means = x[: size * n_batch].reshape(n_batch, size).mean(axis=1)
    return size * np.var(means, ddof=1)


def geweke_z(trace, first=0.1, last=0.5):
    """Geweke convergence z-score comparing early and late trace segments."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    a = x[: max(2, int(first * n))]
    b = x[n - max(2, int(last * n)):]
    var = _spectral_var0(a) / a.size + _spectral_var0(b) / b.size
    if var <= 0:
        return 0.0
    return float((a.mean() - b.mean()) / np.sqrt(var))


def init_state(data, design, spec, basis=None):
    """Deterministic starting point: B* = 0, sigma from a robust spread, scales 1.

    ``sigma_l`` starts at the median absolute deviation of ``y(t_l)`` about
    its empirical tau-quantile, floored at 1e-6; ``xi`` starts at sigma.
    """
    y = data.y if isinstance(data, FunctionalDataset) else check_curves(data)
    X = check_design(design, n_rows=y.shape[0])
    if not np.all(np.isfinite(y)):
        raise DataError("curves contain non-finite values")
    if basis is None:
        basis = build_basis(y.shape[1], spec.basis)
    N, T = y.shape
    p, K, J1 = X.shape[1], basis.n_basis, basis.n_groups
    q = np.quantile(y, spec.tau.tau, axis=0)
    sigma = np.maximum(np.median(np.abs(y - q), axis=0), SIGMA_INIT_FLOOR)
    psi0 = 1.0 if spec.prior.fixed_psi is None else float(spec.prior.fixed_psi)
    s0 = 1.0 if spec.prior.global_scale == "vague" else float(spec.prior.global_scale)
    return SamplerState(
        b_star=np.zeros((p, K)),
        b=np.zeros((p, T)),
        sigma=sigma,
        xi=np.tile(sigma, (N, 1)),
        lambda2=np.ones((p, K)),
        nu=np.ones((p, K)),
        psi2=np.full((p, J1), psi0 ** 2),
        gamma=np.ones((p, J1)),
        s2=np.full(p, s0 ** 2),
        kappa=np.ones(p),
    )


class GibbsSampler:
    """Full-conditional updates for one dataset, design and model spec.

    The update methods mutate ``state`` in place and also return the
    updated block.
    """

    def __init__(self, data, design, spec, basis=None):
        self.y = data.y if isinstance(data, FunctionalDataset) else check_curves(data)
        self.X = check_design(design, n_rows=self.y.shape[0])
        self.spec = spec
        self.basis = basis if basis is not None else build_basis(
            self.y.shape[1], spec.basis)
        if self.basis.grid_len != self.y.shape[1]:
            raise DataError("basis grid length does not match the curves")
        self.q = spec.tau
        self.phi = (None if self.basis.is_identity
                    else np.ascontiguousarray(self.basis.phi))
        self.groups = self.basis.groups
        self.group_sizes = self.basis.group_sizes
        self.x2 = self.X ** 2

    def init_state(self):
        return init_state(self.y, self.X, self.spec, self.basis)

    # -- step 1 ----------------------------------------------------------
    def residuals(self, state):
        return self.y - self.X @ state.b

    def update_sigma(self, state, rng, resid=None):
        r = self.residuals(state) if resid is None else resid
        a0, b0 = self.spec.sigma_prior
        N = self.y.shape[0]
        rate = b0 + check_loss(r, self.q).sum(axis=0)
        sigma = sample_inverse_gamma(a0 + N, rate, rng)
        state.sigma = np.maximum(sigma, SCALE_FLOOR)
        return state.sigma

    # -- step 2 ----------------------------------------------------------
    def update_latent_xi(self, state, rng, resid=None):
        r = self.residuals(state) if resid is None else resid
        z = rng.standard_normal(r.shape)
        u = rng.random(r.shape)
        state.xi = latent_xi(r, state.sigma, self.q.tt, z, u,
                             RESID_FLOOR, SCALE_FLOOR)
        return state.xi

    # -- step 3 ----------------------------------------------------------
    def update_basis_coefficients(self, state, rng):
        tt, theta = self.q.tt, self.q.theta
        fitted = self.X @ state.b
        prior_var = state.lambda2 * state.psi2[:, self.groups]
        p = self.X.shape[1]
        for a in range(p):
            xa = self.X[:, a]
            d, lin_t = covariate_stats(self.y, state.xi, state.sigma, fitted,
                                       xa, state.b[a], tt, theta)
            z = rng.standard_normal(self.basis.n_basis)
            if self.basis.is_identity:
                prec = d + 1.0 / prior_var[a]
                new = lin_t / prec + z / np.sqrt(prec)
            else:
                new = self._draw_wavelet_block(d, lin_t, prior_var[a], z, state)
            if not np.all(np.isfinite(new)):
                raise NumericalError(f"non-finite basis coefficients for covariate {a}")
            new_b = self.basis.synthesize(new)
            fitted += np.outer(xa, new_b - state.b[a])
            state.b_star[a] = new
            state.b[a] = new_b
        return state.b_star

    def _draw_wavelet_block(self, d, lin_t, prior_var, z, state):
        # Sample in prior-scaled coordinates u = B*/s, s = sqrt(prior var):
        # precision s A s + I is well conditioned even for tiny prior variances.
        s = np.sqrt(prior_var)
        G = self.phi * np.sqrt(d)
        G *= s[:, None]
        Mt = blas.dsyrk(1.0, G.T, trans=1, lower=1)  # lower triangle only
        Mt[np.diag_indices_from(Mt)] += 1.0
        L, info = lapack.dpotrf(Mt, lower=1, clean=0, overwrite_a=0)
        if info != 0:
            full = np.tril(Mt) + np.tril(Mt, -1).T
            L, retries = cholesky_with_jitter(full)
            state.jitter_retries += retries
        mu = linalg.cho_solve((L, True), s * (self.phi @ lin_t), check_finite=False)
        u = mu + linalg.solve_triangular(L, z, lower=True, trans="T",
                                         check_finite=False)
        return s * u

    # -- step 4 ----------------------------------------------------------
    def update_shrinkage(self, state, rng):
        prior = self.spec.prior
        lo, hi = SHRINK_BOUNDS
        b2 = state.b_star ** 2
        psi2_k = state.psi2[:, self.groups]
        if prior.family == "horseshoe":
            lam2 = sample_inverse_gamma(1.0, 1.0 / state.nu + b2 / (2.0 * psi2_k), rng)
            state.lambda2 = np.clip(lam2, lo, hi)
            state.nu = sample_inverse_gamma(1.0, 1.0 + 1.0 / state.lambda2, rng)
        elif prior.family == "lasso":
            # lambda^2 | B*, psi ~ GIG(1/2, 1, B*^2/psi^2); its inverse is
            # inverse Gaussian with mean psi/|B*| and shape 1.
            mean = np.sqrt(psi2_k) / np.maximum(np.sqrt(b2), RESID_FLOOR)
            inv = sample_inverse_gaussian(mean, np.ones_like(mean), rng)
            state.lambda2 = np.clip(1.0 / inv, lo, hi)
        if prior.fixed_psi is None:
            p, J1 = state.psi2.shape
            ssq = np.zeros((p, J1))
            np.add.at(ssq, (slice(None), self.groups), b2 / state.lambda2)
            psi2 = sample_inverse_gamma((self.group_sizes + 1.0) / 2.0,
                                        1.0 / state.gamma + ssq / 2.0, rng)
            state.psi2 = np.clip(psi2, lo, hi)
            state.gamma = sample_inverse_gamma(
                1.0, 1.0 / state.s2[:, None] + 1.0 / state.psi2, rng)
            if prior.global_scale == "vague":
                s2 = sample_inverse_gamma(
                    (J1 + 1.0) / 2.0,
                    1.0 / state.kappa + (1.0 / state.gamma).sum(axis=1), rng)
                state.s2 = np.clip(s2, lo, hi)
                state.kappa = sample_inverse_gamma(1.0, 1.0 + 1.0 / state.s2, rng)
        return state.lambda2, state.psi2

    # -- one sweep -------------------------------------------------------
    def step(self, state, stream, iteration):
        resid = self.residuals(state)
        self.update_sigma(state, stream.generator("sigma", iteration), resid)
        self.update_latent_xi(state, stream.generator("xi", iteration), resid)
        self.update_basis_coefficients(state, stream.generator("basis", iteration))
        self.update_shrinkage(state, stream.generator("shrinkage", iteration))
        return state

    def run(self, chain_id=0, keep_coefficients=False, state=None):
        mc = self.spec.mcmc
        stream = RngStream(mc.seed, chain_id)
        state = self.init_state() if state is None else state
        G = mc.n_keep
        p, T = state.b.shape
        b_draws = np.empty((G, p, T))
        sigma_draws = np.empty((G, T))
        bs_draws = np.empty((G, p, self.basis.n_basis)) if keep_coefficients else None
        g = 0
        start = time.perf_counter()
        for it in range(mc.n_iter):
            try:
                self.step(state, stream, it)
            except NumericalError as exc:
                raise NumericalError(f"iteration {it}: {exc}") from exc
            k = it - mc.burn_in + 1
            if k > 0 and k % mc.thin == 0:
                b_draws[g] = state.b
                sigma_draws[g] = state.sigma
                if keep_coefficients:
                    bs_draws[g] = state.b_star
                g += 1
        wall = time.perf_counter() - start
        log.info("chain %d tau=%.3f finished %d iterations in %.1fs",
                 chain_id, self.q.tau, mc.n_iter, wall)
        meta = {
            "spec": self.spec.to_dict(),
            "seed": mc.seed,
            "chain_ids": [chain_id],
            "jitter_retries": state.jitter_retries,
            "wall_time": wall,
        }
        return PosteriorDraws(b_draws, sigma_draws, self.q.tau, meta, bs_draws)


def run_chain(data, design, spec, chain_id=0, basis=None, keep_coefficients=False):
    """Run one chain and return its retained draws."""
    return GibbsSampler(data, design, spec, basis).run(chain_id, keep_coefficients)


def merge_draws(chains):
    """Concatenate post-burn-in draws of several chains in chain order."""
    chains = list(chains)
    first = chains[0]
    meta = dict(first.meta)
    meta["chain_ids"] = [c for d in chains for c in d.meta.get("chain_ids", [])]
    meta["jitter_retries"] = sum(d.meta.get("jitter_retries", 0) for d in chains)
    meta["wall_time"] = sum(d.meta.get("wall_time", 0.0) for d in chains)
    bs = None
    if all(d.b_star_draws is not None for d in chains):
        bs = np.concatenate([d.b_star_draws for d in chains])
    return PosteriorDraws(
        np.concatenate([d.b_draws for d in chains]),
        np.concatenate([d.sigma_draws for d in chains]),
        first.tau, meta, bs)


def run_chains(data, design, spec, threads=1, basis=None):
    """Run ``spec.mcmc.n_chains`` chains on a worker pool and merge them.

    Each chain draws from its own keyed streams, so the merged output does
    not depend on ``threads``.
    """
    sampler = GibbsSampler(data, design, spec, basis)
    ids = range(spec.mcmc.n_chains)
    if threads <= 1 or spec.mcmc.n_chains == 1:
        chains = [sampler.run(c) for c in ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chains = list(pool.map(sampler.run, ids))
    return merge_draws(chains)


def with_mcmc(spec, **changes):
    """Copy of ``spec`` with some MCMC settings replaced."""
    return replace(spec, mcmc=replace(spec.mcmc, **changes))
