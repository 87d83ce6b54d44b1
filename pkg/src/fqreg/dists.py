"""Densities and random-variate generators used by the sampler.

All generators take a :class:`numpy.random.Generator`; reproducible streams
come from :class:`RngStream`, which keys a counter-based Philox generator by
``(master_seed, chain_id, site_key, iteration)``.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._kernels import msh_transform
from .exceptions import NumericalError

__all__ = [
    "QuantileLevel",
    "RngStream",
    "check_loss",
    "al_logpdf",
    "sample_inverse_gamma",
    "sample_inverse_gaussian",
    "sample_mvn_precision",
    "sample_exponential",
]

JITTER_SCALE = 1e-10
MAX_JITTER_RETRIES = 3


@dataclass(frozen=True)
class QuantileLevel:
    """A quantile level together with its scale-mixture constants."""

    tau: float

    def __post_init__(self):
        tau = float(self.tau)
        if not 0.0 < tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        object.__setattr__(self, "tau", tau)

    @property
    def theta(self):
        return (1.0 - 2.0 * self.tau) / (self.tau * (1.0 - self.tau))

    @property
    def psi_scale(self):
        return 2.0 / (self.tau * (1.0 - self.tau))

    @property
    def tt(self):
        """``tau * (1 - tau)``."""
        return self.tau * (1.0 - self.tau)


def _as_level(tau):
    return tau if isinstance(tau, QuantileLevel) else QuantileLevel(tau)


def _site_code(site_key):
    if isinstance(site_key, (int, np.integer)):
        return int(site_key)
    return zlib.crc32(str(site_key).encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """Keyed family of counter-based random streams.

    ``generator(site, it)`` returns a fresh Philox generator whose key is a
    hash of ``(master_seed, chain_id, site, it)``, so the variates for a
    given site and iteration never depend on what was drawn before or on
    which thread asks for them.
    """

    master_seed: int
    chain_id: int = 0

    def generator(self, site_key, iteration=0):
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(int(self.chain_id), _site_code(site_key), int(iteration)),
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, chain_id):
        return RngStream(self.master_seed, chain_id)


def check_loss(u, tau):
    """Quantile check loss ``u * (tau - 1{u <= 0})``."""
    tau = _as_level(tau).tau
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u <= 0))
    return out if out.ndim else float(out)


def al_logpdf(eps, tau, sigma):
    """Log density of the asymmetric Laplace AL(0, tau, sigma)."""
    q = _as_level(tau)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    out = np.log(q.tt / sigma) - check_loss(eps, q) / sigma
    return out if np.ndim(out) else float(out)


def _positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be positive")


def sample_inverse_gamma(shape, rate, rng, size=None):
    """Draw from the inverse gamma with density ``x**(-shape-1) exp(-rate/x)``."""
    _positive("shape", shape)
    _positive("rate", rate)
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if size is None:
        size = np.broadcast_shapes(shape.shape, rate.shape)
    out = rate / rng.standard_gamma(shape, size=size)
    return out if out.ndim else float(out)


def sample_exponential(mean, rng, size=None):
    _positive("mean", mean)
    mean = np.asarray(mean, dtype=float)
    if size is None:
        size = mean.shape
    out = mean * rng.standard_exponential(size=size)
    return out if out.ndim else float(out)


def sample_inverse_gaussian(mean, shape, rng, size=None):
    """Inverse Gaussian IG(mean, shape) via Michael, Schucany and Haas (1976).

    The root is computed as ``mean / (1 + q + sqrt(q**2 + 2q))`` with
    ``q = mean * z**2 / (2 shape)``, which is algebraically the usual
    smaller root but avoids cancellation when ``mean`` is very large.
    """
    _positive("mean", mean)
    _positive("shape", shape)
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = np.broadcast_shapes(mean.shape, shape.shape)
    z = rng.standard_normal(size)
    u = rng.random(size)
    out = np.asarray(msh_transform(mean, shape, z, u))
    return out if out.ndim else float(out)


def cholesky_with_jitter(precision):
    """Lower Cholesky factor of an SPD matrix with bounded diagonal rescue.

    On failure ``1e-10 * trace / K`` is added to the diagonal, up to three
    times. Returns ``(L, n_retries)``.
    """
    M = np.asarray(precision, dtype=float)
    K = M.shape[0]
    bump = JITTER_SCALE * np.trace(M) / K
    for attempt in range(MAX_JITTER_RETRIES + 1):
        try:
            A = M if attempt == 0 else M + attempt * bump * np.eye(K)
            return linalg.cholesky(A, lower=True, check_finite=True), attempt
        except (linalg.LinAlgError, ValueError):
            continue
    raise NumericalError(
        f"Cholesky failed after {MAX_JITTER_RETRIES} jitter retries (K={K})")


def sample_mvn_precision(precision, linear, rng, return_retries=False):
    """Draw from ``N(M^{-1} m, M^{-1})`` given precision ``M`` and linear term ``m``."""
    L, retries = cholesky_with_jitter(precision)
    m = np.asarray(linear, dtype=float)
    mu = linalg.cho_solve((L, True), m, check_finite=False)
    z = rng.standard_normal(m.shape[0])
    draw = mu + linalg.solve_triangular(L, z, lower=True, trans="T",
                                        check_finite=False)
    return (draw, retries) if return_retries else draw
