"""Scikit-learn style estimator wrapping the Gibbs sampler."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .config import auto_levels
from .data import FunctionalDataset, check_curves, check_design
from .dists import QuantileLevel, check_loss
from .exceptions import DataError
from .gibbs import MCMCSpec, ModelSpec, PriorSpec, run_chains
from .inference import summarize
from .wavelet import WaveletSpec

__all__ = ["FunctionalQuantileRegressor"]


class FunctionalQuantileRegressor(RegressorMixin, BaseEstimator):
    """Bayesian quantile regression of curves on scalar covariates.

    Models the ``tau`` quantile of ``Y_i(t)`` as ``x_i' B(t)`` with each
    ``B_a`` expanded in a Daubechies wavelet basis under a global-local
    shrinkage prior, and fits it by Gibbs sampling.

    Parameters
    ----------
    tau : float
        Quantile level in (0, 1).
    basis : {"daubechies", "identity"}
        ``identity`` fits each grid location separately.
    wavelet_order : int
        Number of vanishing moments.
    levels : int or "auto"
        Decomposition depth; ``auto`` uses 7 for grids padded to at most
        512 points and 8 otherwise.
    prior : {"horseshoe", "lasso", "ridge"}
    global_scale : float or "vague"
    fixed_psi : float, optional
    n_iter, burn_in, thin, n_chains : int
        Chain settings.
    random_state : int
        Master seed of the counter-based streams.
    fit_intercept : bool
        Prepend a column of ones to ``X``.
    alpha : float
        Level of the simultaneous bands stored after fitting.
    delta, min_run : float, int
        Flagging rule, see :func:`fqreg.inference.flag_regions`.
    n_jobs : int
        Threads used to run chains.

    Attributes
    ----------
    coef_ : ndarray, shape (n_features, T)
        Posterior mean coefficient functions.
    intercept_ : ndarray, shape (T,)
        Zero when ``fit_intercept`` is False.
    draws_ : PosteriorDraws
        Retained draws for all design columns, intercept first.
    inference_ : InferenceResult
        Bands, SimBaS and flags for all design columns.
    simbas_ : ndarray, shape (n_features, T)
    grid_ : ndarray, shape (T,)

    Examples
    --------
    >>> est = FunctionalQuantileRegressor(tau=0.9, n_iter=200, burn_in=100,
    ...                                   thin=1, levels=3)
    >>> est.fit(X, Y).predict(X).shape  # doctest: +SKIP
    (n_samples, T)
    """

    def __init__(self, tau=0.5, basis="daubechies", wavelet_order=4, levels="auto",
                 prior="horseshoe", global_scale="vague", fixed_psi=None,
                 n_iter=8000, burn_in=2000, thin=3, n_chains=1, random_state=0,
                 fit_intercept=True, alpha=0.05, delta=1.5, min_run=3, n_jobs=1):
        self.tau = tau
        self.basis = basis
        self.wavelet_order = wavelet_order
        self.levels = levels
        self.prior = prior
        self.global_scale = global_scale
        self.fixed_psi = fixed_psi
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.n_chains = n_chains
        self.random_state = random_state
        self.fit_intercept = fit_intercept
        self.alpha = alpha
        self.delta = delta
        self.min_run = min_run
        self.n_jobs = n_jobs

    def _design(self, X, n_rows=None):
        X = check_curves(X, "X") if np.ndim(X) == 2 else check_curves(
            np.asarray(X, dtype=float).reshape(-1, 1), "X")
        if self.fit_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X if n_rows is None else check_design(X, n_rows, "X")

    def _spec(self, grid_len):
        if self.basis == "identity":
            wspec = WaveletSpec(family="identity")
        else:
            lv = auto_levels(grid_len) if self.levels == "auto" else int(self.levels)
            wspec = WaveletSpec(order=int(self.wavelet_order), levels=lv)
        return ModelSpec(
            self.tau, wspec, PriorSpec(self.prior, self.global_scale, self.fixed_psi),
            mcmc=MCMCSpec(int(self.n_iter), int(self.burn_in), int(self.thin),
                          int(self.n_chains), int(self.random_state)))

    def fit(self, X, Y, grid=None):
        """Fit to design ``X`` (n_samples, n_features) and curves ``Y``
        (n_samples, T) observed on ``grid`` (defaults to ``0..T-1``)."""
        data = (Y if isinstance(Y, FunctionalDataset)
                else FunctionalDataset.from_curves(check_curves(Y, "Y"), grid))
        design = self._design(X, data.n_curves)
        spec = self._spec(data.grid_len)
        self.draws_ = run_chains(data, design, spec, threads=self.n_jobs)
        self.inference_ = summarize(self.draws_.b_draws, self.alpha, self.delta,
                                    self.min_run)
        mean = self.inference_.mean
        k = 1 if self.fit_intercept else 0
        self.intercept_ = mean[0] if self.fit_intercept else np.zeros(data.grid_len)
        self.coef_ = mean[k:]
        self.simbas_ = self.inference_.simbas[k:]
        self.grid_ = data.grid
        self.n_features_in_ = design.shape[1] - k
        return self

    def predict(self, X):
        """Posterior mean of the ``tau`` quantile curve for each row of X."""
        check_is_fitted(self, "coef_")
        X = self._design(X)
        if X.shape[1] - int(self.fit_intercept) != self.n_features_in_:
            raise DataError(f"X has {X.shape[1] - int(self.fit_intercept)} features, "
                            f"expected {self.n_features_in_}")
        k = 1 if self.fit_intercept else 0
        return X[:, k:] @ self.coef_ + self.intercept_

    def score(self, X, Y, sample_weight=None):
        """Negative mean check loss of the predicted quantile curves."""
        Y = check_curves(Y, "Y")
        loss = check_loss(Y - self.predict(X), QuantileLevel(self.tau))
        per_row = loss.mean(axis=1)
        return -float(np.average(per_row, weights=sample_weight))

    def bands(self):
        """Simultaneous band ``(lo, hi)`` per feature, shape (n_features, T)."""
        check_is_fitted(self, "coef_")
        k = 1 if self.fit_intercept else 0
        return self.inference_.band_lo[k:], self.inference_.band_hi[k:]
