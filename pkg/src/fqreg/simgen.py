"""Simulated mass-spectrometry-like curves and method-comparison metrics.

Each curve is a sum of seven Gaussian-shaped peaks with random heights plus
a stationary Gaussian AR(1) error::

    y_a(t) = sum_k c_ka * f(t | mu_k, sigma_k) + e(t)

Two settings differ only in the laws of the peak heights ``c_ka``: in the
symmetric heavy tailed setting, peaks 3 and 6 put a scaled ``t_2`` law in one
group against a normal law with the same median in the other; in the right
skewed setting, peaks 2 and 6 put an inverse gamma law without a finite mean
against a tight normal law.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, signal, stats

from .data import FunctionalDataset
from .dists import QuantileLevel
from .exceptions import ConfigError
from .gibbs import MCMCSpec, ModelSpec, PriorSpec, run_chains
from .inference import simbas
from .wavelet import WaveletSpec

__all__ = [
    "MagnitudeLaw",
    "SimSetting",
    "SETTINGS",
    "METHODS",
    "method_spec",
    "generate_dataset",
    "true_effect_curve",
    "imse",
    "ivar",
    "sensitivity_fpr",
    "MetricReport",
    "replicate_metrics",
    "run_simulation_study",
]

log = logging.getLogger(__name__)

PEAK_MU = (1.209, 2.938, 4.700, 7.267, 9.013, 10.545, 13.200)
PEAK_SD = (0.145, 0.150, 0.155, 0.160, 0.165, 0.170, 0.175)
ALPHAS = (0.001, 0.01, 0.05, 0.10)


@dataclass(frozen=True)
class MagnitudeLaw:
    """Distribution of a peak height.

    kind : {"normal", "t2", "invgamma"}
        ``normal``: N(loc, scale^2). ``t2``: ``scale * t_2 + loc``.
        ``invgamma``: ``loc + IG(shape 1, scale)``, density of the inverse
        gamma part proportional to ``x**-2 exp(-scale / x)``.
    """

    kind: str
    loc: float
    scale: float

    def __post_init__(self):
        if self.kind not in ("normal", "t2", "invgamma"):
            raise ConfigError(f"unknown magnitude law {self.kind!r}")
        if not self.scale > 0:
            raise ConfigError("magnitude scale must be positive")

    @property
    def dist(self):
        if self.kind == "normal":
            return stats.norm(self.loc, self.scale)
        if self.kind == "t2":
            return stats.t(2, loc=self.loc, scale=self.scale)
        return stats.invgamma(1.0, loc=self.loc, scale=self.scale)

    def sample(self, rng, size):
        if self.kind == "normal":
            return self.loc + self.scale * rng.standard_normal(size)
        if self.kind == "t2":
            return self.loc + self.scale * rng.standard_t(2, size)
        return self.loc + self.scale / rng.standard_exponential(size)

    def ppf(self, u):
        return self.dist.ppf(u)

    def describe(self):
        if self.kind == "normal":
            return f"N({self.loc:g},{self.scale:g}^2)"
        if self.kind == "t2":
            return f"{self.scale:g}*t2+{self.loc:g}"
        return f"IG(shape=1,scale={self.scale:g})+{self.loc:g}"


def _n(loc, sd):
    return MagnitudeLaw("normal", loc, sd)


_BASE = _n(30.0, 1.5)
_T2 = MagnitudeLaw("t2", 30.0, 1.75)
_IG = MagnitudeLaw("invgamma", 30.0, 0.35)


@dataclass(frozen=True)
class SimSetting:
    """Peak locations, widths, height laws, grid and error process."""

    name: str
    group1: tuple
    group2: tuple
    mu: tuple = PEAK_MU
    sd: tuple = PEAK_SD
    grid_len: int = 501
    grid_range: tuple = (0.0, 15.0)
    n_per_group: int = 200
    rho: float = 0.8
    error_sd: float = 3.0

    def __post_init__(self):
        k = len(self.mu)
        if not (len(self.sd) == len(self.group1) == len(self.group2) == k):
            raise ConfigError("peak tables must have equal length")
        if not -1 < self.rho < 1:
            raise ConfigError("AR(1) coefficient must lie in (-1, 1)")

    @property
    def grid(self):
        return np.linspace(*self.grid_range, self.grid_len)

    @property
    def innovation_sd(self):
        return self.error_sd * np.sqrt(1.0 - self.rho ** 2)

    def peak_shapes(self):
        """Matrix ``F`` of shape (7, T) with ``F[k] = f(t | mu_k, sigma_k)``."""
        t = self.grid
        return np.array([stats.norm.pdf(t, m, s) for m, s in zip(self.mu, self.sd)])

    def design(self):
        n = self.n_per_group
        g = np.concatenate([np.ones(n), -np.ones(n)])
        return np.column_stack([np.ones(2 * n), g])

    def metadata(self):
        return {
            "setting": self.name,
            "group1": [law.describe() for law in self.group1],
            "group2": [law.describe() for law in self.group2],
            "mu": list(self.mu), "sd": list(self.sd),
            "grid": [*self.grid_range, self.grid_len],
            "n_per_group": self.n_per_group, "rho": self.rho,
            "error_sd": self.error_sd,
            "invgamma_convention": "shape 1, scale 0.35: density x^-2 exp(-0.35/x)",
        }


SETTINGS = {
    "symmetric_heavy_tailed": SimSetting(
        "symmetric_heavy_tailed",
        group1=(_BASE, _BASE, _T2, _BASE, _BASE, _n(30.0, 1.0), _BASE),
        group2=(_BASE, _BASE, _n(30.0, 1.0), _BASE, _BASE, _T2, _BASE),
    ),
    "right_skewed": SimSetting(
        "right_skewed",
        group1=(_BASE, _IG, _BASE, _BASE, _BASE, _n(30.5, 0.4), _BASE),
        group2=(_BASE, _n(30.6, 0.4), _BASE, _BASE, _BASE, _IG, _BASE),
    ),
}
SETTINGS["i"] = SETTINGS["symmetric_heavy_tailed"]
SETTINGS["ii"] = SETTINGS["right_skewed"]


def get_setting(setting):
    if isinstance(setting, SimSetting):
        return setting
    try:
        return SETTINGS[setting]
    except KeyError:
        raise ConfigError(f"unknown simulation setting {setting!r}") from None


def ar1_errors(n_curves, grid_len, rho, marginal_sd, rng):
    """Stationary Gaussian AR(1) paths, one per row."""
    w = rng.standard_normal((n_curves, grid_len))
    w[:, 0] *= marginal_sd
    w[:, 1:] *= marginal_sd * np.sqrt(1.0 - rho ** 2)
    return signal.lfilter([1.0], [1.0, -rho], w, axis=1)


def generate_dataset(setting, seed):
    """Draw one replicate dataset.

    Rows ``0..n-1`` belong to group 1 (design column +1), the rest to
    group 2 (-1).

    Returns
    -------
    data : FunctionalDataset
    design : ndarray, shape (2n, 2)
    """
    s = get_setting(setting)
    rng = np.random.default_rng(seed)
    n = s.n_per_group
    F = s.peak_shapes()
    curves = []
    for laws in (s.group1, s.group2):
        c = np.column_stack([law.sample(rng, n) for law in laws])
        curves.append(c @ F)
    y = np.vstack(curves)
    y += ar1_errors(2 * n, s.grid_len, s.rho, s.error_sd, rng)
    return FunctionalDataset(y, s.grid), s.design()


@lru_cache(maxsize=32)
def _true_effect(setting, tau, seed, n_mc, block):
    s = get_setting(setting)
    rng = np.random.default_rng(seed)
    F = s.peak_shapes()
    # Common random numbers: both groups use the same uniforms for peak
    # heights (through each law's quantile function) and the same errors, so
    # the estimated effect is exactly zero wherever the laws agree.
    u = rng.random((n_mc, len(s.mu)))
    e = s.error_sd * rng.standard_normal(n_mc)
    c1 = np.column_stack([law.ppf(u[:, k]) for k, law in enumerate(s.group1)])
    c2 = np.column_stack([law.ppf(u[:, k]) for k, law in enumerate(s.group2)])
    # Where every peak with differing laws has negligible height the two
    # groups are identical, and the effect is zero.
    differ = [k for k in range(len(s.mu)) if s.group1[k] != s.group2[k]]
    active = np.flatnonzero(np.max(F[differ], axis=0) > 1e-12) if differ else []
    out = np.zeros(s.grid_len)
    for lo in range(0, len(active), block):
        idx = active[lo: lo + block]
        q1 = np.quantile(c1 @ F[:, idx] + e[:, None], tau, axis=0)
        q2 = np.quantile(c2 @ F[:, idx] + e[:, None], tau, axis=0)
        out[idx] = (q1 - q2) / 2.0
    out.setflags(write=False)
    return out


def true_effect_curve(setting, tau, seed=0, n_mc=1_000_000, block=16):
    """Group effect ``B_2(t)`` at quantile ``tau`` under +/-1 group coding.

    Monte Carlo oracle: ``n_mc`` curve values per group at every grid point,
    ``(Q_tau,1(t) - Q_tau,2(t)) / 2`` from empirical quantiles. Only the
    marginal law of ``e(t)`` matters, so a single error draw per MC sample is
    shared across the grid. Results are cached by their arguments.
    """
    tau = QuantileLevel(tau).tau
    name = get_setting(setting).name
    return _true_effect(name, tau, int(seed), int(n_mc), int(block))


def _grid_for(values, grid):
    values = np.asarray(values, dtype=float)
    if grid is None:
        grid = np.arange(values.shape[-1], dtype=float)
    grid = np.asarray(grid, dtype=float)
    if grid.shape[-1] != values.shape[-1]:
        raise ValueError(
            f"grid has {grid.shape[-1]} points but values have {values.shape[-1]}")
    return values, grid


def imse(mean_estimate, truth, grid=None):
    """Integrated squared error by the trapezoid rule on ``grid``.

    ``grid=None`` uses unit spacing over the location index.
    """
    est, g = _grid_for(mean_estimate, grid)
    truth = np.asarray(truth, dtype=float)
    if truth.shape != est.shape:
        raise ValueError("estimate and truth must have the same length")
    return float(integrate.trapezoid((est - truth) ** 2, g))


def ivar(draws, grid=None):
    """Average over draws of the integrated squared deviation from their mean."""
    d, g = _grid_for(draws, grid)
    if d.ndim != 2:
        raise ValueError("draws must have shape (G, T)")
    dev = (d - d.mean(axis=0)) ** 2
    return float(integrate.trapezoid(dev, g, axis=1).mean())


def sensitivity_fpr(scores, mean_estimate, truth, alphas=ALPHAS, delta=0.3):
    """Detection rates for group differences of at least ``delta``.

    A location is a true positive candidate when ``|truth| >= delta`` and is
    flagged at level ``alpha`` when ``SimBaS <= alpha`` and
    ``|estimate| >= delta``.

    Returns
    -------
    dict
        ``alpha -> (sensitivity, fpr)``; a rate whose denominator is empty is
        ``nan``.
    """
    scores = np.asarray(scores, dtype=float)
    est = np.asarray(mean_estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if not scores.shape == est.shape == truth.shape:
        raise ValueError("scores, estimates and truth must be aligned")
    pos = np.abs(truth) >= delta
    big = np.abs(est) >= delta
    out = {}
    for a in alphas:
        flag = (scores <= a) & big
        sens = flag[pos].mean() if pos.any() else np.nan
        fpr = flag[~pos].mean() if (~pos).any() else np.nan
        out[a] = (float(sens), float(fpr))
    return out


# -- methods -------------------------------------------------------------------

BAYES_QR_PSI = 1e3

METHODS = ("bayes_fqr", "bayes_qr")


def method_spec(method, tau, mcmc=None, order=4, levels=7):
    """Model spec of a named method.

    ``bayes_fqr``: Daubechies wavelet basis with a horseshoe prior.
    ``bayes_qr``: separate quantile regressions per location, that is the
    identity basis with a nearly flat normal prior.
    """
    mcmc = mcmc or MCMCSpec()
    if method == "bayes_fqr":
        return ModelSpec(tau, WaveletSpec(order=order, levels=levels),
                         PriorSpec("horseshoe"), mcmc=mcmc)
    if method == "bayes_qr":
        return ModelSpec(tau, WaveletSpec(family="identity"),
                         PriorSpec("ridge", fixed_psi=BAYES_QR_PSI), mcmc=mcmc)
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


# -- study harness -------------------------------------------------------------

REPORT_FIELDS = ("method", "tau", "alpha", "sensitivity", "fpr", "imse", "ivar",
                 "imse_sd", "ivar_sd", "n_replicates")


@dataclass
class MetricReport:
    """Replicate-level metrics and their averages.

    ``records`` holds one dict per (replicate, method, tau) with keys
    ``replicate, method, tau, imse, ivar, rates`` where ``rates`` maps
    ``alpha -> (sensitivity, fpr)``.
    """

    records: list = field(default_factory=list)
    alphas: tuple = ALPHAS

    def select(self, method, tau):
        return [r for r in self.records if r["method"] == method and r["tau"] == tau]

    def rows(self):
        keys = sorted({(r["method"], r["tau"]) for r in self.records},
                      key=lambda k: (METHODS.index(k[0]) if k[0] in METHODS else 99,
                                     k[0], k[1]))
        out = []
        for method, tau in keys:
            recs = self.select(method, tau)
            im = np.array([r["imse"] for r in recs])
            iv = np.array([r["ivar"] for r in recs])
            for a in self.alphas:
                sens = np.array([r["rates"][a][0] for r in recs])
                fpr = np.array([r["rates"][a][1] for r in recs])
                out.append({
                    "method": method, "tau": tau, "alpha": a,
                    "sensitivity": _nanmean(sens), "fpr": _nanmean(fpr),
                    "imse": float(im.mean()), "ivar": float(iv.mean()),
                    "imse_sd": float(im.std(ddof=1)) if im.size > 1 else np.nan,
                    "ivar_sd": float(iv.std(ddof=1)) if iv.size > 1 else np.nan,
                    "n_replicates": len(recs),
                })
        return out

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_FIELDS)
            for row in self.rows():
                w.writerow([_fmt(row[k]) for k in REPORT_FIELDS])


def _nanmean(x):
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else np.nan


def _fmt(v):
    if isinstance(v, float):
        return "NA" if np.isnan(v) else repr(v)
    return str(v)


def replicate_seeds(master_seed, replicate):
    """Independent (data seed, chain seed) for one replicate."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(replicate,))
    data_seed, chain_seed = ss.generate_state(2, dtype=np.uint32)
    return int(data_seed), int(chain_seed)


def replicate_metrics(b2_draws, truth, alphas=ALPHAS, delta=0.3, grid=None):
    """IMSE, IVar and detection rates of one fit's group-effect draws."""
    b2 = np.asarray(b2_draws, dtype=float)
    mean = b2.mean(axis=0)
    return {
        "imse": imse(mean, truth, grid),
        "ivar": ivar(b2, grid),
        "rates": sensitivity_fpr(simbas(b2), mean, truth, alphas, delta),
    }


def run_simulation_study(setting, taus=(0.9,), methods=METHODS, n_replicates=10,
                         mcmc=None, master_seed=0, threads=1, alphas=ALPHAS,
                         delta=0.3, n_mc=1_000_000, levels=7, on_fit=None):
    """Fit every method at every tau on replicate datasets and score them.

    Metrics are computed per replicate and then averaged. IMSE and IVar use
    unit spacing over the grid index.

    Parameters
    ----------
    on_fit : callable, optional
        Called as ``on_fit(replicate, method, tau, dataset, design, draws)``
        after each fit, e.g. to persist draws.
    """
    s = get_setting(setting)
    mcmc = mcmc or MCMCSpec()
    truths = {tau: true_effect_curve(s, tau, n_mc=n_mc) for tau in taus}

    def one(rep):
        data_seed, chain_seed = replicate_seeds(master_seed, rep)
        data, X = generate_dataset(s, data_seed)
        recs = []
        for tau in taus:
            for method in methods:
                spec = method_spec(method, tau,
                                   MCMCSpec(mcmc.n_iter, mcmc.burn_in, mcmc.thin,
                                            mcmc.n_chains, chain_seed), levels=levels)
                draws = run_chains(data, X, spec)
                if on_fit is not None:
                    on_fit(rep, method, tau, data, X, draws)
                m = replicate_metrics(draws.b_draws[:, 1], truths[tau], alphas, delta)
                recs.append({"replicate": rep, "method": method, "tau": tau, **m})
                log.info("replicate %d %s tau=%.2f imse=%.3f ivar=%.3f", rep, method,
                         tau, m["imse"], m["ivar"])
        return recs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(one, range(n_replicates)))
    else:
        per_rep = [one(r) for r in range(n_replicates)]
    return MetricReport([r for recs in per_rep for r in recs], tuple(alphas))
