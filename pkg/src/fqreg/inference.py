"""Posterior summaries for functional coefficients: simultaneous credible
bands, simultaneous band scores (SimBaS) and flagged regions.

Conventions
-----------
* Standard deviations use the ``G - 1`` divisor.
* The band half-width multiplier ``q_alpha`` is the order statistic
  ``z_(G-k)`` of the per-draw maximum standardized deviations ``z_g``,
  where ``k`` is the largest integer with ``k / G <= alpha``. SimBaS at a
  location is ``#{g : |m| / sd <= z_g} / G``, so SimBaS ``<= alpha`` exactly
  when the ``alpha``-level band excludes zero there, and SimBaS takes values
  on the grid ``{0, 1/G, ..., 1}``.
* Locations with zero posterior spread are left out of the maximum; their
  band collapses to the mean and their SimBaS is 1 if the mean is zero and
  ``1/G`` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "FlaggedRun",
    "InferenceResult",
    "simultaneous_band",
    "simultaneous_quantile",
    "simbas",
    "flag_regions",
    "pointwise_summary",
    "summarize",
]


class FlaggedRun(NamedTuple):
    start: int  # inclusive, 0-based
    end: int    # inclusive, 0-based
    max_abs_mean: float

    @property
    def length(self):
        return self.end - self.start + 1


def _check_draws(draws):
    d = np.asarray(draws, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.ndim != 2:
        raise ValueError("draws must have shape (G, T)")
    if d.shape[0] < 2:
        raise ValueError("need at least 2 posterior draws")
    return d


def _mean_sd(d):
    return d.mean(axis=0), d.std(axis=0, ddof=1)


def _max_z(d, mean, sd):
    ok = sd > 0
    if not ok.any():
        return np.zeros(d.shape[0])
    return np.max(np.abs(d[:, ok] - mean[ok]) / sd[ok], axis=1)


def _allowed_exceedances(alpha, G):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = int(np.floor(alpha * G))
    while (k + 1) / G <= alpha:
        k += 1
    while k > 0 and k / G > alpha:
        k -= 1
    return k


def simultaneous_quantile(draws, alpha):
    """Multiplier ``q_alpha`` of the joint ``100(1 - alpha)%`` band."""
    d = _check_draws(draws)
    mean, sd = _mean_sd(d)
    z = np.sort(_max_z(d, mean, sd))
    G = z.size
    return float(z[G - _allowed_exceedances(alpha, G) - 1])


def simultaneous_band(draws, alpha=0.05):
    """Joint credible band ``mean +/- q_alpha * sd``.

    Parameters
    ----------
    draws : array_like, shape (G, T)
    alpha : float in (0, 1)

    Returns
    -------
    lo, hi : ndarray, shape (T,)
    """
    d = _check_draws(draws)
    mean, sd = _mean_sd(d)
    q = simultaneous_quantile(d, alpha)
    return mean - q * sd, mean + q * sd


def simbas(draws):
    """Smallest alpha at which the joint band excludes zero, per location."""
    d = _check_draws(draws)
    G = d.shape[0]
    mean, sd = _mean_sd(d)
    z = np.sort(_max_z(d, mean, sd))
    ok = sd > 0
    scores = np.empty(d.shape[1])
    c = np.abs(mean[ok]) / sd[ok]
    scores[ok] = (G - np.searchsorted(z, c, side="left")) / G
    scores[~ok] = np.where(mean[~ok] == 0, 1.0, 1.0 / G)
    return scores


def flag_regions(scores, mean, alpha=0.05, delta=1.5, min_run=3, threshold=None):
    """Runs of consecutive locations that are significant and large enough.

    A location qualifies when ``SimBaS <= alpha`` and ``|mean| >= threshold``;
    runs shorter than ``min_run`` are dropped. ``threshold`` defaults to
    ``0.5 * log2(delta)``, the effect size of a ``delta``-fold group
    difference on the log2 scale under +/-1 group coding.
    """
    scores = np.asarray(scores, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if scores.shape != mean.shape:
        raise ValueError("scores and mean must have the same length")
    if threshold is None:
        threshold = 0.5 * np.log2(delta)
    hit = (scores <= alpha) & (np.abs(mean) >= threshold)
    runs = []
    start = None
    for i, h in enumerate(np.append(hit, False)):
        if h and start is None:
            start = i
        elif not h and start is not None:
            if i - start >= min_run:
                runs.append(FlaggedRun(start, i - 1,
                                       float(np.max(np.abs(mean[start:i])))))
            start = None
    return runs


def pointwise_summary(draws, alpha=0.05):
    """Posterior mean, sd and equal-tailed pointwise ``1 - alpha`` interval."""
    d = _check_draws(draws)
    mean, sd = _mean_sd(d)
    lo, hi = np.quantile(d, [alpha / 2, 1 - alpha / 2], axis=0)
    return mean, sd, lo, hi


@dataclass
class InferenceResult:
    mean: np.ndarray        # (p, T)
    sd: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    simbas: np.ndarray
    pointwise_lo: np.ndarray
    pointwise_hi: np.ndarray
    flags: list = field(default_factory=list)  # per covariate: list[FlaggedRun]
    alpha: float = 0.05

    def flagged_mask(self):
        mask = np.zeros(self.mean.shape, dtype=bool)
        for a, runs in enumerate(self.flags):
            for r in runs:
                mask[a, r.start: r.end + 1] = True
        return mask


def summarize(b_draws, alpha=0.05, delta=1.5, min_run=3, threshold=None):
    """Summaries for every covariate of a ``(G, p, T)`` draw array."""
    b = np.asarray(b_draws, dtype=float)
    out = {k: [] for k in ("mean", "sd", "lo", "hi", "s", "plo", "phi", "flags")}
    for a in range(b.shape[1]):
        d = b[:, a]
        mean, sd, plo, phi = pointwise_summary(d, alpha)
        lo, hi = simultaneous_band(d, alpha)
        s = simbas(d)
        for key, val in zip(("mean", "sd", "lo", "hi", "s", "plo", "phi"),
                            (mean, sd, lo, hi, s, plo, phi)):
            out[key].append(val)
        out["flags"].append(flag_regions(s, mean, alpha, delta, min_run, threshold))
    return InferenceResult(
        np.array(out["mean"]), np.array(out["sd"]), np.array(out["lo"]),
        np.array(out["hi"]), np.array(out["s"]), np.array(out["plo"]),
        np.array(out["phi"]), out["flags"], alpha)
