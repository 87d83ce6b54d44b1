"""Periodic orthonormal discrete wavelet transform and the synthesis basis
used to represent functional coefficients.

Coefficient layout follows the usual pyramid ordering for ``J`` levels::

    [cA_J | cD_J | cD_{J-1} | ... | cD_1]

Filter alignment: with synthesis low-pass taps ``g`` of length ``L`` and
high-pass ``h[n] = (-1)**n * g[L-1-n]``, one analysis step on a length-``n``
signal computes::

    a[k] = sum_j g[j] * x[(2k + j - s) mod n]
    d[k] = sum_j h[j] * x[(2k + j - s) mod n],     s = L/2 - 1

which coincides with PyWavelets' ``mode="periodization"`` output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._filters import DAUBECHIES
from .exceptions import ConfigError, DataError

__all__ = [
    "WaveletSpec",
    "BasisTransform",
    "daubechies_filters",
    "dwt",
    "idwt",
    "build_basis",
    "next_dyadic",
    "WaveletBasis",
]

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class WaveletSpec:
    """Basis configuration.

    ``family="daubechies"`` selects a periodic Daubechies transform with
    ``order`` vanishing moments and ``levels`` decomposition levels.
    ``family="identity"`` uses the unit basis on the observed grid (one
    coefficient per location, a single regularization group).
    """

    order: int = 4
    levels: int = 7
    family: str = "daubechies"
    boundary: str = "periodic"
    pad_policy: str = "zero-pad-to-dyadic"

    def __post_init__(self):
        if self.family not in ("daubechies", "identity"):
            raise ConfigError(f"unknown basis family {self.family!r}")
        if self.boundary != "periodic":
            raise ConfigError("only periodic boundaries are supported")
        if self.pad_policy != "zero-pad-to-dyadic":
            raise ConfigError(f"unknown pad policy {self.pad_policy!r}")
        if self.family == "daubechies":
            if self.order not in DAUBECHIES:
                raise ConfigError(
                    f"unsupported Daubechies order {self.order}; "
                    f"choose one of {sorted(DAUBECHIES)}")
            if int(self.levels) < 1:
                raise ConfigError("levels must be >= 1")


def daubechies_filters(order):
    """Return ``(g, h)``: synthesis low- and high-pass taps.

    Raises ConfigError for unsupported orders and verifies orthonormality
    (unit energy, orthogonal to even shifts) on every load.
    """
    if order not in DAUBECHIES:
        raise ConfigError(f"unsupported Daubechies order {order}")
    g = np.asarray(DAUBECHIES[order], dtype=float)
    L = g.size
    h = g[::-1] * (-1.0) ** np.arange(L)
    for shift in range(0, L, 2):
        dot = g[: L - shift] @ g[shift:]
        target = 1.0 if shift == 0 else 0.0
        if abs(dot - target) > _ORTHO_TOL:
            raise ConfigError(f"db{order} taps fail orthonormality at shift {shift}")
    return g, h


def next_dyadic(n):
    """Smallest power of two >= n."""
    n = int(n)
    if n < 1:
        raise ValueError("length must be positive")
    return 1 << (n - 1).bit_length()


def _is_dyadic(n):
    return n >= 1 and (n & (n - 1)) == 0


def _check_length(n, levels):
    if not _is_dyadic(n):
        raise DataError(f"signal length {n} is not a power of two")
    if n < 2 ** levels:
        raise ConfigError(
            f"{levels} levels too deep for length {n} (needs >= {2 ** levels})")


def _analysis_step(x, g, h):
    n = x.shape[-1]
    half = n // 2
    shift = g.size // 2 - 1
    base = 2 * np.arange(half) - shift
    a = np.zeros(x.shape[:-1] + (half,))
    d = np.zeros_like(a)
    for j in range(g.size):
        xs = x[..., (base + j) % n]
        a += g[j] * xs
        d += h[j] * xs
    return a, d


def _synthesis_step(a, d, g, h):
    half = a.shape[-1]
    n = 2 * half
    shift = g.size // 2 - 1
    base = 2 * np.arange(half) - shift
    x = np.zeros(a.shape[:-1] + (n,))
    for j in range(g.size):
        # positions are distinct for fixed j, so fancy-index accumulation is safe
        x[..., (base + j) % n] += g[j] * a + h[j] * d
    return x


def dwt(signal, spec):
    """Forward periodic DWT along the last axis.

    Parameters
    ----------
    signal : array_like, shape (..., n)
        ``n`` must be a power of two with ``n >= 2**spec.levels``.
    spec : WaveletSpec

    Returns
    -------
    ndarray, shape (..., n)
        Coefficients in pyramid order ``[cA_J, cD_J, ..., cD_1]``.
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[-1]
    _check_length(n, spec.levels)
    g, h = daubechies_filters(spec.order)
    details = []
    a = x
    for _ in range(spec.levels):
        a, d = _analysis_step(a, g, h)
        details.append(d)
    return np.concatenate([a] + details[::-1], axis=-1)


def idwt(coeffs, spec):
    """Inverse of :func:`dwt` (same layout, same length)."""
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    _check_length(n, spec.levels)
    g, h = daubechies_filters(spec.order)
    m = n >> spec.levels
    a = c[..., :m]
    pos = m
    for _ in range(spec.levels):
        d = c[..., pos: pos + a.shape[-1]]
        pos += a.shape[-1]
        a = _synthesis_step(a, d, g, h)
    return a


@dataclass(frozen=True, eq=False)
class BasisTransform:
    """Synthesis matrix restricted to the observed grid plus scale grouping.

    Attributes
    ----------
    matrix : ndarray, shape (K, T), or None
        Row ``k`` is basis function ``k`` evaluated on the observed grid.
        ``None`` for the identity basis; ``phi`` then builds it on request.
    groups : ndarray of int, shape (K,)
        Regularization group of each coefficient. For wavelets group 0 holds
        the scaling coefficients and group ``j`` (1..J) the detail
        coefficients from coarsest to finest.
    padded_len : int
    spec : WaveletSpec
    """

    matrix: np.ndarray | None
    groups: np.ndarray
    padded_len: int
    spec: WaveletSpec
    group_sizes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.matrix is not None:
            self.matrix.setflags(write=False)
        self.groups.setflags(write=False)
        sizes = np.bincount(self.groups)
        sizes.setflags(write=False)
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def phi(self):
        # the identity synthesis matrix is only built on request
        if self.matrix is None:
            eye = np.eye(self.groups.size)
            eye.setflags(write=False)
            return eye
        return self.matrix

    @property
    def n_basis(self):
        return self.groups.size

    @property
    def grid_len(self):
        return self.groups.size if self.matrix is None else self.matrix.shape[1]

    @property
    def n_groups(self):
        return self.group_sizes.size

    @property
    def is_identity(self):
        return self.spec.family == "identity"

    def synthesize(self, coeffs):
        """Map basis coefficients (..., K) to functions on the grid (..., T)."""
        if self.is_identity:
            return np.array(coeffs, dtype=float)
        return np.asarray(coeffs, dtype=float) @ self.phi

    def analyze(self, curves):
        """Zero-pad curves (..., T) and return their coefficients (..., K)."""
        y = np.asarray(curves, dtype=float)
        if self.is_identity:
            return y.copy()
        pad = [(0, 0)] * (y.ndim - 1) + [(0, self.padded_len - y.shape[-1])]
        return dwt(np.pad(y, pad), self.spec)


def build_basis(grid_len, spec):
    """Build the ``K x T`` synthesis matrix for a grid of ``grid_len`` points.

    The grid is zero-padded to the next power of two ``T'``; ``K = T'`` and
    row ``k`` of the returned matrix is ``idwt(e_k)`` truncated to the first
    ``grid_len`` columns.
    """
    grid_len = int(grid_len)
    if grid_len < 1:
        raise DataError("grid length must be positive")
    if spec.family == "identity":
        return BasisTransform(None, np.zeros(grid_len, dtype=int),
                              grid_len, spec)
    padded = next_dyadic(grid_len)
    _check_length(padded, spec.levels)
    full = idwt(np.eye(padded), spec)
    groups = np.empty(padded, dtype=int)
    m = padded >> spec.levels
    groups[:m] = 0
    pos, size = m, m
    for j in range(1, spec.levels + 1):
        groups[pos: pos + size] = j
        pos += size
        size *= 2
    return BasisTransform(np.ascontiguousarray(full[:, :grid_len]), groups,
                          padded, spec)


class WaveletBasis(TransformerMixin, BaseEstimator):
    """Transformer mapping curves on a common grid to wavelet coefficients.

    ``transform`` zero-pads each row to the next power of two and applies the
    periodic DWT; ``inverse_transform`` maps coefficients back to the observed
    grid through the restricted synthesis matrix.

    Parameters
    ----------
    order : int, default=4
        Number of vanishing moments of the Daubechies wavelet.
    levels : int, default=7
        Decomposition depth.
    """

    def __init__(self, order=4, levels=7):
        self.order = order
        self.levels = levels

    def fit(self, X, y=None):
        X = check_array(X)
        self.basis_ = build_basis(X.shape[1], WaveletSpec(self.order, self.levels))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} grid points, expected {self.n_features_in_}")
        return self.basis_.analyze(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        return self.basis_.synthesize(X)
