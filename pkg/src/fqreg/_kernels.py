"""Fused elementwise kernels for the per-location sampler updates."""
import math

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def msh_draw(mean, shape, z, u):
    # Michael-Schucany-Haas root in cancellation-free form
    q = mean * z * z / (2.0 * shape)
    x = mean / (1.0 + q + math.sqrt(q * (q + 2.0)))
    if u * (mean + x) <= mean:
        return x
    return mean * (mean / x)


@nb.vectorize(["float64(float64, float64, float64, float64)"], cache=True)
def msh_transform(mean, shape, z, u):
    return msh_draw(mean, shape, z, u)


@nb.njit(cache=True)
def latent_xi(resid, sigma, tt, z, u, resid_floor, scale_floor):
    """xi_il = 1 / IG(1/(tt |r_il|), 1/(2 sigma_l tt)) with floors."""
    n, t = resid.shape
    out = np.empty((n, t))
    for i in range(n):
        for l in range(t):
            r = abs(resid[i, l])
            if r < resid_floor:
                r = resid_floor
            w = msh_draw(1.0 / (tt * r), 1.0 / (2.0 * sigma[l] * tt), z[i, l], u[i, l])
            xi = 1.0 / w
            out[i, l] = xi if xi > scale_floor else scale_floor
    return out


@nb.njit(cache=True)
def covariate_stats(y, xi, sigma, fitted, x_a, b_a, tt, theta):
    """Per-location weighted sums for one covariate's Gaussian update.

    With w_il = tt / (2 sigma_l xi_il) and partial residual
    R_il = y_il - theta xi_il - fitted_il + x_ia b_al, returns
    d_l = sum_i w_il x_ia^2 and m_l = sum_i w_il x_ia R_il.
    """
    n, t = y.shape
    d = np.zeros(t)
    m = np.zeros(t)
    for i in range(n):
        xa = x_a[i]
        for l in range(t):
            w = tt / (2.0 * sigma[l] * xi[i, l])
            r = y[i, l] - theta * xi[i, l] - fitted[i, l] + xa * b_a[l]
            d[l] += w * xa * xa
            m[l] += w * xa * r
    return d, m
