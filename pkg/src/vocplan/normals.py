"""Gaussian helpers: densities, partial expectations, and exact expected maxima.

Everything here is vectorized over numpy arrays and shared by the value and
computation-value estimators. The expected-max-of-affines routine is the
workhorse behind the exact preposterior calculations: it integrates
``max_j (a_j + b_j Z)`` for standard normal ``Z`` in closed form by building
the upper envelope of the lines.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def std_pdf(z):
    """Standard normal density."""
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def std_cdf(z):
    """Standard normal CDF (vectorized, via scipy's ndtr)."""
    return ndtr(np.asarray(z, dtype=np.float64))


def expected_excess(mu, sigma, c):
    """E[(Y - c)+] for Y ~ Normal(mu, sigma^2).

    Handles sigma == 0 exactly (point mass). All arguments broadcast.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape == sigma.shape and np.ndim(c) == 0 and sigma.size and np.all(sigma > 0.0):
        d = mu - c
        z = d / sigma
        out = d * std_cdf(z) + sigma * std_pdf(z)
        return out if out.ndim else float(out)
    mu, sigma, c = np.broadcast_arrays(mu, sigma, np.asarray(c, dtype=np.float64))
    safe = np.where(sigma > 0.0, sigma, 1.0)
    z = (mu - c) / safe
    smooth = (mu - c) * std_cdf(z) + sigma * std_pdf(z)
    out = np.where(sigma > 0.0, smooth, np.maximum(mu - c, 0.0))
    return out if out.ndim else float(out)


def expected_max_affine(intercepts, slopes):
    """E[max_j (a_j + b_j Z)] for Z ~ Normal(0, 1), exactly.

    Builds the upper envelope of the lines (sorted by slope) and sums the
    closed-form Gaussian integral over each envelope segment, using
    int_l^u z phi(z) dz = phi(l) - phi(u).
    """
    a = np.asarray(intercepts, dtype=np.float64)
    b = np.asarray(slopes, dtype=np.float64)
    if a.size == 0:
        raise ValueError("expected_max_affine needs at least one line")

    order = np.lexsort((a, b))
    a, b = a[order], b[order]
    # Among equal slopes only the largest intercept can win; lexsort put it last.
    keep = np.ones(a.size, dtype=bool)
    keep[:-1] = b[1:] != b[:-1]
    a, b = a[keep], b[keep]
    if a.size == 1:
        return float(a[0])

    hull: list[int] = []
    bps: list[float] = []
    for j in range(a.size):
        while True:
            if not hull:
                hull.append(j)
                break
            k = hull[-1]
            z = (a[k] - a[j]) / (b[j] - b[k])
            if bps and z <= bps[-1]:
                hull.pop()
                bps.pop()
                continue
            hull.append(j)
            bps.append(z)
            break

    bounds = np.concatenate(([-np.inf], np.asarray(bps, dtype=np.float64), [np.inf]))
    cdf = np.empty(bounds.size)
    pdf = np.empty(bounds.size)
    cdf[1:-1] = std_cdf(bounds[1:-1])
    pdf[1:-1] = std_pdf(bounds[1:-1])
    cdf[0], cdf[-1] = 0.0, 1.0
    pdf[0], pdf[-1] = 0.0, 0.0
    ai, bi = a[hull], b[hull]
    seg = ai * (cdf[1:] - cdf[:-1]) + bi * (pdf[:-1] - pdf[1:])
    return float(seg.sum())


def expected_max_independent(means, stds, n_grid: int = 4001, tail: float = 8.5):
    """E[max_j Y_j] for independent Normal Y_j, by CDF-product quadrature.

    Deterministic oracle used in tests and the myopic-optimality check:
    E[M] = hi - int_lo^hi prod_j F_j(x) dx on a grid wide enough that the
    truncated tail mass is negligible. ``means``/``stds`` may be 2-D with
    one row per problem; returns one value per row.
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    stds = np.atleast_2d(np.asarray(stds, dtype=np.float64))
    spread = max(float(stds.max()), 1e-12)
    lo = float(means.min() - tail * spread - 1e-9)
    hi = float(means.max() + tail * spread + 1e-9)
    x = np.linspace(lo, hi, n_grid)
    out = np.empty(means.shape[0])
    for r in range(means.shape[0]):
        cdf = np.ones_like(x)
        for j in range(means.shape[1]):
            sd = stds[r, j] if stds.shape[0] > 1 else stds[0, j]
            if sd > 0:
                cdf *= std_cdf((x - means[r, j]) / sd)
            else:
                cdf *= (x >= means[r, j]).astype(np.float64)
        out[r] = hi - np.trapezoid(cdf, x)
    return out if out.size > 1 else float(out[0])
