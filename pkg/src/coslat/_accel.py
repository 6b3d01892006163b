"""Log kernel-density batch evaluation, numba-jitted when available.

The belief products evaluate every incoming message kernel at every particle
of the receiving node, which is the simulator's hot loop.  Terms farther than
sqrt(TRUNC) kernel standard deviations contribute below double precision and
are skipped.  The pure-numpy fallback computes the same quantity without
truncation; both paths agree to ~1e-12 relative.
"""

from __future__ import annotations

import numpy as np

LOG_FLOOR = -745.0  # log of the smallest positive double, used for "zero"
TRUNC = 60.0  # skip kernel terms with d^2 > TRUNC * 2 sigma^2 (exp < 1e-26)

try:  # pragma: no cover - exercised implicitly through the public wrapper
    from numba import njit

    @njit(cache=True)
    def _log_kde_batch_numba(points, centers, weights, sigma2, out):
        n = points.shape[0]
        j = centers.shape[0]
        inv2s = 1.0 / (2.0 * sigma2)
        norm = 1.0 / (2.0 * np.pi * sigma2)
        cutoff = TRUNC * 2.0 * sigma2
        for i in range(n):
            px = points[i, 0]
            py = points[i, 1]
            acc = 0.0
            for k in range(j):
                dx = px - centers[k, 0]
                dy = py - centers[k, 1]
                d2 = dx * dx + dy * dy
                if d2 < cutoff:
                    acc += weights[k] * np.exp(-d2 * inv2s)
            if acc > 0.0:
                out[i] = np.log(acc * norm)
            else:
                out[i] = LOG_FLOOR
        return out

    @njit(cache=True)
    def _log_range_batch_numba(points, senders, weights, y, sigma_v2,
                               out_lik, out_density):
        n = points.shape[0]
        j = senders.shape[0]
        inv2s = 1.0 / (2.0 * sigma_v2)
        cutoff = TRUNC * 2.0 * sigma_v2
        two_pi = 2.0 * np.pi
        for i in range(n):
            px = points[i, 0]
            py = points[i, 1]
            lik = 0.0
            den = 0.0
            for k in range(j):
                dx = px - senders[k, 0]
                dy = py - senders[k, 1]
                r = np.sqrt(dx * dx + dy * dy)
                e = y - r
                e2 = e * e
                if e2 < cutoff:
                    term = weights[k] * np.exp(-e2 * inv2s)
                    lik += term
                    den += term / (two_pi * max(r, 1e-6))
            out_lik[i] = np.log(lik) if lik > 0.0 else LOG_FLOOR
            out_density[i] = np.log(den) if den > 0.0 else LOG_FLOOR
        return out_lik

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _log_kde_batch_numpy(points, centers, weights, sigma2, out):
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        + np.sum(centers * centers, axis=1)[None, :]
        - 2.0 * points @ centers.T
    )
    np.maximum(d2, 0.0, out=d2)
    vals = np.exp(-d2 / (2.0 * sigma2)) @ weights / (2.0 * np.pi * sigma2)
    with np.errstate(divide="ignore"):
        np.log(vals, out=out, where=vals > 0)
    out[vals <= 0] = LOG_FLOOR
    return out


def log_kde_batch(points: np.ndarray, centers: np.ndarray, weights: np.ndarray,
                  sigma2: float) -> np.ndarray:
    """Log of a Gaussian kernel mixture evaluated at each query point."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.empty(points.shape[0], dtype=np.float64)
    if HAVE_NUMBA:
        return _log_kde_batch_numba(points, centers, weights, float(sigma2), out)
    return _log_kde_batch_numpy(points, centers, weights, float(sigma2), out)


def _log_range_batch_numpy(points, senders, weights, y, sigma_v2, out_lik, out_density):
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        + np.sum(senders * senders, axis=1)[None, :]
        - 2.0 * points @ senders.T
    )
    np.maximum(d2, 0.0, out=d2)
    r = np.sqrt(d2)
    term = np.exp(-((y - r) ** 2) / (2.0 * sigma_v2))
    lik = term @ weights
    den = (term / (2.0 * np.pi * np.maximum(r, 1e-6))) @ weights
    for vals, out in ((lik, out_lik), (den, out_density)):
        with np.errstate(divide="ignore"):
            np.log(vals, out=out, where=vals > 0)
        out[vals <= 0] = LOG_FLOOR
    return out_lik


def log_range_batch(points: np.ndarray, senders: np.ndarray, weights: np.ndarray,
                    y: float, sigma_v2: float) -> tuple[np.ndarray, np.ndarray]:
    """Range-message terms at each query point, in closed form.

    Returns (log likelihood mixture, log ring-sample density): the first is
    sum_j w_j N(y - |p - s_j|; sigma_v2), the message integral as a function
    of the receiver location; the second additionally carries the 1/(2 pi r)
    Jacobian and is the density of ring-sampled message particles (used as an
    importance-proposal density).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    senders = np.ascontiguousarray(senders, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out_lik = np.empty(points.shape[0], dtype=np.float64)
    out_density = np.empty(points.shape[0], dtype=np.float64)
    if HAVE_NUMBA:
        _log_range_batch_numba(points, senders, weights, float(y), float(sigma_v2),
                               out_lik, out_density)
    else:
        _log_range_batch_numpy(points, senders, weights, float(y), float(sigma_v2),
                               out_lik, out_density)
    return out_lik, out_density
