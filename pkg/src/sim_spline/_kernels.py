"""Compiled inner loops for the index line search."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def path_losses(taus, s_beta, s_b, bb, nb2, lo, width, coefs, left, resid0, w):
    """Weighted mean squared residual along the sphere path, one value per ``tau``.

    The index at ``tau`` is ``(A X beta - B X b) / |A beta - B b|`` with the
    path coefficients ``A``, ``B``; the link is a per-span polynomial on
    [0, 1] (``coefs`` highest power first) evaluated at the clamped unit
    coordinate.  Degenerate path points get ``inf``.
    """
    n = s_beta.size
    deg = coefs.shape[0] - 1
    n_span = left.size
    out = np.empty(taus.size)
    for k in range(taus.size):
        tau = taus[k]
        t2 = tau * tau
        den = 4.0 - t2 * bb * bb + t2 * nb2
        ca = 4.0 + t2 * (bb * bb - nb2) + 4.0 * tau * bb
        cb = 4.0 * tau
        nrm2 = ca * ca - 2.0 * ca * cb * bb + cb * cb * nb2
        if den < 1e-12 or nrm2 <= 0.0:
            out[k] = np.inf
            continue
        inv = 1.0 / math.sqrt(nrm2)
        acc = 0.0
        for i in range(n):
            s = (ca * s_beta[i] - cb * s_b[i]) * inv
            u = (s - lo) / width
            if u < 0.0:
                u = 0.0
            elif u > 1.0:
                u = 1.0
            j = int(u * n_span)
            if j > n_span - 1:
                j = n_span - 1
            t = u - left[j]
            g = coefs[0, j]
            for d in range(1, deg + 1):
                g = g * t + coefs[d, j]
            r = resid0[i] - g
            acc += w[i] * r * r
        out[k] = acc / n
    return out
