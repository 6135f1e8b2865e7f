"""Hot inner loops of the simulator, in numba and pure-numpy flavours.

Both flavours consume pre-drawn random arrays (one uniform and two standard
normals per mother cell) in the same order, so for a given generator state
they produce bit-identical offspring. Backend choice lives in
:mod:`gwbar.backend`; correctness never depends on it.

Per mother with trait x and uniform u:

* u < p10: both daughters alive, e0 = sigma*g0 and
  e1 = sigma*(rho*g0 + sqrt(1-rho^2)*g1), giving covariance rho*sigma^2;
* u < p10 + p0: only the new pole, noise sigma0*g0;
* u < p10 + p0 + p1: only the old pole, noise sigma1*g0;
* otherwise no alive daughter.
"""

from __future__ import annotations

import numpy as np

from .backend import HAS_NUMBA, USE_NUMBA, njit


def _step_loop(ids, values, u, g0, g1, p10, p0, p1, a0, b0, a1, b1, a0p, b0p, a1p, b1p, sig, s_corr, s_orth, sig0, sig1):
    k = ids.shape[0]
    out_ids = np.empty(2 * k, dtype=np.uint64)
    out_vals = np.empty(2 * k, dtype=np.float64)
    n = 0
    t0 = p10
    t1 = p10 + p0
    t2 = p10 + p0 + p1
    one = np.uint64(1)
    for j in range(k):
        x = values[j]
        base = ids[j] << one
        if u[j] < t0:
            out_ids[n] = base
            out_vals[n] = a0 * x + b0 + sig * g0[j]
            n += 1
            out_ids[n] = base | one
            out_vals[n] = a1 * x + b1 + s_corr * g0[j] + s_orth * g1[j]
            n += 1
        elif u[j] < t1:
            out_ids[n] = base
            out_vals[n] = a0p * x + b0p + sig0 * g0[j]
            n += 1
        elif u[j] < t2:
            out_ids[n] = base | one
            out_vals[n] = a1p * x + b1p + sig1 * g0[j]
            n += 1
    return out_ids[:n], out_vals[:n]


def step_numpy(ids, values, u, g0, g1, p10, p0, p1, a0, b0, a1, b1, a0p, b0p, a1p, b1p, sig, s_corr, s_orth, sig0, sig1):
    """Vectorised twin of the jitted generation step."""
    both = u < p10
    new_only = (u >= p10) & (u < p10 + p0)
    old_only = (u >= p10 + p0) & (u < p10 + p0 + p1)
    has_new = both | new_only
    has_old = both | old_only

    new_vals = np.where(both, a0 * values + b0 + sig * g0, a0p * values + b0p + sig0 * g0)
    old_vals = np.where(
        both,
        a1 * values + b1 + s_corr * g0 + s_orth * g1,
        a1p * values + b1p + sig1 * g0,
    )
    base = ids << np.uint64(1)
    child_ids = np.concatenate([base[has_new], (base | np.uint64(1))[has_old]])
    child_vals = np.concatenate([new_vals[has_new], old_vals[has_old]])
    order = np.argsort(child_ids, kind="stable")
    return child_ids[order], child_vals[order]


def _aux_chain_loop(y0, a, b, s, e):
    n = a.shape[0]
    y = np.empty(n + 1, dtype=np.float64)
    y[0] = y0
    for k in range(n):
        y[k + 1] = a[k] * y[k] + b[k] + s[k] * e[k]
    return y


def aux_chain_numpy(y0, a, b, s, e):
    # Linear recursion; the cumprod trick underflows for |a| < 1, so loop.
    return _aux_chain_loop(y0, a, b, s, e)


if HAS_NUMBA:
    step_numba = njit(cache=True)(_step_loop)
    aux_chain_numba = njit(cache=True)(_aux_chain_loop)
else:  # pragma: no cover
    step_numba = None
    aux_chain_numba = None


def active_step():
    return step_numba if USE_NUMBA else step_numpy


def active_aux_chain():
    return aux_chain_numba if USE_NUMBA else aux_chain_numpy
