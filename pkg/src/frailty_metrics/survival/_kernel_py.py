"""Pure-NumPy Cox partial-likelihood kernel (fallback backend).

Computes the log partial likelihood, score vector, and Hessian in one pass
over rows sorted by descending time. Risk-set sums are prefix sums in that
order; exponentials are shifted by max(eta) for stability. Tied event times
contribute d terms per group with weight frac = l/d under Efron tie handling
and frac = 0 under Breslow, which makes the two methods share one code path.
"""

import numpy as np


def cox_stats(x, event, group_start, group_end, term_group, frac, eta, shift):
    """Return (loglik, grad, hess) for one beta evaluation.

    Parameters are the prepared descending-time arrays: ``x`` (n, p),
    ``event`` 0/1, group boundaries over tied times, the per-term group
    index and Efron fraction, the linear predictor ``eta`` = x @ beta, and
    ``shift`` = max(eta).
    """
    n, p = x.shape
    w = np.exp(eta - shift)
    ev = event.astype(np.float64)
    we = w * ev

    xx = x[:, :, None] * x[:, None, :]
    last = group_end - 1

    s0 = np.cumsum(w)[last]
    s1 = np.cumsum(w[:, None] * x, axis=0)[last]
    s2 = np.cumsum(w[:, None, None] * xx, axis=0)[last]
    s0d = np.add.reduceat(we, group_start)
    s1d = np.add.reduceat(we[:, None] * x, group_start, axis=0)
    s2d = np.add.reduceat(we[:, None, None] * xx, group_start, axis=0)

    s0t = s0[term_group] - frac * s0d[term_group]
    if np.any(s0t <= 0.0):
        # extreme eta spread exhausted the shifted exponentials; report the
        # step as -inf so the caller backs off
        return -np.inf, np.zeros(p), np.zeros((p, p))

    loglik = float(eta @ ev) - float(np.sum(np.log(s0t))) - len(term_group) * shift

    r1 = (s1[term_group] - frac[:, None] * s1d[term_group]) / s0t[:, None]
    grad = ev @ x - r1.sum(axis=0)

    s2t = (s2[term_group] - frac[:, None, None] * s2d[term_group]) / s0t[:, None, None]
    hess = -(s2t.sum(axis=0) - np.einsum("ti,tj->ij", r1, r1))
    return loglik, grad, hess
