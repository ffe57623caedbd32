# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Cox partial-likelihood kernel.

Mirrors the contract of ``_kernel_py.cox_stats`` with explicit loops: one
descending-time pass accumulates risk-set sums S0, S1, S2, and each group's
tied-event sums feed the Efron/Breslow term loop immediately (term entries
are grouped and ascending, so a single cursor walks them). Only the upper
triangle of the Hessian is accumulated and mirrored, so symmetry is exact.
"""

import numpy as np

from libc.math cimport exp, log


def cox_stats(double[:, ::1] x, long long[::1] event,
              long long[::1] group_start, long long[::1] group_end,
              long long[::1] term_group, double[::1] frac,
              double[::1] eta, double shift):
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t n_groups = group_start.shape[0]
    cdef Py_ssize_t n_terms = term_group.shape[0]

    grad_arr = np.zeros(p)
    hess_arr = np.zeros((p, p))
    s1_arr = np.zeros(p)
    s1d_arr = np.zeros(p)
    r1_arr = np.zeros(p)
    s2_arr = np.zeros((p, p))
    s2d_arr = np.zeros((p, p))

    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double[::1] s1 = s1_arr
    cdef double[::1] s1d = s1d_arr
    cdef double[::1] r1 = r1_arr
    cdef double[:, ::1] s2 = s2_arr
    cdef double[:, ::1] s2d = s2d_arr

    cdef double s0 = 0.0
    cdef double s0d, w, xi, f, s0t, inv
    cdef double loglik = 0.0
    cdef Py_ssize_t g, r, i, j
    cdef Py_ssize_t t = 0
    cdef bint overflow = False

    for g in range(n_groups):
        s0d = 0.0
        for i in range(p):
            s1d[i] = 0.0
            for j in range(i, p):
                s2d[i, j] = 0.0
        for r in range(group_start[g], group_end[g]):
            w = exp(eta[r] - shift)
            s0 += w
            for i in range(p):
                xi = x[r, i]
                s1[i] += w * xi
                for j in range(i, p):
                    s2[i, j] += w * xi * x[r, j]
            if event[r]:
                loglik += eta[r]
                s0d += w
                for i in range(p):
                    xi = x[r, i]
                    grad[i] += xi
                    s1d[i] += w * xi
                    for j in range(i, p):
                        s2d[i, j] += w * xi * x[r, j]
        while t < n_terms and term_group[t] == g:
            f = frac[t]
            s0t = s0 - f * s0d
            if s0t <= 0.0:
                overflow = True
                break
            loglik -= log(s0t) + shift
            inv = 1.0 / s0t
            for i in range(p):
                r1[i] = (s1[i] - f * s1d[i]) * inv
                grad[i] -= r1[i]
            for i in range(p):
                for j in range(i, p):
                    hess[i, j] -= (s2[i, j] - f * s2d[i, j]) * inv - r1[i] * r1[j]
            t += 1
        if overflow:
            # extreme eta spread exhausted the shifted exponentials; report
            # the step as -inf so the caller backs off
            return -np.inf, np.zeros(p), np.zeros((p, p))

    for i in range(p):
        for j in range(i + 1, p):
            hess[j, i] = hess[i, j]

    return loglik, grad_arr, hess_arr
