# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures and results mirror :mod:`rankaudit._fallback`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


cdef inline double _softplus(double z) nogil:
    if z > 0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def power_iteration(double[:, ::1] P, double tol, Py_ssize_t max_iterations):
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t i, j, it = 0
    cdef double total, diff, pi_i
    cdef bint converged = False
    cur_arr = np.full(n, 1.0 / n)
    nxt_arr = np.empty(n)
    cdef double[::1] cur = cur_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] tmp
    with nogil:
        while it < max_iterations:
            it += 1
            for j in range(n):
                nxt[j] = 0.0
            for i in range(n):
                pi_i = cur[i]
                if pi_i == 0.0:
                    continue
                for j in range(n):
                    nxt[j] += pi_i * P[i, j]
            total = 0.0
            for j in range(n):
                total += nxt[j]
            diff = 0.0
            for j in range(n):
                nxt[j] /= total
                diff += fabs(nxt[j] - cur[j])
            tmp = cur
            cur = nxt
            nxt = tmp
            if diff < tol:
                converged = True
                break
    return np.asarray(cur).copy(), bool(converged), int(it)


def all_thresholds(double[::1] scores, cnp.int64_t[::1] levels, double[::1] thresholds):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t t = thresholds.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t r
    cdef double s, z, g, gs, loss = 0.0
    grad_s_arr = np.zeros(n)
    grad_b_arr = np.zeros(t)
    cdef double[::1] grad_s = grad_s_arr
    cdef double[::1] grad_b = grad_b_arr
    with nogil:
        for i in range(n):
            s = scores[i]
            r = levels[i]
            gs = 0.0
            for j in range(t):
                z = s - thresholds[j]
                if j < r:
                    loss += _softplus(-z)
                    g = _sigmoid(-z)
                    gs -= g
                    grad_b[j] += g
                else:
                    loss += _softplus(z)
                    g = _sigmoid(z)
                    gs += g
                    grad_b[j] -= g
            grad_s[i] = gs
    return loss, grad_s_arr, grad_b_arr


def midranks(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i = 0, j, k
    cdef double avg
    order_arr = np.argsort(np.asarray(x), kind="mergesort").astype(np.intp)
    cdef Py_ssize_t[::1] order = order_arr
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        while i < n:
            j = i + 1
            while j < n and x[order[j]] == x[order[i]]:
                j += 1
            avg = 0.5 * (i + j - 1) + 1.0
            for k in range(i, j):
                out[order[k]] = avg
            i = j
    return out_arr
