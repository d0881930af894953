# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled eigen kernels for :mod:`rrbeam.matkit`.

Same algorithm and sweep order as ``_kernels_py`` so both backends agree to
rounding.
"""
from libc.math cimport fabs, sqrt

import numpy as np


def jacobi_eigh(double[:, :] a_in, double tol=1e-15, int max_sweeps=100):
    """Cyclic Jacobi on a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    diagonal order (unsorted) and eigenvectors as columns.
    """
    cdef Py_ssize_t n = a_in.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep = 0
    cdef double off, scale, apq, theta, t, c, s, akp, akq, vkp, vkq, apk, aqk

    a_np = np.array(a_in, dtype=np.float64, order="C", copy=True)
    v_np = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_np
    cdef double[:, ::1] v = v_np

    scale = 0.0
    for p in range(n):
        for q in range(n):
            scale += a[p, q] * a[p, q]
    scale = sqrt(scale)
    if scale == 0.0:
        return np.zeros(n), v_np, 0

    while sweep < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if sqrt(2.0 * off) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if fabs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        sweep += 1

    return np.array([a[k, k] for k in range(n)]), v_np, sweep

