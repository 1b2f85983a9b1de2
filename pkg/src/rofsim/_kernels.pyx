# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sample-by-sample loops."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def sdm_loop(const double[::1] u, const double[:, ::1] A, const double[::1] bu,
             const double[::1] bv, const double[::1] c, double du, double limit,
             double[::1] x):
    """Run a 1-bit state-space modulator loop over ``u``.

    ``x`` is updated in place and holds the final state on return.
    Returns the output bits (int8, +/-1) and the list of reset indices.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double y, v, s
    cdef bint reset
    out = np.empty(n, dtype=np.int8)
    cdef signed char[::1] vo = out
    cdef double[::1] xn = np.empty(m, dtype=np.float64)
    resets = []

    for k in range(n):
        y = du * u[k]
        for j in range(m):
            y += c[j] * x[j]
        if y >= 0.0:
            v = 1.0
            vo[k] = 1
        else:
            v = -1.0
            vo[k] = -1
        reset = False
        for i in range(m):
            s = bu[i] * u[k] + bv[i] * v
            for j in range(m):
                s += A[i, j] * x[j]
            xn[i] = s
            if fabs(s) > limit:
                reset = True
        if reset:
            for i in range(m):
                x[i] = 0.0
            resets.append(k)
        else:
            for i in range(m):
                x[i] = xn[i]
    return out, resets
