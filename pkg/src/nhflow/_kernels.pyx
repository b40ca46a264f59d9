# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Keep in step with ``_kernels_py.py``."""

import numpy as np
from libc.math cimport cos, sin, sqrt, fabs, M_PI


def unicycle_hold(x0, double t_start, double eps, int substeps, double a1, double a2, double a12, int kappa):
    cdef double h = eps / substeps
    cdef double w = 2.0 * M_PI * kappa / eps
    cdef double amp = 2.0 * sqrt(M_PI * kappa * fabs(a12) / eps)
    cdef double sgn = 1.0 if a12 > 0 else (-1.0 if a12 < 0 else 0.0)
    cdef double ac = amp * sgn
    out = np.empty((substeps + 1, 3))
    cdef double[:, ::1] o = out
    cdef double x1 = x0[0], x2 = x0[1], x3 = x0[2]
    cdef double ta, tb, tc, ua1, ua2, ub1, ub2, uc1, uc2, th
    cdef double k1x, k1y, k1t, k2x, k2y, k2t, k3x, k3y, k3t, k4x, k4y, k4t
    cdef int i
    o[0, 0] = x1
    o[0, 1] = x2
    o[0, 2] = x3
    for i in range(substeps):
        ta = t_start + i * h
        tb = t_start + (i + 0.5) * h
        tc = t_start + (i + 1) * h
        ua1 = a1 + ac * cos(w * ta)
        ua2 = a2 + amp * sin(w * ta)
        ub1 = a1 + ac * cos(w * tb)
        ub2 = a2 + amp * sin(w * tb)
        uc1 = a1 + ac * cos(w * tc)
        uc2 = a2 + amp * sin(w * tc)

        k1x = ua1 * cos(x3)
        k1y = ua1 * sin(x3)
        k1t = ua2
        th = x3 + 0.5 * h * k1t
        k2x = ub1 * cos(th)
        k2y = ub1 * sin(th)
        k2t = ub2
        th = x3 + 0.5 * h * k2t
        k3x = ub1 * cos(th)
        k3y = ub1 * sin(th)
        k3t = ub2
        th = x3 + h * k3t
        k4x = uc1 * cos(th)
        k4y = uc1 * sin(th)
        k4t = uc2

        x1 = x1 + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        x2 = x2 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        x3 = x3 + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        o[i + 1, 0] = x1
        o[i + 1, 1] = x2
        o[i + 1, 2] = x3
    return out
