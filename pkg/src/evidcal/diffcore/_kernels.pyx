# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels for the gamma-family special functions.

Same algorithms as ``_kernels_py``: shift the argument up with the standard
recurrences until it is large enough, then evaluate an 8-term asymptotic
series. Agreement with the pure backend is a few ulps (libm vs numpy
transcendentals), covered by the backend-equivalence tests.
"""

from libc.math cimport log

import numpy as np

# B(2n)/(2n) for n = 1..8
cdef double PSI_C1 = 1.0 / 12.0
cdef double PSI_C2 = -1.0 / 120.0
cdef double PSI_C3 = 1.0 / 252.0
cdef double PSI_C4 = -1.0 / 240.0
cdef double PSI_C5 = 1.0 / 132.0
cdef double PSI_C6 = -691.0 / 32760.0
cdef double PSI_C7 = 1.0 / 12.0
cdef double PSI_C8 = -3617.0 / 8160.0

# B(2n) for n = 1..8
cdef double TRI_C1 = 1.0 / 6.0
cdef double TRI_C2 = -1.0 / 30.0
cdef double TRI_C3 = 1.0 / 42.0
cdef double TRI_C4 = -1.0 / 30.0
cdef double TRI_C5 = 5.0 / 66.0
cdef double TRI_C6 = -691.0 / 2730.0
cdef double TRI_C7 = 7.0 / 6.0
cdef double TRI_C8 = -3617.0 / 510.0

# B(2n)/(2n(2n-1)) for n = 1..8
cdef double LG_C1 = 1.0 / 12.0
cdef double LG_C2 = -1.0 / 360.0
cdef double LG_C3 = 1.0 / 1260.0
cdef double LG_C4 = -1.0 / 1680.0
cdef double LG_C5 = 1.0 / 1188.0
cdef double LG_C6 = -691.0 / 360360.0
cdef double LG_C7 = 1.0 / 156.0
cdef double LG_C8 = -3617.0 / 122400.0

cdef double HALF_LOG_TWO_PI = 0.9189385332046727


cdef inline double _digamma1(double x) nogil:
    cdef double acc = 0.0
    cdef double y = x
    cdef double r, r2, poly
    while y < 6.0:
        acc -= 1.0 / y
        y += 1.0
    r = 1.0 / y
    r2 = r * r
    poly = PSI_C7 + r2 * PSI_C8
    poly = PSI_C6 + r2 * poly
    poly = PSI_C5 + r2 * poly
    poly = PSI_C4 + r2 * poly
    poly = PSI_C3 + r2 * poly
    poly = PSI_C2 + r2 * poly
    poly = PSI_C1 + r2 * poly
    return acc + log(y) - 0.5 * r - r2 * poly


cdef inline double _trigamma1(double x) nogil:
    cdef double acc = 0.0
    cdef double y = x
    cdef double r, r2, poly
    while y < 6.0:
        acc += 1.0 / (y * y)
        y += 1.0
    r = 1.0 / y
    r2 = r * r
    poly = TRI_C7 + r2 * TRI_C8
    poly = TRI_C6 + r2 * poly
    poly = TRI_C5 + r2 * poly
    poly = TRI_C4 + r2 * poly
    poly = TRI_C3 + r2 * poly
    poly = TRI_C2 + r2 * poly
    poly = TRI_C1 + r2 * poly
    return acc + r + 0.5 * r2 + r * r2 * poly


cdef inline double _lgamma1(double x) nogil:
    cdef double acc = 0.0
    cdef double y = x
    cdef double r, r2, poly
    while y < 8.0:
        acc -= log(y)
        y += 1.0
    r = 1.0 / y
    r2 = r * r
    poly = LG_C7 + r2 * LG_C8
    poly = LG_C6 + r2 * poly
    poly = LG_C5 + r2 * poly
    poly = LG_C4 + r2 * poly
    poly = LG_C3 + r2 * poly
    poly = LG_C2 + r2 * poly
    poly = LG_C1 + r2 * poly
    return acc + (y - 0.5) * log(y) - y + HALF_LOG_TWO_PI + r * poly


def digamma(x):
    cdef double[::1] xv = x
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _digamma1(xv[i])
    return out


def trigamma(x):
    cdef double[::1] xv = x
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _trigamma1(xv[i])
    return out


def lgamma(x):
    cdef double[::1] xv = x
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _lgamma1(xv[i])
    return out
