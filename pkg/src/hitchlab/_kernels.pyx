# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled harmonic-map energy kernels; same interface as ``_kernels_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sinh, sqrt

cnp.import_array()

NAME = "cython"

cdef extern from "math.h" nogil:
    long double asinhl(long double)
    long double sqrtl(long double)


cdef object _ld(long double v):
    out = np.zeros((), dtype=np.longdouble)
    (<long double*>cnp.PyArray_DATA(out))[0] = v
    return out[()]


cdef inline long double _dist(double[:, :] x, double[:, :, :] pull, Py_ssize_t e, Py_ssize_t a,
                              Py_ssize_t b, double* y) nogil:
    # both points renormalized in extended precision, so rounding off the
    # hyperboloid does not show up in the energy
    cdef int i
    cdef long double d0, d1, d2, q, nx, ny
    cdef long double yl[3]
    for i in range(3):
        yl[i] = (<long double>pull[e, i, 0] * x[b, 0] + <long double>pull[e, i, 1] * x[b, 1]
                 + <long double>pull[e, i, 2] * x[b, 2])
        y[i] = <double>yl[i]
    ny = sqrtl(yl[2] * yl[2] - yl[0] * yl[0] - yl[1] * yl[1])
    nx = sqrtl(<long double>x[a, 2] * x[a, 2] - <long double>x[a, 0] * x[a, 0]
               - <long double>x[a, 1] * x[a, 1])
    d0 = x[a, 0] / nx - yl[0] / ny
    d1 = x[a, 1] / nx - yl[1] / ny
    d2 = x[a, 2] / nx - yl[2] / ny
    q = d0 * d0 + d1 * d1 - d2 * d2
    if q < 0:
        q = 0
    return 2 * asinhl(sqrtl(q) / 2)


def harmonic_energy(double[:, :] x, double[:, :, :] pull, long[:] src, long[:] tgt, double[:] w):
    cdef Py_ssize_t e, n = src.shape[0]
    cdef long double d, acc = 0
    cdef double y[3]
    with nogil:
        for e in range(n):
            d = _dist(x, pull, e, src[e], tgt[e], y)
            acc += w[e] * d * d
    return _ld(acc / 2)


def harmonic_energy_grad(double[:, :] x, double[:, :, :] pull, long[:] src, long[:] tgt, double[:] w):
    cdef Py_ssize_t e, a, b, n = src.shape[0]
    cdef int i
    cdef long double dl, acc = 0
    cdef double d, c, scale, k
    cdef double y[3]
    cdef double lxy[3]
    cdef double lyx[3]
    grad_arr = np.zeros((x.shape[0], 3))
    cdef double[:, :] grad = grad_arr
    with nogil:
        for e in range(n):
            a = src[e]
            b = tgt[e]
            dl = _dist(x, pull, e, a, b, y)
            acc += w[e] * dl * dl
            d = <double>dl
            c = -(x[a, 0] * y[0] + x[a, 1] * y[1] - x[a, 2] * y[2])
            if d > 1e-8:
                scale = d / sinh(d)
            else:
                scale = 1.0 - d * d / 6.0
            k = w[e] * scale
            for i in range(3):
                lxy[i] = y[i] - c * x[a, i]
                lyx[i] = x[a, i] - c * y[i]
            for i in range(3):
                grad[a, i] -= k * lxy[i]
            # pull^-1 = H pull^T H
            for i in range(3):
                grad[b, i] -= k * (
                    (pull[e, 0, i] * lyx[0] + pull[e, 1, i] * lyx[1] - pull[e, 2, i] * lyx[2])
                    * (-1.0 if i == 2 else 1.0)
                )
    return _ld(acc / 2), grad_arr
