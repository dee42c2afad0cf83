# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-network kernels.

GEMMs are delegated to numpy's BLAS (faster than scipy's bundled one on
the reference machine); bias, activations, their derivatives and the
Adam update are fused C loops over row-major float64 buffers.
"""

import numpy as np

from libc.math cimport exp, sqrt, tanh

cdef enum:
    IDENTITY = 0
    RELU = 1
    LEAKY_RELU = 2
    SIGMOID = 3
    SOFTMAX = 4
    TANH = 5

cdef double LEAKY_SLOPE = 0.2


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _bias_activate(double* z, double* a, const double* b,
                         Py_ssize_t n, Py_ssize_t m, int act) noexcept nogil:
    cdef Py_ssize_t i, j, r
    cdef double mx, s, zz
    for i in range(n):
        r = i * m
        for j in range(m):
            z[r + j] += b[j]
    if act == IDENTITY:
        for i in range(n * m):
            a[i] = z[i]
    elif act == RELU:
        for i in range(n * m):
            a[i] = z[i] if z[i] > 0 else 0.0
    elif act == LEAKY_RELU:
        for i in range(n * m):
            zz = z[i]
            a[i] = zz if zz > 0 else LEAKY_SLOPE * zz
    elif act == SIGMOID:
        for i in range(n * m):
            a[i] = _sigmoid(z[i])
    elif act == TANH:
        for i in range(n * m):
            a[i] = tanh(z[i])
    else:
        for i in range(n):
            r = i * m
            mx = z[r]
            for j in range(1, m):
                if z[r + j] > mx:
                    mx = z[r + j]
            s = 0.0
            for j in range(m):
                a[r + j] = exp(z[r + j] - mx)
                s += a[r + j]
            s = 1.0 / s
            for j in range(m):
                a[r + j] *= s


cdef void _act_grad(const double* z, const double* a, const double* ga, double* dz,
                    Py_ssize_t n, Py_ssize_t m, int act) noexcept nogil:
    cdef Py_ssize_t i, j, r
    cdef double s
    if act == IDENTITY:
        for i in range(n * m):
            dz[i] = ga[i]
    elif act == RELU:
        for i in range(n * m):
            dz[i] = ga[i] if z[i] > 0 else 0.0
    elif act == LEAKY_RELU:
        for i in range(n * m):
            dz[i] = ga[i] if z[i] > 0 else LEAKY_SLOPE * ga[i]
    elif act == SIGMOID:
        for i in range(n * m):
            dz[i] = ga[i] * a[i] * (1.0 - a[i])
    elif act == TANH:
        for i in range(n * m):
            dz[i] = ga[i] * (1.0 - a[i] * a[i])
    else:
        for i in range(n):
            r = i * m
            s = 0.0
            for j in range(m):
                s += ga[r + j] * a[r + j]
            for j in range(m):
                dz[r + j] = a[r + j] * (ga[r + j] - s)


def dense_forward(x, W, double[::1] b, int act, z, a):
    cdef double[:, ::1] zv, av
    if act < 0 or act > TANH:
        raise ValueError(f"unknown activation code {act}")
    np.matmul(x, W.T, out=z)
    zv = z
    av = a
    if zv.shape[0] == 0:
        return
    with nogil:
        _bias_activate(&zv[0, 0], &av[0, 0], &b[0], zv.shape[0], zv.shape[1], act)


def dense_backward(x, W, z, a, ga, int act, bint from_preact, dW, db, dx):
    """Write parameter gradients into ``dW``/``db`` and, if given, ``dx``."""
    cdef double[:, ::1] zv, av, gv, dzv
    cdef double[::1] dbv = db
    cdef Py_ssize_t i, j, n, m
    if from_preact or act == IDENTITY:
        dz = ga
        dzv = ga
    else:
        dz = np.empty_like(ga)
        zv = z
        av = a
        gv = ga
        dzv = dz
        if dzv.shape[0] > 0:
            with nogil:
                _act_grad(&zv[0, 0], &av[0, 0], &gv[0, 0], &dzv[0, 0],
                          dzv.shape[0], dzv.shape[1], act)
    n = dzv.shape[0]
    m = dzv.shape[1]
    with nogil:
        for j in range(m):
            dbv[j] = 0.0
        for i in range(n):
            for j in range(m):
                dbv[j] += dzv[i, j]
    np.matmul(dz.T, x, out=dW)
    if dx is not None:
        np.matmul(dz, W, out=dx)


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - beta1 ** t, c2 = 1.0 - beta2 ** t
    cdef double gi, mi, vi
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)


cdef double _sigma(const double* W, const double* u, double* v,
                   Py_ssize_t m, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for j in range(k):
        v[j] = 0.0
    for i in range(m):
        for j in range(k):
            v[j] += u[i] * W[i * k + j]
    for j in range(k):
        s += v[j] * v[j]
    s = sqrt(s)
    if s < 1e-12:
        s = 1e-12
    for j in range(k):
        v[j] /= s
    return s


def spectral_sigma(double[:, ::1] W, double[::1] u, double[::1] v):
    """sigma = ||W^T u||, with v <- W^T u / sigma written in place."""
    return _sigma(&W[0, 0], &u[0], &v[0], W.shape[0], W.shape[1])


def power_iteration(double[:, ::1] W, double[::1] u, double[::1] v, int n_iter):
    cdef Py_ssize_t m = W.shape[0], k = W.shape[1], it, i, j
    cdef double s, acc
    cdef double[::1] w = np.empty(m)
    with nogil:
        for it in range(n_iter):
            _sigma(&W[0, 0], &u[0], &v[0], m, k)
            s = 0.0
            for i in range(m):
                acc = 0.0
                for j in range(k):
                    acc = acc + W[i, j] * v[j]
                w[i] = acc
                s += acc * acc
            s = sqrt(s)
            if s > 1e-12:
                for i in range(m):
                    u[i] = w[i] / s
        s = _sigma(&W[0, 0], &u[0], &v[0], m, k)
    return s
