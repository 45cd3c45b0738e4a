# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1

cnp.import_array()


cdef inline Py_ssize_t _locate(const double[:] xs, double u) noexcept nogil:
    # last index k with xs[k] <= u, or -1
    cdef Py_ssize_t lo = 0, hi = xs.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if xs[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo - 1


def pwl_eval(xs, vs, double s, u):
    cdef const double[:] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:] V = np.ascontiguousarray(vs, dtype=np.float64)
    uarr = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:] U = uarr.reshape(-1)
    out = np.empty(U.shape[0])
    cdef double[:] O = out
    cdef Py_ssize_t N = X.shape[0], i, k
    cdef double ui, h
    with nogil:
        for i in range(U.shape[0]):
            ui = U[i]
            k = _locate(X, ui)
            if k < 0:
                O[i] = V[0] * exp((ui - X[0]) / s)
            elif k >= N - 1:
                O[i] = 1.0 - (1.0 - V[N - 1]) * exp(-(ui - X[N - 1]) / s)
            else:
                h = X[k + 1] - X[k]
                O[i] = V[k] + (V[k + 1] - V[k]) * (ui - X[k]) / h
    return out.reshape(uarr.shape)


def pwl_deriv(xs, vs, double s, u):
    cdef const double[:] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:] V = np.ascontiguousarray(vs, dtype=np.float64)
    uarr = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:] U = uarr.reshape(-1)
    out = np.empty(U.shape[0])
    cdef double[:] O = out
    cdef Py_ssize_t N = X.shape[0], i, k
    cdef double ui
    with nogil:
        for i in range(U.shape[0]):
            ui = U[i]
            k = _locate(X, ui)
            if k < 0:
                O[i] = V[0] / s * exp((ui - X[0]) / s)
            elif k >= N - 1:
                O[i] = (1.0 - V[N - 1]) / s * exp(-(ui - X[N - 1]) / s)
            else:
                O[i] = (V[k + 1] - V[k]) / (X[k + 1] - X[k])
    return out.reshape(uarr.shape)


cdef inline double _tail_sq(double p, double d, double s) noexcept nogil:
    return d + 2.0 * p * s * expm1(-d / s) - 0.5 * p * p * s * expm1(-2.0 * d / s)


def pwl_crps(xs, vs, double s, u0):
    cdef const double[:] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:] V = np.ascontiguousarray(vs, dtype=np.float64)
    uarr = np.ascontiguousarray(u0, dtype=np.float64)
    cdef const double[:] U = uarr.reshape(-1)
    cdef Py_ssize_t N = X.shape[0], i, k
    A_arr = np.empty(N)
    B_arr = np.empty(N)
    out = np.empty(U.shape[0])
    cdef double[:] A = A_arr
    cdef double[:] B = B_arr
    cdef double[:] O = out
    cdef double h, v0, v1, w0, w1, ui, qm, wm, d
    cdef double vlo = V[0], whi = 1.0 - V[N - 1]
    with nogil:
        A[0] = 0.5 * vlo * vlo * s
        for k in range(N - 1):
            h = X[k + 1] - X[k]
            v0 = V[k]
            v1 = V[k + 1]
            A[k + 1] = A[k] + h * (v0 * v0 + v0 * v1 + v1 * v1) / 3.0
        B[N - 1] = 0.5 * whi * whi * s
        for k in range(N - 2, -1, -1):
            h = X[k + 1] - X[k]
            w0 = 1.0 - V[k]
            w1 = 1.0 - V[k + 1]
            B[k] = B[k + 1] + h * (w0 * w0 + w0 * w1 + w1 * w1) / 3.0
        for i in range(U.shape[0]):
            ui = U[i]
            k = _locate(X, ui)
            if k < 0:
                d = X[0] - ui
                O[i] = 0.5 * vlo * vlo * s * exp(-2.0 * d / s) + _tail_sq(vlo, d, s) + B[0]
            elif k >= N - 1:
                d = ui - X[N - 1]
                O[i] = A[N - 1] + _tail_sq(whi, d, s) + 0.5 * whi * whi * s * exp(-2.0 * d / s)
            else:
                v0 = V[k]
                v1 = V[k + 1]
                qm = v0 + (v1 - v0) * (ui - X[k]) / (X[k + 1] - X[k])
                wm = 1.0 - qm
                w1 = 1.0 - v1
                O[i] = (A[k] + (ui - X[k]) * (v0 * v0 + v0 * qm + qm * qm) / 3.0
                        + (X[k + 1] - ui) * (wm * wm + wm * w1 + w1 * w1) / 3.0 + B[k + 1])
    return out.reshape(uarr.shape)


def replicated_linear_pit(sorted_scores, test_scores, scales):
    cdef const double[:, :] S = np.ascontiguousarray(sorted_scores, dtype=np.float64)
    cdef const double[:] T = np.ascontiguousarray(test_scores, dtype=np.float64)
    cdef const double[:] SC = np.ascontiguousarray(scales, dtype=np.float64)
    cdef Py_ssize_t R = S.shape[0], n = S.shape[1], r, lo, hi, mid
    out = np.empty(R)
    cdef double[:] O = out
    cdef double t, gap
    with nogil:
        for r in range(R):
            t = T[r]
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                if S[r, mid] <= t:
                    lo = mid + 1
                else:
                    hi = mid
            # lo = number of knots at or below t
            if lo == 0:
                O[r] = exp((t - S[r, 0]) / SC[r]) / (n + 1)
            elif lo >= n:
                O[r] = 1.0 - exp(-(t - S[r, n - 1]) / SC[r]) / (n + 1)
            else:
                gap = S[r, lo] - S[r, lo - 1]
                O[r] = (lo + (t - S[r, lo - 1]) / gap) / (n + 1)
    return out
