# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled hot loops for the isotropic Gaussian kernel (GIL released)."""

import numpy as np

cdef extern from "_kernels_impl.h" nogil:
    void npmle_mixture_stats(const double *X, const double *muT, const double *logw,
                             double *logmarg, double *Q, double *PT, double *a,
                             double *invw, Py_ssize_t N, Py_ssize_t m, Py_ssize_t d,
                             int want_stats)
    void npmle_field_values(const double *X, const double *logmarg, const double *pts,
                            double *vals, double *grads, double *c, double *e,
                            Py_ssize_t N, Py_ssize_t n, Py_ssize_t d, int want_grad)


def mixture_stats(const double[:, ::1] X, const double[:, ::1] mu,
                  const double[::1] logw, double[::1] logmarg,
                  double[::1] Q, double[:, ::1] P, bint want_stats):
    """Fill ``logmarg`` with log (rho * phi)(X_i); optionally Q_j and P_j.

    Q_j = sum_i phi(X_i - mu_j) / (rho * phi)(X_i) and P_j is the same sum
    weighted by X_i.
    """
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], m = mu.shape[0]
    if mu.shape[1] != d or logw.shape[0] != m or logmarg.shape[0] != N:
        raise ValueError("inconsistent shapes")
    if want_stats and (Q.shape[0] != m or P.shape[0] != m or P.shape[1] != d):
        raise ValueError("inconsistent shapes")
    cdef double[::1] a = np.empty(m)
    cdef double[::1] invw = np.empty(m)
    cdef const double[:, ::1] muT = np.ascontiguousarray(np.asarray(mu).T)
    cdef double[:, ::1] PT = np.empty((d, m))
    cdef double *qp = &Q[0] if want_stats else NULL
    with nogil:
        npmle_mixture_stats(&X[0, 0], &muT[0, 0], &logw[0], &logmarg[0], qp, &PT[0, 0],
                            &a[0], &invw[0], N, m, d, want_stats)
    if want_stats:
        P[:, :] = PT.T


def field_values(const double[:, ::1] X, const double[::1] logmarg,
                 const double[:, ::1] pts, double[::1] vals,
                 double[:, ::1] grads, bint want_grad):
    """First variation (and its gradient) at each row of ``pts``."""
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], n = pts.shape[0]
    if n == 0:
        return
    if pts.shape[1] != d or vals.shape[0] != n or logmarg.shape[0] != N:
        raise ValueError("inconsistent shapes")
    if want_grad and (grads.shape[0] != n or grads.shape[1] != d):
        raise ValueError("inconsistent shapes")
    cdef double[::1] c = np.empty(N)
    cdef double[::1] e = np.empty(N)
    cdef double *gp = &grads[0, 0] if want_grad else NULL
    with nogil:
        npmle_field_values(&X[0, 0], &logmarg[0], &pts[0, 0], &vals[0], gp, &c[0],
                           &e[0], N, n, d, want_grad)
