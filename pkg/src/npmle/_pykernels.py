"""NumPy implementations of the hot loops; same signatures as ``_ckernels``."""

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK = 1 << 21  # max entries per temporary (rows x columns)


def _sqdist(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def mixture_stats(X, mu, logw, logmarg, Q, P, want_stats):
    N, d = X.shape
    m = mu.shape[0]
    const = -0.5 * d * _LOG_2PI
    invw = np.exp(-np.asarray(logw))
    if want_stats:
        Q[:] = 0.0
        P[:] = 0.0
    rows = max(1, _CHUNK // max(m * d, 1))
    for start in range(0, N, rows):
        Xb = X[start:start + rows]
        a = np.asarray(logw)[None, :] - 0.5 * _sqdist(Xb, mu)
        mx = a.max(axis=1, keepdims=True)
        e = np.exp(a - mx)
        tot = e.sum(axis=1)
        logmarg[start:start + rows] = mx[:, 0] + np.log(tot) + const
        if want_stats:
            q = e * invw[None, :] / tot[:, None]
            Q += q.sum(axis=0)
            P += q.T @ Xb


def field_values(X, logmarg, pts, vals, grads, want_grad):
    N, d = X.shape
    const = -0.5 * d * _LOG_2PI
    c = const - np.asarray(logmarg)
    rows = max(1, _CHUNK // max(N * d, 1))
    for start in range(0, pts.shape[0], rows):
        pb = pts[start:start + rows]
        diff = X[None, :, :] - pb[:, None, :]
        e = np.exp(c[None, :] - 0.5 * np.einsum("pik,pik->pi", diff, diff))
        vals[start:start + rows] = -e.sum(axis=1) / N
        if want_grad:
            # sum e_i (X_i - x) directly; e @ X - sum(e) x cancels when one term dominates
            grads[start:start + rows] = -np.einsum("pi,pik->pk", e, diff) / N
