"""Closed-form population objects for a point-mass truth rho* = delta_0.

Everything here is isotropic: the fitted measure is N(mu, s2 I_d) and the
population loss drops its additive constant (d/2) log(2 pi).
"""

from __future__ import annotations

import math

import numpy as np


def _loss(mu_sq, s2, d):
    return 0.5 * d * np.log1p(s2) + 0.5 * d / (1.0 + s2) + 0.5 * mu_sq / (1.0 + s2)


def gaussian_population_loss(mu, sigma2: float, d: int) -> float:
    """Population negative log-likelihood of N(mu, sigma2 I_d) against delta_0 data.

    0.5 log det(S + I) + 0.5 tr (S + I)^-1 + 0.5 mu^T (S + I)^-1 mu, S = sigma2 I.
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (d,))
    return float(_loss(float(mu @ mu), sigma2, d))


def bw_rhs(s2):
    return -2.0 * s2 * s2 / (s2 + 1.0) ** 2


def bw_flow(T: float, dt: float, sigma2_0: float = 1.0):
    """RK4 for the per-coordinate variance of the Bures-Wasserstein flow.

    Returns a dict of arrays ``t``, ``sigma2``, ``lower`` = 1/(1+2t) and
    ``upper`` = 2/(2+t).
    """
    if T < 0 or not dt > 0:
        raise ValueError(f"need T >= 0 and dt > 0, got T={T}, dt={dt}")
    n = int(math.ceil(T / dt - 1e-12)) if T > 0 else 0
    t = np.empty(n + 1)
    y = np.empty(n + 1)
    t[0], y[0] = 0.0, sigma2_0
    for i in range(n):
        h = min(dt, T - t[i]) if i == n - 1 else dt
        s = y[i]
        k1 = bw_rhs(s)
        k2 = bw_rhs(s + 0.5 * h * k1)
        k3 = bw_rhs(s + 0.5 * h * k2)
        k4 = bw_rhs(s + h * k3)
        y[i + 1] = s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t[i + 1] = t[i] + h
    return {"t": t, "sigma2": y, "lower": 1.0 / (1.0 + 2.0 * t), "upper": 2.0 / (2.0 + t)}


def pushforward_v0(x):
    """Initial Wasserstein velocity -(1/3)(4/3)^(d/2) exp(-|x|^2/6) x."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.einsum("...k,...k->...", x, x)
    return -(1.0 / 3.0) * (4.0 / 3.0) ** (d / 2) * np.exp(-r2 / 6.0)[..., None] * x


def _ratio_grad(y):
    # grad of phi(y) / N(0, 2I)(y) by the quotient rule: ratio * (-y + y/2)
    d = y.shape[-1]
    r2 = np.einsum("...k,...k->...", y, y)
    ratio = 2.0 ** (d / 2) * np.exp(-r2 / 2.0 + r2 / 4.0)
    return -0.5 * ratio[..., None] * y


def pushforward_v0_quadrature(x, n_nodes: int = 200):
    """The same velocity from its defining integral E[grad ratio(x + Z)], Z ~ N(0, I).

    Tensor-product Gauss-Hermite (probabilists') rule with ``n_nodes`` per axis.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if d > 3:
        raise ValueError(f"tensor quadrature supports d <= 3, got d={d}")
    z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.ones(nodes.shape[0])
    for wk in np.meshgrid(*([w] * d), indexing="ij"):
        weights = weights * wk.reshape(-1)
    pts = x.reshape(-1, d)
    out = np.array([weights @ _ratio_grad(p + nodes) for p in pts])
    return out.reshape(x.shape)


def geodesic_scan(sigma2_0: float, sigma2_1: float, steps: int = 101):
    """Population loss along the W2 geodesic between N(0, s0) and N(0, s1) in 1-D.

    Standard deviations interpolate linearly; ``sigma2_1`` may be 0 (point mass).
    Returns ``(t, loss)`` arrays.
    """
    if steps < 3:
        raise ValueError(f"need at least 3 scan points, got {steps}")
    if sigma2_0 < 0 or sigma2_1 < 0:
        raise ValueError("variances must be nonnegative")
    t = np.linspace(0.0, 1.0, steps)
    sd = (1.0 - t) * math.sqrt(sigma2_0) + t * math.sqrt(sigma2_1)
    return t, _loss(0.0, sd * sd, 1)


def second_differences(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[2:] - 2.0 * v[1:-1] + v[:-2]
