"""The first variation of the empirical loss at a fixed mixing measure.

For rho fixed, the field is

    x -> -(1/N) sum_i phi(x - X_i) / (rho*phi)(X_i),

and minus its gradient is the particle velocity of the Wasserstein part of
every scheme. The log-marginals of rho are cached at construction, so each
evaluation costs O(N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from npmle import _backend
from npmle.kernel import KernelSpec
from npmle.mixture import ParticleMixture, SampleSet, log_marginals


@dataclass(frozen=True, eq=False)
class FirstVariationField:
    kernel: KernelSpec
    samples: SampleSet
    log_marginals: np.ndarray

    @classmethod
    def at(cls, k: KernelSpec, s: SampleSet, rho: ParticleMixture) -> "FirstVariationField":
        lm = log_marginals(k, s, rho)
        lm.setflags(write=False)
        return cls(k, s, lm)

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        d = self.kernel.dimension
        if x.shape[-1:] != (d,):
            if d == 1 and x.ndim <= 1:
                # bare scalars / 1-D grids for the d = 1 case
                return np.ascontiguousarray(x.reshape(-1, 1)), x.shape
            raise ValueError(f"points must have trailing dimension {d}, got shape {x.shape}")
        return np.ascontiguousarray(x.reshape(-1, d)), x.shape[:-1]

    def _run(self, x, want_grad):
        pts, shape = self._points(x)
        n, d = pts.shape
        vals = np.empty(n)
        grads = np.empty((n, d)) if want_grad else np.empty((0, d))
        _backend.field_values(self.samples.data, self.log_marginals, pts, vals, grads, want_grad)
        return vals, grads, shape

    def eval(self, x):
        """Field value(s); scalar for a single point."""
        vals, _, shape = self._run(x, False)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def grad(self, x):
        """Spatial gradient(s), shape ``(..., d)``."""
        _, grads, shape = self._run(x, True)
        d = self.kernel.dimension
        if shape == ():
            return grads[0]
        if d == 1 and np.asarray(x).shape == shape:
            return grads.reshape(shape + (1,))
        return grads.reshape(shape + (d,))

    def integral_against(self, rho: ParticleMixture) -> float:
        """sum_j w_j * field(mu_j); equals -1 when rho built this field."""
        return float(np.dot(rho.weights, self.eval(rho.locations)))
