"""Isotropic Gaussian kernel and the regularity quantities the theory needs.

The public surface (log density, gradient, radial envelopes, global
derivative bounds) is everything the optimizers and the certificate
constants consume, so another strictly positive, smooth, bounded kernel
can be added as a new :class:`KernelFamily` member.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class KernelFamily(enum.Enum):
    ISOTROPIC_GAUSSIAN = "isotropic_gaussian"


@dataclass(frozen=True)
class KernelSpec:
    dimension: int
    family: KernelFamily = KernelFamily.ISOTROPIC_GAUSSIAN

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")

    @property
    def log_peak(self) -> float:
        """log phi(0)."""
        return -0.5 * self.dimension * LOG_2PI

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.dimension,):
            raise ValueError(
                f"expected trailing dimension {self.dimension}, got shape {z.shape}"
            )
        return z

    def log_density(self, z):
        """log phi(z); ``z`` may be a single point or a stack of points."""
        z = self._check(z)
        return self.log_peak - 0.5 * np.einsum("...k,...k->...", z, z)

    def density(self, z):
        return np.exp(self.log_density(z))

    def grad_density(self, z):
        z = self._check(z)
        return -z * self.density(z)[..., None]

    def envelope_upper(self, r):
        """sup of phi over ||x|| >= r."""
        return math.exp(self.log_envelope_upper(r))

    def envelope_lower(self, r):
        """inf of phi over ||x|| <= r."""
        return math.exp(self.log_envelope_lower(r))

    def log_envelope_upper(self, r) -> float:
        if r < 0:
            raise ValueError(f"radius must be nonnegative, got {r}")
        return self.log_peak - 0.5 * r * r

    def log_envelope_lower(self, r) -> float:
        # radial and decreasing, so sup and inf are both attained on ||x|| = r
        return self.log_envelope_upper(r)

    def derivative_bounds(self) -> tuple[float, float]:
        """(G, H): global bounds on ||grad phi|| and the Hessian operator norm.

        ||grad phi|| = r phi(r) peaks at r = 1. The Hessian (z z^T - I) phi has
        norm max(|r^2 - 1|, 1) phi(r), which peaks at the origin.
        """
        peak = math.exp(self.log_peak)
        return peak * math.exp(-0.5), peak
