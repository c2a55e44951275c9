"""Optimality certificates and the constants behind the step-size guarantee.

A mixing measure is an NPMLE iff its first variation is >= -1 everywhere.
In one dimension the infimum is approximated on a regular grid whose nodes
are integer multiples of the spacing, so halving the spacing yields a
superset grid and the reported gap can only grow under refinement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from npmle.first_variation import FirstVariationField
from npmle.kernel import KernelSpec
from npmle.mixture import ParticleMixture, SampleSet, nll

ATOM_WEIGHT_CUTOFF = 1e-8


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CertificationReport:
    gap_hat: float
    grid_min_value: float
    atom_locations: np.ndarray
    atom_weights: np.ndarray
    atom_values: np.ndarray
    atom_flatness: float
    grid_lo: float
    grid_hi: float
    spacing: float

    def to_dict(self) -> dict:
        return {
            "gap_hat": self.gap_hat,
            "grid": {"lo": _decimal(self.grid_lo, self.spacing),
                     "hi": _decimal(self.grid_hi, self.spacing),
                     "spacing": float(Decimal(repr(self.spacing)))},
            "atom_values": [
                {"mu": float(mu), "weight": float(w), "delta_l": float(v)}
                for mu, w, v in zip(self.atom_locations, self.atom_weights, self.atom_values)
            ],
            "atom_flatness": self.atom_flatness,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _decimal(x, spacing):
    # grid ends are integer multiples of the spacing; print them at its resolution
    places = max(0, -Decimal(repr(spacing)).normalize().as_tuple().exponent)
    return float(round(Decimal(repr(x)), places))


def _grid_range(lo, hi, spacing):
    return math.floor(lo / spacing), math.ceil(hi / spacing)


def grid_1d(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Multiples of ``spacing`` covering [lo, hi]."""
    k_lo, k_hi = _grid_range(lo, hi, spacing)
    return np.arange(k_lo, k_hi + 1, dtype=float) * spacing


def refined_grid(k_lo: int, k_hi: int, spacing: float, level: int) -> np.ndarray:
    """Nodes of [k_lo h, k_hi h] at spacing h / 2**level.

    Halving is exact in binary, so level r + 1 contains every node of level r
    bit for bit.
    """
    f = 1 << level
    return np.arange(k_lo * f, k_hi * f + 1, dtype=float) * (spacing / f)


def certify_1d(field: FirstVariationField, rho: ParticleMixture, spacing: float = 0.01,
               margin: float = 1.0, refine: bool = False, tol: float = 1e-6,
               max_refinements: int = 6) -> CertificationReport:
    """Grid suboptimality gap max(0, -1 - min_grid field) and per-atom values.

    With ``refine`` the spacing is halved over the same range until the gap
    changes by less than ``tol`` (at most ``max_refinements`` times).
    """
    if field.kernel.dimension != 1:
        raise UnsupportedDimensionError(
            f"grid certification is one-dimensional only (d={field.kernel.dimension})")
    if not spacing > 0 or margin < 0:
        raise ValueError("spacing must be > 0 and margin >= 0")
    mus = rho.locations[:, 0]
    k_lo, k_hi = _grid_range(mus.min() - margin, mus.max() + margin, spacing)

    def evaluate(level):
        grid = refined_grid(k_lo, k_hi, spacing, level)
        return grid, float(field.eval(grid).min())

    level = 0
    grid, vmin = evaluate(0)
    gap = max(0.0, -1.0 - vmin)
    if refine:
        while level < max_refinements:
            level += 1
            grid, vmin = evaluate(level)
            new_gap = max(0.0, -1.0 - vmin)
            done = abs(new_gap - gap) < tol
            gap = new_gap
            if done:
                break
    spacing = spacing / (1 << level)
    atom_vals = np.atleast_1d(field.eval(rho.locations))
    w = rho.weights
    live = w > ATOM_WEIGHT_CUTOFF
    flat = float(np.max(np.abs(atom_vals[live] + 1.0))) if np.any(live) else 0.0
    return CertificationReport(
        gap_hat=gap, grid_min_value=vmin, atom_locations=mus.copy(), atom_weights=w,
        atom_values=atom_vals, atom_flatness=flat, grid_lo=float(grid[0]),
        grid_hi=float(grid[-1]), spacing=spacing,
    )


@dataclass(frozen=True)
class DiagnosticsConstants:
    """Support radii (R1, R, box) and descent-step constants (c0, G, H, eta).

    ``log_c0`` and ``log_eta_bound`` stay finite when the linear values
    underflow (wide data sets drive c0 far below the smallest double).
    """

    R1: float | None = None
    R: float | None = None
    support_box: tuple | None = None
    c0: float | None = None
    log_c0: float | None = None
    G: float | None = None
    H: float | None = None
    eta_bound: float | None = None
    log_eta_bound: float | None = None


def _gaussian_radius(k: KernelSpec, log_level: float) -> float:
    """inf{r >= 0 : log envelope_upper(r) <= log_level}."""
    r2 = 2.0 * (k.log_peak - log_level)
    return math.sqrt(max(r2, 0.0))


def support_radius(k: KernelSpec, s: SampleSet) -> DiagnosticsConstants:
    """Radii such that every NPMLE is supported within distance R of the data hull."""
    D = s.diameter_bound
    R1 = _gaussian_radius(k, k.log_envelope_lower(D) - math.log(2.0))
    log_thr = (k.log_envelope_upper(R1) + k.log_envelope_lower(R1 + D)
               - math.log(8.0) - k.log_envelope_upper(0.0))
    R = _gaussian_radius(k, log_thr)
    box = (tuple(float(v) for v in s.lo - R), tuple(float(v) for v in s.hi + R))
    return DiagnosticsConstants(R1=R1, R=R, support_box=box)


def step_bound(k: KernelSpec, s: SampleSet, rho0: ParticleMixture) -> DiagnosticsConstants:
    """Largest step with a guaranteed monotone decrease of the loss.

    c0 = exp(-l(rho0)) * inf-envelope(R0 + diam) / (2 phi(0)), with R0 the
    radius where the sup-envelope drops below exp(-l(rho0)) / 2, and
    eta < c0 / (H + G^2 / c0).
    """
    loss = nll(k, s, rho0)
    D = s.diameter_bound
    R0 = _gaussian_radius(k, -loss - math.log(2.0))
    log_c0 = (-loss + k.log_envelope_lower(R0 + D) - math.log(2.0)
              - k.log_envelope_upper(0.0))
    G, H = k.derivative_bounds()
    # eta = c0^2 / (H c0 + G^2), assembled in log space
    log_eta = 2.0 * log_c0 - np.logaddexp(math.log(H) + log_c0, 2.0 * math.log(G))
    return DiagnosticsConstants(c0=math.exp(log_c0), log_c0=log_c0, G=G, H=H,
                                eta_bound=math.exp(log_eta), log_eta_bound=float(log_eta))


def diagnostics(k: KernelSpec, s: SampleSet, rho0: ParticleMixture) -> DiagnosticsConstants:
    a, b = support_radius(k, s), step_bound(k, s, rho0)
    return DiagnosticsConstants(R1=a.R1, R=a.R, support_box=a.support_box, c0=b.c0,
                                log_c0=b.log_c0, G=b.G, H=b.H, eta_bound=b.eta_bound,
                                log_eta_bound=b.log_eta_bound)
