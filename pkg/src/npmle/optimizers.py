"""Particle update rules and the driver loop.

Each step is a pure function ParticleMixture -> ParticleMixture built on the
fused statistics from :func:`npmle.mixture.mixture_stats`:

    Q_j = sum_i phi(X_i - mu_j) / (rho*phi)(X_i),   P_j = sum_i (...) X_i.

In these terms the Wasserstein velocity of particle j is (P_j - Q_j mu_j)/N
and the Fisher-Rao weight map is w_j -> w_j (1 - g + g Q_j / N).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from npmle.kernel import KernelSpec
from npmle.mixture import (
    ParticleMixture,
    SampleSet,
    log_marginals,
    mixture_stats,
    responsibilities,
)

WEIGHT_FLOOR = 1e-300


class Scheme(enum.Enum):
    WFR = "wfr"
    FISHER_RAO = "fr"
    WASSERSTEIN = "w"
    EM_KNOWN_WEIGHTS = "em"
    FIXED_LOCATION_EM = "fixed_em"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        aliases = {
            "wfr": cls.WFR, "fr": cls.FISHER_RAO, "fisherrao": cls.FISHER_RAO,
            "fisher_rao": cls.FISHER_RAO, "w": cls.WASSERSTEIN,
            "wasserstein": cls.WASSERSTEIN, "gd": cls.WASSERSTEIN,
            "em": cls.EM_KNOWN_WEIGHTS, "emknownweights": cls.EM_KNOWN_WEIGHTS,
            "em_known_weights": cls.EM_KNOWN_WEIGHTS, "fixed_em": cls.FIXED_LOCATION_EM,
            "fixedlocationem": cls.FIXED_LOCATION_EM,
            "fixed_location_em": cls.FIXED_LOCATION_EM,
        }
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ValueError(f"unknown scheme {name!r}") from None


class WeightClampWarning(RuntimeWarning):
    """A weight left the simplex interior and was clamped."""


class EmptyComponentWarning(RuntimeWarning):
    """An EM component received no responsibility and kept its location."""


class NumericalAbort(RuntimeError):
    """Non-finite loss during a run; ``record`` holds what was logged so far."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


def _renormalize(locations, w) -> ParticleMixture:
    bad = ~(w > 0)
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} weight(s) reached <= 0; clamped to {WEIGHT_FLOOR:g}",
            WeightClampWarning, stacklevel=3,
        )
        w = np.where(bad, WEIGHT_FLOOR, w)
    w = w / w.sum()
    return ParticleMixture(locations, np.log(w))


def _velocity(s, rho, Q, P):
    return (P - Q[:, None] * rho.locations) / s.n


def w_step(k: KernelSpec, s: SampleSet, rho: ParticleMixture, eta: float) -> ParticleMixture:
    """Move every particle along minus the gradient of the first variation."""
    _, Q, P = mixture_stats(k, s, rho)
    return ParticleMixture(rho.locations + eta * _velocity(s, rho, Q, P), rho.log_weights)


def fr_step(k: KernelSpec, s: SampleSet, rho: ParticleMixture, gamma: float) -> ParticleMixture:
    """Reweight in place: w_j <- w_j (1 - gamma (1 + field(mu_j)))."""
    _, Q, _ = mixture_stats(k, s, rho)
    w = rho.weights
    return _renormalize(rho.locations, w + gamma * w * (Q / s.n - 1.0))


def wfr_step(k: KernelSpec, s: SampleSet, rho: ParticleMixture, eta: float,
             gamma: float | None = None, order: str = "locations_first") -> ParticleMixture:
    """One transport step and one reweighting step.

    ``locations_first`` moves particles with the current weights and then
    reweights using responsibilities at the new locations. ``weights_first``
    performs the two half-steps the other way round.
    """
    gamma = eta if gamma is None else gamma
    if order == "locations_first":
        return fr_step(k, s, w_step(k, s, rho, eta), gamma)
    if order == "weights_first":
        return w_step(k, s, fr_step(k, s, rho, gamma), eta)
    raise ValueError(f"order must be 'locations_first' or 'weights_first', got {order!r}")


def em_known_weights_step(k: KernelSpec, s: SampleSet, locations, true_weights) -> np.ndarray:
    """EM M-step for the centers of a mixture whose weights are known."""
    locations = np.asarray(locations, dtype=float)
    rho = ParticleMixture.from_weights(locations, true_weights)
    _, Q, P = mixture_stats(k, s, rho)
    # responsibilities are w_j q_ij, and w_j cancels in the weighted mean
    out = locations.copy()
    live = Q > 0
    if not np.all(live):
        warnings.warn(f"components {np.flatnonzero(~live).tolist()} have zero responsibility",
                      EmptyComponentWarning, stacklevel=2)
    out[live] = P[live] / Q[live, None]
    return out


def fixed_location_em_step(k: KernelSpec, s: SampleSet, rho: ParticleMixture) -> ParticleMixture:
    """w_j <- (1/N) sum_i r_ij at fixed locations."""
    r = responsibilities(k, s, rho).values
    return _renormalize(rho.locations, r.mean(axis=0))


def init_particles(s: SampleSet, m: int, seed: int) -> ParticleMixture:
    """m locations drawn uniformly with replacement from the samples, equal weights."""
    if m < 1:
        raise ValueError(f"need at least one particle, got m={m}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, s.n, size=m)
    return ParticleMixture.uniform(s.data[idx])


@dataclass
class OptimizerConfig:
    scheme: Scheme = Scheme.WFR
    step_size: float = 0.1
    fr_step: float | None = None
    max_iters: int = 1000
    seed: int = 0
    record_every: int = 1
    order: str = "locations_first"
    record_gap: bool = False
    gap_spacing: float = 0.01
    gap_margin: float = 1.0
    snapshot_every: int | None = None

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.fr_step is not None and not 0 < self.fr_step <= 1:
            raise ValueError(f"fr_step must lie in (0, 1], got {self.fr_step}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError(f"max_iters must be a nonnegative integer, got {self.max_iters}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.order not in ("locations_first", "weights_first"):
            raise ValueError(f"unknown order {self.order!r}")

    @property
    def gamma(self) -> float:
        return self.step_size if self.fr_step is None else self.fr_step


@dataclass
class TrajectoryRecord:
    iters: list = field(default_factory=list)
    train_nll: list = field(default_factory=list)
    test_nll: list = field(default_factory=list)
    gap_hat: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def append(self, it, train, test=None, gap=None):
        if self.iters and it <= self.iters[-1]:
            raise ValueError(f"iteration {it} not after {self.iters[-1]}")
        self.iters.append(int(it))
        self.train_nll.append(train)
        self.test_nll.append(test)
        self.gap_hat.append(gap)

    def as_arrays(self):
        def col(xs):
            return np.array([np.nan if v is None else v for v in xs], dtype=float)
        return {"iter": np.array(self.iters), "train_nll": col(self.train_nll),
                "test_nll": col(self.test_nll), "gap_hat": col(self.gap_hat)}


def make_step(k: KernelSpec, s: SampleSet, cfg: OptimizerConfig):
    """Return the single-step map rho -> rho for ``cfg.scheme``."""
    eta, gamma = cfg.step_size, cfg.gamma
    if cfg.scheme is Scheme.WFR:
        return lambda rho: wfr_step(k, s, rho, eta, gamma, cfg.order)
    if cfg.scheme is Scheme.FISHER_RAO:
        return lambda rho: fr_step(k, s, rho, gamma)
    if cfg.scheme is Scheme.WASSERSTEIN:
        return lambda rho: w_step(k, s, rho, eta)
    if cfg.scheme is Scheme.EM_KNOWN_WEIGHTS:
        return lambda rho: ParticleMixture(
            em_known_weights_step(k, s, rho.locations, rho.weights), rho.log_weights)
    return lambda rho: fixed_location_em_step(k, s, rho)


def run(k: KernelSpec, s: SampleSet, rho0: ParticleMixture, cfg: OptimizerConfig,
        heldout: SampleSet | None = None):
    """Apply the configured step ``max_iters`` times, logging metrics.

    Metrics are recorded at iteration 0, every ``record_every`` steps, and at
    the final iteration. Returns ``(final_mixture, TrajectoryRecord)``.
    """
    from npmle.certify import certify_1d
    from npmle.first_variation import FirstVariationField

    step = make_step(k, s, cfg)
    rec = TrajectoryRecord()
    want_gap = cfg.record_gap and k.dimension == 1

    def record(it, rho):
        lm = log_marginals(k, s, rho)
        train = float(-np.mean(lm))
        test = float(-np.mean(log_marginals(k, heldout, rho))) if heldout is not None else None
        gap = None
        if want_gap:
            field_ = FirstVariationField(k, s, lm)
            gap = certify_1d(field_, rho, cfg.gap_spacing, cfg.gap_margin).gap_hat
        rec.append(it, train, test, gap)
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            rec.snapshots[it] = rho
        if not math.isfinite(train):
            raise NumericalAbort(f"non-finite training loss at iteration {it}", rec)

    rho = rho0
    record(0, rho)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", WeightClampWarning)
        warnings.simplefilter("always", EmptyComponentWarning)
        for it in range(1, cfg.max_iters + 1):
            n_before = len(caught)
            try:
                rho = step(rho)
            except ValueError as exc:  # non-finite locations or weights
                raise NumericalAbort(f"iteration {it}: {exc}", rec) from exc
            for wmsg in caught[n_before:]:
                rec.warnings.append(f"iter {it}: {wmsg.message}")
            if it % cfg.record_every == 0 or it == cfg.max_iters:
                record(it, rho)
    if cfg.snapshot_every and rec.iters[-1] not in rec.snapshots:
        rec.snapshots[rec.iters[-1]] = rho
    return rho, rec


def _flow_rhs(k, s, scheme, mu, w):
    rho = ParticleMixture(mu, np.log(np.maximum(w, WEIGHT_FLOOR)))
    _, Q, P = mixture_stats(k, s, rho)
    dmu = np.zeros_like(mu)
    dw = np.zeros_like(w)
    if scheme in (Scheme.WFR, Scheme.WASSERSTEIN):
        dmu = (P - Q[:, None] * mu) / s.n
    if scheme in (Scheme.WFR, Scheme.FISHER_RAO):
        dw = w * (Q / s.n - 1.0)
    return dmu, dw


def integrate_flow(k: KernelSpec, s: SampleSet, rho0: ParticleMixture, scheme,
                   T: float, dt: float) -> ParticleMixture:
    """Classical fixed-step RK4 on the particle ODE of ``scheme``.

    Weights are renormalized after every step; the last step is shortened
    so the integration ends exactly at ``T``.
    """
    scheme = Scheme.parse(scheme)
    if scheme not in (Scheme.WFR, Scheme.FISHER_RAO, Scheme.WASSERSTEIN):
        raise ValueError(f"no continuous flow for scheme {scheme.value}")
    if not dt > 0 or T < 0:
        raise ValueError(f"need dt > 0 and T >= 0, got dt={dt}, T={T}")
    mu = rho0.locations.copy()
    w = rho0.weights
    n_steps = int(math.ceil(T / dt - 1e-12)) if T > 0 else 0
    t = 0.0
    for n in range(n_steps):
        h = min(dt, T - t) if n == n_steps - 1 else dt
        k1 = _flow_rhs(k, s, scheme, mu, w)
        k2 = _flow_rhs(k, s, scheme, mu + 0.5 * h * k1[0], w + 0.5 * h * k1[1])
        k3 = _flow_rhs(k, s, scheme, mu + 0.5 * h * k2[0], w + 0.5 * h * k2[1])
        k4 = _flow_rhs(k, s, scheme, mu + h * k3[0], w + h * k3[1])
        mu = mu + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w = w + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(w))):
            raise NumericalAbort(f"non-finite flow state at t={t + h}")
        w = np.maximum(w, WEIGHT_FLOOR)
        w = w / w.sum()
        t += h
    return ParticleMixture(mu, np.log(w))
