"""Samples, particle mixtures, responsibilities and the likelihood loss."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from npmle import _backend
from npmle.kernel import KernelSpec


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Observations X_1..X_N as an ``(N, d)`` array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"sample set needs shape (N>=1, d>=1), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample set contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def lo(self) -> np.ndarray:
        return self.data.min(axis=0)

    @property
    def hi(self) -> np.ndarray:
        return self.data.max(axis=0)

    @property
    def diameter_bound(self) -> float:
        """Bounding-box diagonal; an upper bound on diam(conv{X_i})."""
        return float(np.linalg.norm(self.hi - self.lo))

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{k + 1}" for k in range(self.dim)])
            for row in self.data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        header = rows[0]
        expected = [f"x{k + 1}" for k in range(len(header))]
        if header != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        return cls(data.reshape(-1, len(header)))


@dataclass(frozen=True, eq=False)
class ParticleMixture:
    """rho = sum_j w_j delta_{mu_j}, weights kept as logs."""

    locations: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        loc = np.ascontiguousarray(np.asarray(self.locations, dtype=float))
        if loc.ndim == 1:
            loc = loc[:, None]
        lw = np.ascontiguousarray(np.asarray(self.log_weights, dtype=float).reshape(-1))
        if loc.ndim != 2 or loc.shape[0] < 1 or lw.shape[0] != loc.shape[0]:
            raise ValueError(
                f"need m>=1 locations and matching weights, got {loc.shape} and {lw.shape}"
            )
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(lw))):
            raise ValueError("particle mixture has non-finite locations or log-weights")
        loc.setflags(write=False)
        lw.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, locations, weights) -> "ParticleMixture":
        w = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        return cls(locations, np.log(w / w.sum()))

    @classmethod
    def uniform(cls, locations) -> "ParticleMixture":
        loc = np.asarray(locations, dtype=float)
        m = loc.shape[0]
        return cls(loc, np.full(m, -math.log(m)))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def m(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def permuted(self, perm) -> "ParticleMixture":
        perm = np.asarray(perm)
        return ParticleMixture(self.locations[perm], self.log_weights[perm])

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            # log_weight makes the round trip bit-exact; weight is for readers
            w.writerow(["particle", "weight", "log_weight"]
                       + [f"mu_{k + 1}" for k in range(self.dim)])
            for j, (wj, lw, mu) in enumerate(zip(self.weights, self.log_weights, self.locations)):
                w.writerow([j, repr(float(wj)), repr(float(lw))] + [repr(float(v)) for v in mu])

    @classmethod
    def from_csv(cls, path) -> "ParticleMixture":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if header[:2] != ["particle", "weight"]:
            raise ValueError(f"{path}: not a mixture CSV (header {header})")
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        body = body.reshape(-1, len(header))
        if len(header) > 2 and header[2] == "log_weight":
            return cls(body[:, 3:], body[:, 2])
        return cls.from_weights(body[:, 2:], body[:, 1])


@dataclass(frozen=True, eq=False)
class ResponsibilityMatrix:
    values: np.ndarray
    log_marginals: np.ndarray


class GroundTruthKind(enum.Enum):
    CONTINUOUS_GAUSSIAN = "rho_c"
    DISCRETE_THREE_ATOM = "rho_d"
    CUSTOM_ATOMS = "custom"


@dataclass(frozen=True, eq=False)
class GroundTruthMixture:
    """The mixing distribution rho* the data are drawn from.

    ``atoms`` holds first-coordinate positions for ``rho_d`` and full
    ``(k, d)`` atoms for ``custom``; ``rho_c`` is N(0, I_d) and has none.
    """

    kind: GroundTruthKind
    atoms: np.ndarray | None = None
    weights: np.ndarray | None = field(default=None)

    @classmethod
    def continuous(cls) -> "GroundTruthMixture":
        return cls(GroundTruthKind.CONTINUOUS_GAUSSIAN)

    @classmethod
    def discrete_three_atom(cls) -> "GroundTruthMixture":
        return cls(GroundTruthKind.DISCRETE_THREE_ATOM,
                   np.array([-1.0, 1.0, 10.0]), np.full(3, 1.0 / 3.0))

    @classmethod
    def custom(cls, atoms, weights) -> "GroundTruthMixture":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        w = np.asarray(weights, dtype=float)
        if atoms.shape[0] != w.shape[0] or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("custom atoms need matching nonnegative weights summing to 1")
        return cls(GroundTruthKind.CUSTOM_ATOMS, atoms, w)

    @classmethod
    def from_name(cls, name: str) -> "GroundTruthMixture":
        if name in ("rho_d", "discrete"):
            return cls.discrete_three_atom()
        if name in ("rho_c", "continuous"):
            return cls.continuous()
        raise ValueError(f"unknown ground truth {name!r} (expected rho_d or rho_c)")

    def atom_matrix(self, d: int) -> np.ndarray:
        """Atoms embedded in R^d (discrete kinds only)."""
        if self.kind is GroundTruthKind.DISCRETE_THREE_ATOM:
            out = np.zeros((3, d))
            out[:, 0] = self.atoms
            return out
        if self.kind is GroundTruthKind.CUSTOM_ATOMS:
            if self.atoms.shape[1] != d:
                raise ValueError(f"custom atoms live in R^{self.atoms.shape[1]}, not R^{d}")
            return self.atoms
        raise ValueError("continuous ground truth has no atoms")

    def density_1d(self, x) -> np.ndarray:
        """Density of rho* convolved with N(0, 1) on the real line."""
        x = np.asarray(x, dtype=float)
        if self.kind is GroundTruthKind.CONTINUOUS_GAUSSIAN:
            return np.exp(-x * x / 4.0) / math.sqrt(4.0 * math.pi)
        atoms = self.atom_matrix(1)[:, 0]
        diff = x[..., None] - atoms
        return (np.exp(-0.5 * diff * diff) / math.sqrt(2 * math.pi)) @ self.weights


def _check_dims(k: KernelSpec, s: SampleSet, rho: ParticleMixture):
    if not (k.dimension == s.dim == rho.dim):
        raise ValueError(
            f"dimension mismatch: kernel {k.dimension}, samples {s.dim}, particles {rho.dim}"
        )


def mixture_stats(k: KernelSpec, s: SampleSet, rho: ParticleMixture, want_stats=True):
    """(log_marginals, Q, P) for the fused update kernels.

    Q_j = sum_i phi(X_i - mu_j) / (rho*phi)(X_i) and P_j = the same sum
    weighted by X_i. Every update rule is an affine function of these.
    """
    _check_dims(k, s, rho)
    N, m, d = s.n, rho.m, s.dim
    logmarg = np.empty(N)
    Q = np.empty(m)
    P = np.empty((m, d))
    _backend.mixture_stats(s.data, rho.locations, rho.log_weights, logmarg, Q, P, want_stats)
    return logmarg, Q, P


def log_marginals(k: KernelSpec, s: SampleSet, rho: ParticleMixture) -> np.ndarray:
    return mixture_stats(k, s, rho, want_stats=False)[0]


def responsibilities(k: KernelSpec, s: SampleSet, rho: ParticleMixture) -> ResponsibilityMatrix:
    """Posterior component probabilities r_ij via a row-wise log-sum-exp."""
    _check_dims(k, s, rho)
    diff = s.data[:, None, :] - rho.locations[None, :, :]
    a = rho.log_weights[None, :] + k.log_density(diff)
    mx = a.max(axis=1, keepdims=True)
    e = np.exp(a - mx)
    tot = e.sum(axis=1, keepdims=True)
    return ResponsibilityMatrix(values=e / tot, log_marginals=(mx + np.log(tot))[:, 0])


def nll(k: KernelSpec, s: SampleSet, rho: ParticleMixture) -> float:
    """Empirical negative log-likelihood -(1/N) sum_i log (rho*phi)(X_i)."""
    return float(-np.mean(log_marginals(k, s, rho)))


def heldout_nll(k: KernelSpec, test: SampleSet, rho: ParticleMixture) -> float:
    """Monte-Carlo estimate of the population loss on a fresh test set.

    Identical formula to :func:`nll`; the estimate is unbiased for the
    population loss when ``test`` is drawn from rho* convolved with N(0, I).
    """
    if test.n < 1:
        raise ValueError("empty test set")
    return nll(k, test, rho)
