"""Scripted reproductions: instability of EM/GD, geometry comparison,
gap certification over iterations, and the Gaussian population lab.

Every experiment takes an :class:`ExperimentConfig`, runs its trials on a
thread pool (trial ``t`` uses seed ``base_seed + t``), folds the results in
trial order and writes CSV + SVG files plus ``manifest.json`` to ``out``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from npmle import datagen, io, population_lab
from npmle.certify import certify_1d
from npmle.first_variation import FirstVariationField
from npmle.kernel import KernelSpec
from npmle.mixture import GroundTruthMixture, ParticleMixture, SampleSet, nll
from npmle.optimizers import OptimizerConfig, Scheme, em_known_weights_step, init_particles, run
from npmle.plots import Figure, marker_sizes

# heldout sets are drawn from an independent stream offset from the trial seed
HELDOUT_SEED_OFFSET = 1 << 32
CENTER_TARGETS = (-1.0, 1.0, 10.0)
NEAR_TOL = 0.5


class Experiment(enum.Enum):
    INSTABILITY = "Instability41"
    COMPARISON = "Comparison42"
    CERTIFY = "Certify43"
    LAB = "Lab"

    @classmethod
    def parse(cls, name) -> "Experiment":
        if isinstance(name, cls):
            return name
        for e in cls:
            if str(name).lower() in (e.value.lower(), e.name.lower()):
                return e
        raise ValueError(f"unknown experiment {name!r} (expected one of "
                         f"{', '.join(e.value for e in cls)})")


@dataclass
class ExperimentConfig:
    experiment: Experiment = Experiment.INSTABILITY
    N: int = 1500
    d: int = 1
    m: int = 500
    m_grid: list = field(default_factory=lambda: [20, 50, 100, 200, 500])
    t0: int = 1000
    eta: float = 0.1
    gamma: float | None = None
    trials: int = 100
    base_seed: int = 0
    ground_truth: str = "rho_d"
    out: str = "out"
    threads: int = 1
    # instability: EM iterations, GD step, number of WFR trials
    em_iters: int = 200
    gd_eta: float = 0.1
    wfr_trials: int = 20
    # comparison: per-scheme steps and heldout size multiplier
    eta_wfr: float = 0.01
    eta_fr: float = 0.1
    eta_w: float = 0.1
    heldout_factor: int = 10
    record_every: int = 10
    gap_spacing: float = 0.01
    # lab
    scans: list = field(default_factory=lambda: [[3.0, 1.0], [9.0, 1.0], [1.0, 0.0]])
    scan_steps: int = 101
    bw_T: float = 100.0
    bw_dt: float = 1e-3
    bw_every: int = 100

    def __post_init__(self):
        self.experiment = Experiment.parse(self.experiment)
        ints = ("N", "d", "m", "t0", "trials", "threads", "em_iters", "wfr_trials",
                "heldout_factor", "record_every", "scan_steps", "bw_every")
        for name in ints:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(name, f"expected an integer, got {v!r}")
        for name in ("N", "d", "m", "trials", "threads", "heldout_factor",
                     "record_every", "bw_every"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be >= 1, got {getattr(self, name)}")
        for name in ("t0", "em_iters", "wfr_trials"):
            if getattr(self, name) < 0:
                raise ConfigError(name, f"must be >= 0, got {getattr(self, name)}")
        for name in ("eta", "gd_eta", "eta_wfr", "eta_fr", "eta_w", "gap_spacing",
                     "bw_T", "bw_dt"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(name, f"expected a positive number, got {v!r}")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ConfigError("gamma", f"must lie in (0, 1], got {self.gamma}")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 1 << 64:
            raise ConfigError("base_seed", f"expected an unsigned 64-bit integer, got {self.base_seed!r}")
        if not self.m_grid or any(not isinstance(v, int) or v < 1 for v in self.m_grid):
            raise ConfigError("m_grid", f"expected a list of positive integers, got {self.m_grid!r}")
        try:
            GroundTruthMixture.from_name(self.ground_truth)
        except ValueError as exc:
            raise ConfigError("ground_truth", str(exc)) from None
        for pair in self.scans:
            if len(pair) != 2 or min(pair) < 0:
                raise ConfigError("scans", f"expected [variance_0, variance_1] pairs, got {pair!r}")

    @classmethod
    def defaults(cls, experiment) -> dict:
        """Per-experiment default overrides on top of the dataclass defaults."""
        e = Experiment.parse(experiment)
        if e is Experiment.COMPARISON:
            return {"d": 10, "trials": 20, "record_every": 50}
        if e is Experiment.CERTIFY:
            return {"d": 1, "trials": 20}
        return {}

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["experiment"] = self.experiment.value
        return out

    def seed(self, trial: int) -> int:
        return self.base_seed + trial


class ConfigError(ValueError):
    """Bad configuration value; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def map_trials(fn, n, threads):
    """[fn(0), ..., fn(n-1)] in index order, evaluated on ``threads`` workers."""
    if threads <= 1 or n <= 1:
        return [fn(t) for t in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def classify_centers(centers, targets=CENTER_TARGETS, tol=NEAR_TOL) -> str:
    """'global' iff nearest-target assignment is a bijection with every center within tol."""
    c = np.asarray(centers, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float)
    dist = np.abs(c[:, None] - t[None, :])
    nearest = dist.argmin(axis=1)
    ok = len(set(nearest.tolist())) == len(t) == len(c)
    ok = ok and bool(np.all(dist[np.arange(len(c)), nearest] < tol))
    return "global" if ok else "bad"


def mixture_density_1d(rho: ParticleMixture, x) -> np.ndarray:
    """(rho * N(0,1))(x) on a 1-D grid."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - rho.locations[None, :, 0]
    return np.exp(-0.5 * diff * diff) @ rho.weights / math.sqrt(2.0 * math.pi)


def _finish(cfg: ExperimentConfig, out: Path, seeds, extra=None):
    io.write_manifest(out, cfg.to_dict(), seeds, extra)
    return out


# ---------------------------------------------------------------- instability


def em_fit(k, s, centers0, weights, iters):
    mu = np.asarray(centers0, dtype=float)
    for _ in range(iters):
        mu = em_known_weights_step(k, s, mu, weights)
    return mu


def gd_fit(k, s, centers0, weights, eta, iters):
    cfg = OptimizerConfig(scheme=Scheme.WASSERSTEIN, step_size=eta, max_iters=iters,
                          record_every=max(iters, 1))
    rho, _ = run(k, s, ParticleMixture.from_weights(centers0, weights), cfg)
    return rho.locations


def run_instability(cfg: ExperimentConfig):
    """EM and GD with known equal weights from random 3-center starts, plus WFR.

    One fixed dataset (seed ``base_seed``); trial t starts both EM and GD from
    the same three samples drawn with seed ``base_seed + t``.
    """
    out = Path(cfg.out)
    gt = GroundTruthMixture.from_name(cfg.ground_truth)
    k = KernelSpec(cfg.d)
    s = datagen.sample(gt, cfg.d, cfg.N, cfg.base_seed)
    w3 = np.full(3, 1.0 / 3.0)

    def trial(t):
        mu0 = init_particles(s, 3, cfg.seed(t)).locations
        em = em_fit(k, s, mu0, w3, cfg.em_iters)
        gd = gd_fit(k, s, mu0, w3, cfg.gd_eta, cfg.t0)
        return mu0, em, gd

    fits = map_trials(trial, cfg.trials, cfg.threads)
    wfr_cfg = OptimizerConfig(scheme=Scheme.WFR, step_size=cfg.eta, fr_step=cfg.gamma,
                              max_iters=cfg.t0, record_every=max(cfg.t0, 1))

    def wfr_trial(t):
        rho, rec = run(k, s, init_particles(s, cfg.m, cfg.seed(t)), wfr_cfg)
        rep = certify_1d(FirstVariationField.at(k, s, rho), rho, cfg.gap_spacing)
        return rho, rec.train_nll[-1], rep.gap_hat

    wfr = map_trials(wfr_trial, cfg.wfr_trials, cfg.threads)

    rows = {"em": [], "gd": []}
    for t, (mu0, em, gd) in enumerate(fits):
        for name, mu in (("em", em), ("gd", gd)):
            rho = ParticleMixture.from_weights(mu, w3)
            rows[name].append([t, *np.sort(mu[:, 0]), nll(k, s, rho), classify_centers(mu[:, 0])])
    header = ["trial", "mu_1", "mu_2", "mu_3", "train_nll", "class"]
    io.write_csv(out / "em_trials.csv", header, rows["em"])
    io.write_csv(out / "gd_trials.csv", header, rows["gd"])
    io.write_csv(out / "wfr_trials.csv", ["trial", "train_nll", "gap_hat"],
                 [[t, r[1], r[2]] for t, r in enumerate(wfr)])
    counts = {name: sum(r[-1] == "bad" for r in rows[name]) for name in rows}
    io.write_csv(out / "counts.csv", ["method", "trials", "bad", "global"],
                 [[name, cfg.trials, counts[name], cfg.trials - counts[name]] for name in rows])

    lo, hi = float(s.data.min()) - 1.0, float(s.data.max()) + 1.0
    x = np.linspace(lo, hi, 400)
    truth = gt.density_1d(x)
    for name in ("em", "gd"):
        fig = Figure(f"{name.upper()} fits, known equal weights", "x", "density")
        fig.add("truth", x, truth, color="#000000")
        for cls in ("global", "bad"):
            hit = [r for r in rows[name] if r[-1] == cls]
            if hit:
                rho = ParticleMixture.from_weights(np.array(hit[0][1:4])[:, None], w3)
                fig.add(f"{cls} (trial {hit[0][0]})", x, mixture_density_1d(rho, x))
        fig.save(out / f"density_{name}.svg")
    if wfr:
        fig = Figure("WFR fit", "x", "density")
        fig.add("truth", x, truth, color="#000000")
        fig.add("WFR (trial 0)", x, mixture_density_1d(wfr[0][0], x))
        fig.save(out / "density_wfr.svg")

    gaps = [r[2] for r in wfr]
    summary = {"em_bad": counts["em"], "gd_bad": counts["gd"], "wfr_gaps": gaps}
    seeds = [cfg.base_seed] + [cfg.seed(t) for t in range(max(cfg.trials, cfg.wfr_trials))]
    _finish(cfg, out, seeds, {"dataset_seed": cfg.base_seed})
    return summary


# ---------------------------------------------------------------- comparison


def comparison_trial(cfg: ExperimentConfig, m: int, t: int):
    """One fresh dataset; WFR, FR and W from the same initial particles."""
    gt = GroundTruthMixture.from_name(cfg.ground_truth)
    k = KernelSpec(cfg.d)
    seed = cfg.seed(t)
    s = datagen.sample(gt, cfg.d, cfg.N, seed)
    test = datagen.sample(gt, cfg.d, cfg.heldout_factor * cfg.N, seed + HELDOUT_SEED_OFFSET)
    rho0 = init_particles(s, m, seed)
    out = {}
    for scheme, eta in ((Scheme.WFR, cfg.eta_wfr), (Scheme.FISHER_RAO, cfg.eta_fr),
                        (Scheme.WASSERSTEIN, cfg.eta_w)):
        ocfg = OptimizerConfig(scheme=scheme, step_size=eta, max_iters=cfg.t0,
                               record_every=cfg.record_every)
        _, rec = run(k, s, rho0, ocfg, heldout=test)
        out[scheme.value] = rec
    return out


def run_comparison(cfg: ExperimentConfig):
    out = Path(cfg.out)
    jobs = [(m, t) for m in cfg.m_grid for t in range(cfg.trials)]
    results = map_trials(lambda i: comparison_trial(cfg, *jobs[i]), len(jobs), cfg.threads)
    schemes = ("wfr", "fr", "w")
    final_rows, curve_rows, summary_rows = [], [], []
    table = {}
    for (m, t), recs in zip(jobs, results):
        for sc in schemes:
            rec = recs[sc]
            final_rows.append([cfg.ground_truth, m, sc, t, rec.train_nll[-1], rec.test_nll[-1]])
            table.setdefault((m, sc), []).append(recs[sc])
    for m in cfg.m_grid:
        for sc in schemes:
            recs = table[(m, sc)]
            tr = np.array([r.train_nll for r in recs])
            te = np.array([r.test_nll for r in recs])
            for j, it in enumerate(recs[0].iters):
                curve_rows.append([m, sc, it, tr[:, j].mean(), tr[:, j].std(),
                                   te[:, j].mean(), te[:, j].std()])
            summary_rows.append([m, sc, tr[:, -1].mean(), tr[:, -1].std(),
                                 te[:, -1].mean(), te[:, -1].std()])
    io.write_csv(out / "final.csv", ["ground_truth", "m", "scheme", "trial", "train_nll",
                                     "test_nll"], final_rows)
    io.write_csv(out / "summary.csv", ["m", "scheme", "train_mean", "train_sd", "test_mean",
                                       "test_sd"], summary_rows)
    io.write_csv(out / "curves.csv", ["m", "scheme", "iter", "train_mean", "train_sd",
                                      "test_mean", "test_sd"], curve_rows)

    ms = np.array(cfg.m_grid, dtype=float)
    for col, label in ((2, "train"), (4, "test")):
        fig = Figure(f"final {label} loss vs particles", "m", f"{label} nll", logx=True)
        for sc in schemes:
            rows = [r for r in summary_rows if r[1] == sc]
            fig.add(sc.upper(), ms, [r[col] for r in rows], yerr=[r[col + 1] for r in rows])
        fig.save(out / f"loss_vs_m_{label}.svg")
    for m in cfg.m_grid:
        fig = Figure(f"training loss vs iteration, m={m}", "iteration", "train nll")
        for sc in schemes:
            rows = [r for r in curve_rows if r[0] == m and r[1] == sc]
            fig.add(sc.upper(), [r[2] for r in rows], [r[3] for r in rows],
                    yerr=[r[4] for r in rows])
        fig.save(out / f"loss_vs_iter_m{m}.svg")

    seeds = [cfg.seed(t) for t in range(cfg.trials)]
    _finish(cfg, out, seeds, {"heldout_seed_offset": HELDOUT_SEED_OFFSET})
    return {(r[0], r[1]): r[2:] for r in summary_rows}, final_rows


# ---------------------------------------------------------------- certify


def gap_slope(iters, gaps, t_lo=100, t_hi=1000) -> float:
    """Least-squares slope of log gap against log iteration on [t_lo, t_hi]."""
    it = np.asarray(iters, dtype=float)
    g = np.array([np.nan if v is None else v for v in gaps], dtype=float)
    sel = (it >= t_lo) & (it <= t_hi) & (g > 0)
    if sel.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(it[sel]), np.log(g[sel]), 1)[0])


def certify_trial(cfg: ExperimentConfig, t: int):
    gt = GroundTruthMixture.from_name(cfg.ground_truth)
    k = KernelSpec(1)
    s = datagen.sample(gt, 1, cfg.N, cfg.seed(t))
    ocfg = OptimizerConfig(scheme=Scheme.WFR, step_size=cfg.eta, fr_step=cfg.gamma,
                           max_iters=cfg.t0, record_every=cfg.record_every, record_gap=True,
                           gap_spacing=cfg.gap_spacing)
    rho, rec = run(k, s, init_particles(s, cfg.m, cfg.seed(t)), ocfg)
    return s, rho, rec


def run_certify(cfg: ExperimentConfig):
    out = Path(cfg.out)
    results = map_trials(lambda t: certify_trial(cfg, t), cfg.trials, cfg.threads)
    gap_rows, slope_rows = [], []
    for t, (s, rho, rec) in enumerate(results):
        for it, g in zip(rec.iters, rec.gap_hat):
            gap_rows.append([t, it, g])
        slope_rows.append([t, gap_slope(rec.iters, rec.gap_hat, 100, cfg.t0), rec.gap_hat[-1]])
        tdir = out / f"trial_{t:03d}"
        io.write_trajectory(rec, tdir / "trajectory.csv")
        rho.to_csv(tdir / "mixture.csv")
        s.to_csv(tdir / "samples.csv")
    io.write_csv(out / "gaps.csv", ["trial", "iter", "gap_hat"], gap_rows)
    io.write_csv(out / "slopes.csv", ["trial", "slope", "final_gap_hat"], slope_rows)
    slopes = np.array([r[1] for r in slope_rows])
    median = float(np.nanmedian(slopes)) if np.any(np.isfinite(slopes)) else math.nan
    io.write_json(out / "slope_summary.json", {"median_slope": median, "t_range": [100, cfg.t0]})

    iters = np.array(results[0][2].iters, dtype=float)
    G = np.array([[np.nan if v is None else v for v in r[2].gap_hat] for r in results])
    fig = Figure("suboptimality gap vs iteration", "iteration", "gap", logx=True, logy=True)
    fig.add("median", iters, np.nanmedian(G, axis=0), color="#000000")
    ref = np.nanmedian(G, axis=0)
    sel = iters >= 100
    if np.any(sel) and np.isfinite(ref[sel][0]):
        fig.add("slope -1 reference", iters[sel], ref[sel][0] * 100.0 / iters[sel],
                color="#7f7f7f")
    fig.save(out / "gap_vs_iter.svg")

    s, rho, _ = results[0]
    gt = GroundTruthMixture.from_name(cfg.ground_truth)
    x = np.linspace(float(s.data.min()) - 1.0, float(s.data.max()) + 1.0, 400)
    fig = Figure("fitted vs true mixture density (trial 0)", "x", "density")
    fig.add("truth", x, gt.density_1d(x), color="#000000")
    fig.add("WFR fit", x, mixture_density_1d(rho, x))
    fig.save(out / "density_overlay.svg")

    k = KernelSpec(1)
    fld = FirstVariationField.at(k, s, rho)
    fig = Figure("first variation at the fitted mixture (trial 0)", "x", "field value")
    fig.hlines.append(-1.0)
    fig.add("first variation", x, fld.eval(x))
    fig.add("atoms", rho.locations[:, 0], fld.eval(rho.locations),
            sizes=marker_sizes(rho.weights))
    fig.save(out / "first_variation.svg")

    _finish(cfg, out, [cfg.seed(t) for t in range(cfg.trials)])
    return median, slope_rows


# ---------------------------------------------------------------- lab


def run_lab(cfg: ExperimentConfig):
    out = Path(cfg.out)
    fig = Figure("population loss along variance geodesics", "t", "loss")
    scan_summary = []
    for v0, v1 in cfg.scans:
        t, loss = population_lab.geodesic_scan(v0, v1, cfg.scan_steps)
        name = f"scan_{v0:g}_to_{v1:g}"
        io.write_csv(out / f"{name}.csv", ["t", "loss"], zip(t, loss))
        fig.add(f"N(0,{v0:g}) to N(0,{v1:g})", t, loss)
        dd = population_lab.second_differences(loss)
        scan_summary.append([v0, v1, float(dd.min()), int((dd < 0).sum())])
    fig.save(out / "geodesic_scans.svg")
    io.write_csv(out / "scan_convexity.csv",
                 ["variance_0", "variance_1", "min_second_difference", "negative_count"],
                 scan_summary)

    bw = population_lab.bw_flow(cfg.bw_T, cfg.bw_dt)
    idx = np.arange(0, bw["t"].size, cfg.bw_every)
    if idx[-1] != bw["t"].size - 1:
        idx = np.append(idx, bw["t"].size - 1)
    io.write_csv(out / "bw_flow.csv", ["t", "sigma2", "lower_bound", "upper_bound"],
                 zip(bw["t"][idx], bw["sigma2"][idx], bw["lower"][idx], bw["upper"][idx]))
    fig = Figure("Bures-Wasserstein flow of the variance", "t", "sigma^2", logy=True)
    fig.add("sigma^2", bw["t"][idx], bw["sigma2"][idx], color="#000000")
    fig.add("1/(1+2t)", bw["t"][idx], bw["lower"][idx])
    fig.add("2/(2+t)", bw["t"][idx], bw["upper"][idx])
    fig.save(out / "bw_flow.svg")

    v_rows = []
    for d in (1, 2):
        for r in (0.5, 1.0, 2.0, 4.0):
            x = np.zeros(d)
            x[0] = r
            closed = population_lab.pushforward_v0(x)[0]
            quad = population_lab.pushforward_v0_quadrature(x)[0]
            v_rows.append([d, r, closed, quad, abs(closed - quad) / abs(closed)])
    io.write_csv(out / "v0_check.csv", ["d", "x1", "closed_form", "quadrature", "rel_err"],
                 v_rows)
    _finish(cfg, out, [])
    sandwich = bool(np.all(bw["lower"] - 1e-6 <= bw["sigma2"])
                    and np.all(bw["sigma2"] <= bw["upper"] + 1e-6))
    return {"scans": scan_summary, "sandwich": sandwich, "v0_max_rel": max(r[-1] for r in v_rows)}


RUNNERS = {
    Experiment.INSTABILITY: run_instability,
    Experiment.COMPARISON: run_comparison,
    Experiment.CERTIFY: run_certify,
    Experiment.LAB: run_lab,
}


def run_experiment(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)
