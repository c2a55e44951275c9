"""End-to-end acceptance checks, one group per criterion.

Run alone with ``python tests/test_acceptance.py`` (or ``pytest
tests/test_acceptance.py``); the terminal summary prints one PASS/FAIL line
per criterion. Criteria 6 to 8 run full-size experiments and take minutes.
"""

import math
import sys

import numpy as np
import pytest

from conftest import random_instance
from npmle import population_lab
from npmle.certify import certify_1d, step_bound
from npmle.experiments import ExperimentConfig, run_experiment
from npmle.first_variation import FirstVariationField
from npmle.kernel import KernelSpec
from npmle.mixture import ParticleMixture, SampleSet, nll, responsibilities
from npmle.optimizers import (
    OptimizerConfig,
    fixed_location_em_step,
    fr_step,
    integrate_flow,
    make_step,
    w_step,
    wfr_step,
)

EPS = np.finfo(float).eps


def instances(n, seed, **kw):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kw) for _ in range(n)]


# ---------------------------------------------------------------- 1 invariants


@pytest.mark.criterion(1)
def test_first_variation_integrates_to_minus_one(record_property):
    worst = 0.0
    for k, s, rho in instances(100, 1):
        field = FirstVariationField.at(k, s, rho)
        worst = max(worst, abs(field.integral_against(rho) + 1.0))
    record_property("detail", f"max |int + 1| = {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.criterion(1)
def test_responsibility_rows_sum_to_one(record_property):
    worst = 0.0
    for k, s, rho in instances(100, 2):
        r = responsibilities(k, s, rho).values
        worst = max(worst, float(np.abs(r.sum(axis=1) - 1.0).max()))
    record_property("detail", f"max row error = {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.criterion(1)
def test_simplex_preserved_at_step_bound(record_property):
    worst = 0.0
    for k, s, rho0 in instances(4, 3, N=15, m=6, spread=1.5):
        eta = step_bound(k, s, rho0).eta_bound
        for scheme in ("wfr", "fr"):
            step = make_step(k, s, OptimizerConfig(scheme=scheme, step_size=eta))
            rho = rho0
            for _ in range(1000):
                rho = step(rho)
                w = rho.weights
                assert np.all(w >= 0)
                worst = max(worst, abs(w.sum() - 1.0))
    record_property("detail", f"max |sum w - 1| = {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.criterion(1)
def test_field_gradient_matches_finite_differences(record_property):
    worst = 0.0
    h = 1e-5
    rng = np.random.default_rng(4)
    for k, s, rho in instances(50, 5, spread=1.5):
        field = FirstVariationField.at(k, s, rho)
        d = k.dimension
        x = s.data[rng.integers(s.n)] + rng.normal(size=d)
        g = field.grad(x)
        fd = np.array([(field.eval(x + h * e) - field.eval(x - h * e)) / (2 * h)
                       for e in np.eye(d)])
        worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    record_property("detail", f"max relative error = {worst:.1e}")
    assert worst <= 1e-6


# ---------------------------------------------------------------- 2 step equivalence


@pytest.mark.criterion(2)
def test_full_reweighting_step_is_fixed_location_em(record_property):
    worst = 0.0
    for k, s, rho in instances(50, 6):
        a, b = fr_step(k, s, rho, 1.0), fixed_location_em_step(k, s, rho)
        assert np.array_equal(a.locations, b.locations)
        worst = max(worst, float(np.abs(a.weights - b.weights).max()))
    record_property("detail", f"max weight difference = {worst:.1e}")
    assert worst <= 1e-14


# ---------------------------------------------------------------- 3 single sample


@pytest.mark.criterion(3)
@pytest.mark.parametrize("x1", [0.0, -3.7, 12.25, 1e3])
def test_single_sample_point_mass_certifies(x1, record_property):
    k, s = KernelSpec(1), SampleSet(np.array([[x1]]))
    rho = ParticleMixture.uniform([[x1]])
    rep = certify_1d(FirstVariationField.at(k, s, rho), rho, refine=True)
    record_property("detail", f"X1={x1}: gap {rep.gap_hat:.1e}, flatness {rep.atom_flatness:.1e}")
    assert rep.gap_hat == 0.0
    assert rep.atom_flatness <= 1e-12


# ---------------------------------------------------------------- 4 descent


@pytest.mark.criterion(4)
def test_loss_non_increasing_below_step_bound(record_property):
    # At the guaranteed step the per-step decrease sits far below one ulp of
    # the loss, so recomputing the loss jitters by rounding; allow 4 ulp.
    worst, exact = -math.inf, 0
    runs = 0
    rng = np.random.default_rng(7)
    for i in range(20):
        k, s, rho0 = random_instance(rng, N=int(rng.integers(5, 30)), m=5, d=1 + i % 3,
                                     spread=1.5)
        eta = 0.9 * step_bound(k, s, rho0).eta_bound
        for scheme in ("wfr", "fr", "w"):
            step = make_step(k, s, OptimizerConfig(scheme=scheme, step_size=eta))
            rho, prev = rho0, nll(k, s, rho0)
            rise = -math.inf
            for _ in range(1000):
                rho = step(rho)
                cur = nll(k, s, rho)
                rise = max(rise, (cur - prev) / (EPS * abs(prev)))
                prev = cur
            worst = max(worst, rise)
            exact += rise <= 0
            runs += 1
    record_property("detail", f"{exact}/{runs} runs exactly monotone, largest rise {worst:.2f} ulp")
    assert worst <= 4.0


# ---------------------------------------------------------------- 5 flow consistency


@pytest.mark.criterion(5)
@pytest.mark.parametrize("scheme,step", [("wfr", wfr_step), ("fr", fr_step), ("w", w_step)])
def test_euler_error_halves_with_step(scheme, step, record_property):
    k, s, rho0 = random_instance(np.random.default_rng(77), N=20, m=4, d=1, spread=1.5)
    T = 0.5
    ref = integrate_flow(k, s, rho0, scheme, T, 1e-4)
    dist = []
    for eta in (1e-2, 5e-3, 2.5e-3):
        rho = rho0
        for _ in range(round(T / eta)):
            rho = step(k, s, rho, eta)
        dist.append(max(np.abs(rho.locations - ref.locations).max(),
                        np.abs(rho.weights - ref.weights).max()))
    ratios = [dist[0] / dist[1], dist[1] / dist[2]]
    record_property("detail", f"{scheme} ratios {ratios[0]:.3f}, {ratios[1]:.3f}")
    assert all(1.5 <= r <= 2.5 for r in ratios)


# ---------------------------------------------------------------- 6 to 8 experiments


@pytest.fixture(scope="module")
def instability(tmp_path_factory):
    cfg = ExperimentConfig("Instability41", out=str(tmp_path_factory.mktemp("i41")))
    return run_experiment(cfg)


@pytest.mark.criterion(6)
def test_three_center_fits_get_stuck(instability, record_property):
    em, gd = instability["em_bad"], instability["gd_bad"]
    record_property("detail", f"EM bad {em}/100, GD bad {gd}/100")
    assert 10 <= em <= 40
    assert 15 <= gd <= 50


@pytest.mark.criterion(6)
def test_wfr_converges_from_random_starts(instability, record_property):
    gaps = np.array(instability["wfr_gaps"])
    record_property("detail", f"WFR gap <= 0.05 in {(gaps <= 0.05).sum()}/{gaps.size}, "
                              f"max {gaps.max():.1e}")
    assert gaps.size == 20 and (gaps <= 0.05).sum() >= 18


@pytest.fixture(scope="module")
def comparison(tmp_path_factory):
    cfg = ExperimentConfig("Comparison42", d=10, N=1500, m_grid=[100, 500], t0=1000, trials=5,
                           record_every=50, out=str(tmp_path_factory.mktemp("c42")))
    return run_experiment(cfg)[1]


def final_losses(rows):
    out = {}
    for _, m, scheme, t, train, _ in rows:
        out.setdefault((m, t), {})[scheme] = train
    return out


@pytest.mark.criterion(7)
def test_wfr_smallest_training_loss_every_trial(comparison, record_property):
    by_trial = final_losses(comparison)
    margins = [min(v["fr"], v["w"]) - v["wfr"] for v in by_trial.values()]
    record_property("detail", f"{len(by_trial)} runs, min margin over FR/W {min(margins):.4f}")
    assert len(by_trial) == 10 and min(margins) >= 0


@pytest.mark.criterion(7)
def test_fixed_location_floor_at_every_m(comparison, record_property):
    by_trial = final_losses(comparison)
    gaps = {m: min(v["fr"] - v["wfr"] for (mm, _), v in by_trial.items() if mm == m)
            for m in (100, 500)}
    record_property("detail", ", ".join(f"m={m}: FR - WFR >= {g:.3f}" for m, g in gaps.items()))
    assert all(g > 0 for g in gaps.values())


@pytest.mark.criterion(8)
def test_gap_decays_roughly_inversely(tmp_path_factory, record_property):
    cfg = ExperimentConfig("Certify43", **ExperimentConfig.defaults("Certify43"),
                           out=str(tmp_path_factory.mktemp("c43")))
    median, rows = run_experiment(cfg)
    record_property("detail", f"median slope {median:.3f} over {len(rows)} trials")
    assert len(rows) == 20
    assert -1.5 <= median <= -0.5


# ---------------------------------------------------------------- 9 population lab


@pytest.mark.criterion(9)
def test_bw_variance_sandwich(record_property):
    bw = population_lab.bw_flow(100.0, 1e-3)
    below = float((bw["lower"] - bw["sigma2"]).max())
    above = float((bw["sigma2"] - bw["upper"]).max())
    record_property("detail", f"worst violation {max(below, above):.1e}")
    assert below <= 1e-6 and above <= 1e-6


@pytest.mark.criterion(9)
def test_initial_velocity_closed_form(record_property):
    worst = 0.0
    for d in (1, 2, 3):
        for x in np.random.default_rng(d).normal(size=(5, d)) * 1.5:
            closed = population_lab.pushforward_v0(x)
            quad = population_lab.pushforward_v0_quadrature(x, 120 if d == 3 else 200)
            worst = max(worst, float(np.linalg.norm(closed - quad) / np.linalg.norm(closed)))
    record_property("detail", f"v0 max relative error {worst:.1e}")
    assert worst <= 1e-6


@pytest.mark.criterion(9)
def test_geodesic_scan_not_convex(record_property):
    # start N(0, 3) read as standard deviation 3; the variance-3 reading is
    # reported alongside since it is convex along this geodesic
    _, std_loss = population_lab.geodesic_scan(9.0, 1.0, 101)
    _, var_loss = population_lab.geodesic_scan(3.0, 1.0, 101)
    neg_std = int((population_lab.second_differences(std_loss) < 0).sum())
    neg_var = int((population_lab.second_differences(var_loss) < 0).sum())
    record_property("detail", f"negative second differences: sd 3 start {neg_std}, "
                              f"variance 3 start {neg_var}")
    assert neg_std >= 1


# ---------------------------------------------------------------- 10 excluded


@pytest.mark.criterion(10)
def test_asymptotic_statements_excluded():
    pytest.skip("time bound constant and infinite-particle limits are not "
                "checkable at desk scale; criteria 3, 6 and 8 act as finite proxies")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
