import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from npmle.kernel import KernelSpec
from npmle.mixture import (
    GroundTruthKind,
    GroundTruthMixture,
    ParticleMixture,
    SampleSet,
    log_marginals,
    mixture_stats,
    nll,
    responsibilities,
)

seeds = st.integers(0, 2**32 - 1)


def naive_log_marginals(X, mu, w):
    mpmath.mp.dps = 40
    out = []
    d = X.shape[1]
    for x in X:
        tot = mpmath.mpf(0)
        for mj, wj in zip(mu, w):
            r2 = mpmath.fsum((mpmath.mpf(float(a)) - mpmath.mpf(float(b))) ** 2
                             for a, b in zip(x, mj))
            tot += mpmath.mpf(float(wj)) * mpmath.exp(-r2 / 2) / (2 * mpmath.pi) ** (mpmath.mpf(d) / 2)
        out.append(float(mpmath.log(tot)))
    return np.array(out)


@given(seeds)
def test_log_marginals_against_multiprecision(seed):
    k, s, rho = random_instance(np.random.default_rng(seed), N=8, m=5)
    ref = naive_log_marginals(s.data, rho.locations, rho.weights)
    assert np.allclose(log_marginals(k, s, rho), ref, rtol=1e-13, atol=1e-12)


def test_log_marginals_far_from_all_particles():
    # every density term underflows; the log-sum-exp must not
    k = KernelSpec(10)
    s = SampleSet(np.full((2, 10), 40.0))
    rho = ParticleMixture.uniform(np.zeros((3, 10)))
    lm = log_marginals(k, s, rho)
    assert np.allclose(lm, k.log_peak - 0.5 * 16000.0)


@given(seeds)
def test_stats_against_loops(seed):
    k, s, rho = random_instance(np.random.default_rng(seed))
    lm, Q, P = mixture_stats(k, s, rho)
    marg = np.exp(lm)
    Qref = np.zeros(rho.m)
    Pref = np.zeros((rho.m, s.dim))
    for i, x in enumerate(s.data):
        for j, mu in enumerate(rho.locations):
            q = k.density(x - mu) / marg[i]
            Qref[j] += q
            Pref[j] += q * x
    assert np.allclose(Q, Qref, rtol=1e-10, atol=1e-300)
    assert np.allclose(P, Pref, rtol=1e-10, atol=1e-10 * np.abs(Pref).max())


@given(seeds)
def test_responsibility_rows_are_distributions(seed):
    k, s, rho = random_instance(np.random.default_rng(seed), spread=8.0)
    r = responsibilities(k, s, rho)
    assert np.all(r.values >= 0)
    assert np.allclose(r.values.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(r.log_marginals, log_marginals(k, s, rho), rtol=1e-13, atol=1e-12)


@given(seeds)
def test_responsibilities_agree_with_stats(seed):
    # sum_i r_ij = w_j Q_j
    k, s, rho = random_instance(np.random.default_rng(seed))
    _, Q, _ = mixture_stats(k, s, rho)
    r = responsibilities(k, s, rho).values
    assert np.allclose(r.sum(axis=0), rho.weights * Q, rtol=1e-10, atol=1e-14)


@given(seeds)
def test_nll_invariant_under_particle_permutation(seed):
    rng = np.random.default_rng(seed)
    k, s, rho = random_instance(rng)
    perm = rng.permutation(rho.m)
    assert nll(k, s, rho.permuted(perm)) == pytest.approx(nll(k, s, rho), rel=1e-13)


def test_nll_of_single_sample_point_mass():
    k = KernelSpec(3)
    s = SampleSet(np.array([[1.0, 2.0, 3.0]]))
    assert nll(k, s, ParticleMixture.uniform(s.data)) == pytest.approx(-k.log_peak)


def test_duplicate_particles_merge():
    k = KernelSpec(1)
    s = SampleSet(np.linspace(-2, 2, 9))
    a = ParticleMixture.from_weights([[0.0], [0.0], [1.0]], [0.25, 0.25, 0.5])
    b = ParticleMixture.from_weights([[0.0], [1.0]], [0.5, 0.5])
    assert nll(k, s, a) == pytest.approx(nll(k, s, b), rel=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        nll(KernelSpec(2), SampleSet(np.zeros((3, 1))), ParticleMixture.uniform(np.zeros((1, 1))))


def test_sample_set_validation_and_geometry():
    with pytest.raises(ValueError):
        SampleSet(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((0, 2)))
    s = SampleSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert s.n == 2 and s.dim == 2
    assert s.diameter_bound == pytest.approx(5.0)
    assert SampleSet(np.arange(4.0)).data.shape == (4, 1)


def test_particle_mixture_validation():
    with pytest.raises(ValueError):
        ParticleMixture.from_weights([[0.0]], [0.0])
    with pytest.raises(ValueError):
        ParticleMixture([[0.0], [1.0]], [0.0])
    with pytest.raises(ValueError):
        ParticleMixture([[np.inf]], [0.0])
    rho = ParticleMixture.from_weights([[0.0], [1.0]], [1.0, 3.0])
    assert np.allclose(rho.weights, [0.25, 0.75])


def test_csv_round_trips(tmp_path):
    rng = np.random.default_rng(3)
    s = SampleSet(rng.normal(size=(20, 3)))
    s.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "x1,x2,x3"
    assert np.array_equal(SampleSet.from_csv(tmp_path / "s.csv").data, s.data)
    rho = ParticleMixture.from_weights(rng.normal(size=(7, 3)), rng.dirichlet(np.ones(7)))
    rho.to_csv(tmp_path / "m.csv")
    back = ParticleMixture.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.locations, rho.locations)
    assert np.array_equal(back.log_weights, rho.log_weights)


def test_mixture_csv_without_log_weights(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("particle,weight,mu_1\n0,1,0.5\n1,3,-0.5\n")
    rho = ParticleMixture.from_csv(p)
    assert np.allclose(rho.weights, [0.25, 0.75])


def test_bad_csv_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        SampleSet.from_csv(p)


def test_ground_truths():
    d = GroundTruthMixture.from_name("rho_d")
    assert d.kind is GroundTruthKind.DISCRETE_THREE_ATOM
    A = d.atom_matrix(4)
    assert A.shape == (3, 4) and np.array_equal(A[:, 0], [-1, 1, 10]) and not A[:, 1:].any()
    c = GroundTruthMixture.from_name("rho_c")
    with pytest.raises(ValueError):
        c.atom_matrix(1)
    with pytest.raises(ValueError):
        GroundTruthMixture.from_name("rho_x")
    with pytest.raises(ValueError):
        GroundTruthMixture.custom([[0.0], [1.0]], [0.5, 0.6])
    g = GroundTruthMixture.custom([[0.0, 1.0]], [1.0])
    assert g.atom_matrix(2).shape == (1, 2)


@pytest.mark.parametrize("name", ["rho_d", "rho_c"])
def test_convolved_density_integrates_to_one(name):
    gt = GroundTruthMixture.from_name(name)
    x, dx = np.linspace(-30, 40, 700001, retstep=True)
    assert gt.density_1d(x).sum() * dx == pytest.approx(1.0, abs=1e-9)


def test_continuous_density_is_n02():
    gt = GroundTruthMixture.continuous()
    assert gt.density_1d(0.0) == pytest.approx(1 / math.sqrt(4 * math.pi))
