import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npmle.kernel import KernelSpec

coords = st.floats(-30, 30, allow_nan=False)


@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_log_density_matches_multiprecision(d):
    rng = np.random.default_rng(d)
    k = KernelSpec(d)
    for z in rng.normal(size=(5, d)) * 4:
        r2 = mpmath.fsum(mpmath.mpf(float(v)) ** 2 for v in z)
        ref = -mpmath.mpf(d) / 2 * mpmath.log(2 * mpmath.pi) - r2 / 2
        assert k.log_density(z) == pytest.approx(float(ref), rel=1e-14, abs=1e-13)


def test_density_integrates_to_one_in_1d():
    k = KernelSpec(1)
    total = mpmath.quad(lambda x: k.density(np.array([float(x)])), [-mpmath.inf, 0, mpmath.inf])
    assert float(total) == pytest.approx(1.0, abs=1e-12)


def test_log_density_stays_finite_where_density_underflows():
    k = KernelSpec(10)
    z = np.full(10, 13.0)  # |z|^2 = 1690
    assert k.density(z) == 0.0
    assert np.isfinite(k.log_density(z))


def test_stacked_points_shape():
    k = KernelSpec(3)
    assert k.log_density(np.zeros((4, 7, 3))).shape == (4, 7)
    with pytest.raises(ValueError):
        k.log_density(np.zeros((4, 2)))


@given(st.lists(coords, min_size=2, max_size=2))
def test_gradient_matches_central_differences(z):
    k = KernelSpec(2)
    z = np.array(z) / 10
    h = 1e-6
    fd = np.array([(k.density(z + h * e) - k.density(z - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(k.grad_density(z), fd, rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("d", [1, 3])
def test_envelopes_bound_density_on_shells(d):
    k = KernelSpec(d)
    rng = np.random.default_rng(0)
    for r in [0.0, 0.5, 1.0, 3.0]:
        u = rng.normal(size=(50, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # points with norm >= r for the upper envelope, <= r for the lower one
        outside = u * (r + rng.uniform(0, 2, size=(50, 1)))
        inside = u * (r * rng.uniform(0, 1, size=(50, 1)))
        assert np.all(k.density(outside) <= k.envelope_upper(r) * (1 + 1e-15))
        assert np.all(k.density(inside) >= k.envelope_lower(r) * (1 - 1e-15))
        assert k.envelope_upper(r) == pytest.approx(k.density(u[0] * r), rel=1e-15)


def test_envelope_rejects_negative_radius():
    with pytest.raises(ValueError):
        KernelSpec(1).envelope_upper(-0.1)
    with pytest.raises(ValueError):
        KernelSpec(1).log_envelope_lower(-1)


@pytest.mark.parametrize("d", [1, 2, 4])
def test_derivative_bounds_against_radial_scan(d):
    k = KernelSpec(d)
    G, H = k.derivative_bounds()
    r = np.linspace(0, 6, 60001)
    phi = np.exp(k.log_peak - 0.5 * r * r)
    assert G == pytest.approx(np.max(r * phi), rel=1e-8)
    assert H == pytest.approx(np.max(np.maximum(np.abs(r * r - 1), 1) * phi), rel=1e-12)


def test_derivative_bounds_against_numeric_hessian():
    k = KernelSpec(2)
    G, H = k.derivative_bounds()
    rng = np.random.default_rng(1)
    h = 1e-4
    for z in rng.normal(size=(30, 2)):
        hess = np.empty((2, 2))
        for a, ea in enumerate(np.eye(2)):
            hess[a] = (k.grad_density(z + h * ea) - k.grad_density(z - h * ea)) / (2 * h)
        assert np.linalg.norm(hess, 2) <= H * (1 + 1e-6)
        assert np.linalg.norm(k.grad_density(z)) <= G * (1 + 1e-12)


def test_invalid_dimension():
    for d in (0, -1, 1.5):
        with pytest.raises(ValueError):
            KernelSpec(d)


def test_peak_value():
    assert math.exp(KernelSpec(2).log_peak) == pytest.approx(1 / (2 * math.pi))
