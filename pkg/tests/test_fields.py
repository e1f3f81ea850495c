import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monolab import su2
from monolab.bps import bps_field
from monolab.errors import MaskedPoint
from monolab.fields import (
    Grid3D,
    TangentField,
    complex_step,
    constant_gauge,
    covariant_derivative,
    curvature,
    energy_density,
    gauge_transform,
    gram_matrix,
    integrate,
    l2_pair,
    residual_norm,
    sample,
    sampled_field,
)
from monolab.quad import cube_exterior_r4, simpson_weights, sphere_rule


def test_complex_step_is_exact_for_analytic_functions():
    pts = np.array([[0.3, -0.2, 1.1], [2.0, 0.5, -0.7]])
    (v,), (d,) = complex_step(lambda p: (np.sin(p[:, 0]) * np.exp(p[:, 1]) * p[:, 2] ** 2,), pts)
    x, y, z = pts.T
    expect = np.stack([np.cos(x) * np.exp(y) * z**2, np.sin(x) * np.exp(y) * z**2,
                       2 * z * np.sin(x) * np.exp(y)], axis=1)
    np.testing.assert_allclose(d, expect, rtol=1e-14)
    np.testing.assert_allclose(v, np.sin(x) * np.exp(y) * z**2, rtol=1e-15)


def test_simpson_integrates_cubics_exactly():
    n, h = 11, 0.3
    x = np.arange(n) * h
    w = simpson_weights(n, h)
    L = x[-1]
    assert w @ (x**3 - 2 * x + 1) == pytest.approx(L**4 / 4 - L**2 + L, rel=1e-13)


@pytest.mark.parametrize("n", [2, 4, 1])
def test_grid_rejects_even_sizes(n):
    with pytest.raises(ValueError):
        Grid3D(n=n)


def test_grid_slab_order_is_z_fastest():
    g = Grid3D((0, 0, 0), 1.0, 3)
    s = g.slab(0)
    assert np.all(s[:3, 0] == -1.0) and np.all(s[:3, 1] == -1.0)
    np.testing.assert_array_equal(s[:3, 2], [-1.0, 0.0, 1.0])


def test_cube_exterior_constant_against_angular_form():
    # int_{|x|_inf > 1} |x|^-4 = int_{S^2} max_i |n_i| dOmega
    dirs, w = sphere_rule(400, 800)
    assert cube_exterior_r4() == pytest.approx(float(w @ np.max(np.abs(dirs), axis=1)), rel=1e-4)


def test_integrate_with_surface_tail():
    # int_{R^3} (1 + r^2)^-2 = pi^2
    g = Grid3D((0, 0, 0), 10.0, 81)
    res = integrate(g, lambda p: 1.0 / (1.0 + np.einsum("pi,pi->p", p, p)) ** 2)
    assert res.value == pytest.approx(math.pi**2, rel=2e-3)
    assert res.tail > 0


def test_integrate_independent_of_threads():
    g = Grid3D((0.1, 0, 0), 3.0, 21)
    f = lambda p: np.exp(-np.einsum("pi,pi->p", p, p)) * (1 + p[:, 0])  # noqa: E731
    a = integrate(g, f, threads=1).value
    b = integrate(g, f, threads=4).value
    assert a == b


def _random_gauge(rng):
    c = rng.normal(size=(3, 3)) * 0.3
    b = rng.normal(size=3) * 0.5

    def g(p):
        return su2.expmap(np.einsum("ai,pi->pa", c, p) + b)

    return g


@given(st.integers(0, 2**32 - 1))
def test_residual_and_energy_are_gauge_invariant(seed):
    rng = np.random.default_rng(seed)
    F = bps_field((0.1, -0.2, 0.3), 1.3)
    G = gauge_transform(F, _random_gauge(rng), h=1e-4)
    pts = rng.uniform(-3, 3, size=(8, 3))
    # finite differences for both, so compare with a matching tolerance
    np.testing.assert_allclose(energy_density(G, pts, h=1e-4), energy_density(F, pts), rtol=1e-5, atol=1e-7)
    assert residual_norm(G, pts, h=1e-4).max() < 1e-5
    _, PhiF = F.evaluate(pts)
    _, PhiG = G.evaluate(pts)
    np.testing.assert_allclose(su2.norm(PhiG), su2.norm(PhiF), rtol=1e-13)


def test_constant_gauge_keeps_complex_step_exact():
    q = su2.expmap(np.array([0.3, -0.4, 0.2]))
    G = gauge_transform(bps_field(), *constant_gauge(q))
    pts = np.array([[0.5, 0.2, -0.7], [3.0, 1.0, 2.0]])
    assert residual_norm(G, pts).max() < 1e-13


def test_masked_points_raise():
    F = bps_field()
    with pytest.raises(MaskedPoint):
        covariant_derivative(F, [[0.05, 0, 0]], h=0.01, exclude=[((0, 0, 0), 0.1)])
    with pytest.raises(MaskedPoint):
        curvature(F, [[0.0, 0.12, 0]], h=0.05, exclude=[((0, 0, 0), 0.1)])


def test_pairings_are_symmetric(rng):
    a1, a2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))

    def gauss(coef, c):
        return TangentField(lambda p: np.exp(-np.einsum("pi,pi->p", p - c, p - c))[:, None, None] * coef)

    u, v = gauss(a1, np.zeros(3)), gauss(a2, np.array([0.3, 0, 0]))
    g = Grid3D((0, 0, 0), 5.0, 41)
    assert l2_pair(u, v, g).value == pytest.approx(l2_pair(v, u, g).value, rel=1e-14)
    G = gram_matrix([u, v], g).value
    assert G[0, 1] == G[1, 0]
    # closed form: int exp(-|x|^2 - |x - c|^2) = (pi/2)^{3/2} exp(-|c|^2/2)
    expect = float(np.sum(a1 * a2)) * (np.pi / 2) ** 1.5 * np.exp(-0.045)
    assert G[0, 1] == pytest.approx(expect, rel=1e-6)


def test_sampled_field_interpolates():
    g = Grid3D((0, 0, 0), 4.0, 41)
    F = bps_field()
    A, Phi = sample(F, g)
    S = sampled_field(g, A, Phi)
    pts = np.array([[0.33, -1.27, 2.05], [1.5, 1.5, -0.4]])
    _, P1 = S.evaluate(pts)
    _, P0 = F.evaluate(pts)
    np.testing.assert_allclose(P1, P0, atol=2e-3)
    assert residual_norm(S, pts, h=1e-2).max() < 5e-2
