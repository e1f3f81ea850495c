import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from monolab import su2
from monolab.bps import (
    KAPPA,
    abelianize,
    bps_field,
    centre_of,
    offdiagonal_profile,
    profile_dg,
    profile_dq,
    profile_g,
    profile_q,
    rescale,
    transition_winding,
)
from monolab.dirac import one_pole_potential
from monolab.errors import FitIllConditioned, SmallHiggs
from monolab.fields import energy_density, field_derivatives, residual_norm

coord = st.floats(-2.0, 2.0, allow_nan=False)
mass = st.floats(0.5, 3.0, allow_nan=False)


def _mp_g(x):
    x = mpmath.mpf(x)
    return mpmath.coth(x) / x - 1 / x**2


def _mp_q(x):
    x = mpmath.mpf(x)
    return (1 - x / mpmath.sinh(x)) / x**2


@pytest.mark.parametrize("x", [1e-6, 1e-3, 0.05, 0.099, 0.1, 0.101, 0.5, 2.0, 10.0, 40.0])
def test_profiles_against_high_precision(x):
    mpmath.mp.dps = 50
    assert profile_g(np.array([x]))[0] == pytest.approx(float(_mp_g(x)), rel=1e-13, abs=1e-300)
    assert profile_q(np.array([x]))[0] == pytest.approx(float(_mp_q(x)), rel=1e-12, abs=1e-300)
    # derivatives lose a few digits to cancellation just above the series cut
    assert profile_dg(np.array([x]))[0] == pytest.approx(float(mpmath.diff(_mp_g, x)), rel=5e-10, abs=1e-14)
    assert profile_dq(np.array([x]))[0] == pytest.approx(float(mpmath.diff(_mp_q, x)), rel=5e-10, abs=1e-14)


@given(coord, coord, coord, mass)
def test_bogomolny_residual_vanishes(cx, cy, cz, m):
    F = bps_field((cx, cy, cz), m)
    rng = np.random.default_rng(0)
    pts = np.array([cx, cy, cz]) + rng.normal(size=(16, 3)) * 2.0
    assert residual_norm(F, pts).max() < 1e-11 * max(1.0, m**2)


def test_closed_form_jacobian_matches_complex_step():
    F = bps_field((0.2, -0.1, 0.4), 1.7)
    pts = np.array([[0.5, 0.3, -1.0], [2.0, -1.0, 0.5], [0.21, -0.1, 0.41]])
    A, Phi, dA, dPhi = F.jacobian(pts)
    from dataclasses import replace

    A2, Phi2, dA2, dPhi2 = field_derivatives(replace(F, jacobian=None), pts)
    np.testing.assert_allclose(dA, dA2, atol=1e-13)
    np.testing.assert_allclose(dPhi, dPhi2, atol=1e-13)


@pytest.mark.parametrize("m", [1.0, 2.0])
def test_energy_by_radial_quadrature(m):
    # spherical symmetry: integrate the energy density along one ray
    F = bps_field((0, 0, 0), m)

    def e(r):
        return 4 * np.pi * r**2 * energy_density(F, np.array([[r * 0.6, r * 0.8, 0.0]]))[0]

    val, _ = integrate.quad(e, 0, np.inf, limit=400, epsabs=1e-12)
    assert val == pytest.approx(4 * np.pi * m, rel=1e-9)


def test_higgs_asymptotics():
    F = bps_field()
    r = np.array([6.0, 10.0, 15.0])
    size = su2.norm(F.Phi(np.stack([r, 0 * r, 0 * r], axis=1)))
    np.testing.assert_allclose(size, 1.0 - KAPPA / r, atol=3 * np.exp(-2 * r).max() + 1e-15)


def test_rescale_gives_the_heavier_monopole():
    pts = np.array([[0.3, 0.1, -0.5], [1.0, 2.0, 0.1]])
    A1, P1 = rescale(bps_field(), 2.0).evaluate(pts)
    A2, P2 = bps_field((0, 0, 0), 2.0).evaluate(pts)
    np.testing.assert_allclose(A1, A2, atol=1e-14)
    np.testing.assert_allclose(P1, P2, atol=1e-14)


def test_phase_is_a_gauge_rotation():
    pts = np.array([[0.3, 0.1, -0.5], [1.0, 2.0, 0.1]])
    F0, F1 = bps_field(), bps_field(phase=0.7)
    np.testing.assert_allclose(su2.norm(F1.Phi(pts)), su2.norm(F0.Phi(pts)), rtol=1e-14)
    assert residual_norm(F1, pts).max() < 1e-12
    assert np.max(np.abs(F1.A(pts) - F0.A(pts))) > 1e-2


@pytest.fixture(scope="module")
def patches():
    F = bps_field((0.0, 0.0, 0.0), 1.0)
    return abelianize(F, "north", r_min=1.0), abelianize(F, "south", r_min=1.0)


class TestAbelianGauge:
    def test_higgs_is_diagonal(self, patches):
        north, _ = patches
        pts = np.array([[1.0, 2.0, 0.5], [0.3, -3.0, 4.0], [2.0, 0.1, -1.0]])
        Phi = north.Phi(pts)
        np.testing.assert_allclose(Phi[:, :2], 0.0, atol=1e-13)
        assert np.all(Phi[:, 2] > 0)

    def test_diagonal_potential_is_dirac(self, patches):
        north, _ = patches
        pts = np.array([[3.0, 1.0, 0.5], [-2.0, 2.5, 1.0], [4.0, -3.0, -2.0]])
        r = np.linalg.norm(pts, axis=1)
        expect = one_pole_potential(pts, r, 1, "north")
        np.testing.assert_allclose(north.A(pts)[..., 2], expect, atol=1e-14)

    def test_residual_survives(self, patches):
        north, south = patches
        pts = np.array([[3.0, 1.0, 0.5], [-2.0, 2.5, 1.0]])
        assert residual_norm(north, pts).max() < 1e-12
        assert residual_norm(south, pts).max() < 1e-12

    def test_offdiagonal_decays_exponentially(self, patches):
        north, _ = patches
        prof = offdiagonal_profile(north, [4.0, 6.0, 8.0])
        rates = -np.diff(np.log(prof)) / 2.0
        assert np.all(rates > 1.5)  # e^{-2mr} up to powers of r

    def test_transition_winding(self, patches):
        north, south = patches
        assert transition_winding(north, south) == pytest.approx(-1.0, abs=1e-10)

    def test_small_higgs_is_rejected(self):
        with pytest.raises(SmallHiggs):
            abelianize(bps_field(), "north", r_min=0.1)


@given(coord, coord, coord)
def test_centre_recovers_position(cx, cy, cz):
    fit = centre_of(bps_field((cx, cy, cz), 1.0))
    # truncated multipole model: error grows with the offset from the shell centre
    off = cx * cx + cy * cy + cz * cz
    np.testing.assert_allclose(fit.centre, [cx, cy, cz], atol=1e-6 * (1 + off))
    assert fit.charge == pytest.approx(1.0, abs=1e-6 * (1 + off))
    assert fit.mass == pytest.approx(1.0, abs=1e-8 * (1 + off))


def test_centre_of_heavier_monopole():
    fit = centre_of(bps_field((0.4, -0.3, 0.2), 2.0))
    np.testing.assert_allclose(fit.centre, [0.4, -0.3, 0.2], atol=2e-6)


def test_centre_needs_two_shells():
    with pytest.raises(FitIllConditioned):
        centre_of(bps_field(), shells=[12.0])


def test_energy_target_is_four_pi_m():
    assert 4 * math.pi == pytest.approx(12.566370614359172)
