import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monolab.bps import bps_field
from monolab.errors import ResidualTooLarge
from monolab.fields import Grid3D, integrate, tangent_derivatives
from monolab.fitting import halving_slopes
from monolab.linear import (
    bump_field,
    coupled_L,
    coupled_L_adjoint,
    detuned,
    f0,
    fc,
    indicial_roots_check,
    model_L,
    quaternion_action,
    random_plane_waves,
    square_errors,
    tau_identity_residual,
    tau_vectors,
    weitzenbock_check,
)

seeds = st.integers(0, 2**32 - 1)


def _off_origin(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1)[:, None] * rng.uniform(0.5, 3.0, n)[:, None]


def test_model_operator_on_affine_fields(rng):
    # u = (phi, a) with phi = g.z and a = M z: L u = (curl a - g, tr M)
    g = rng.normal(size=3)
    M = rng.normal(size=(3, 3))

    def u(p):
        return np.concatenate([(p @ g)[:, None], p @ M.T], axis=1)

    curl = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    pts = rng.normal(size=(5, 3))
    out = model_L(u, pts)
    np.testing.assert_allclose(out[:, 1:], np.broadcast_to(curl - g, (5, 3)), atol=1e-13)
    np.testing.assert_allclose(out[:, 0], np.trace(M), atol=1e-13)


@given(seeds)
def test_coulomb_type_fields_are_in_the_kernel(seed):
    rng = np.random.default_rng(seed)
    pts = _off_origin(rng, 16)
    scale = 1.0 / 0.5**2
    assert np.max(np.abs(model_L(f0, pts))) < 1e-13 * scale
    assert np.max(np.abs(model_L(fc(rng.normal(size=3)), pts))) < 1e-12 * scale


def test_model_square_is_minus_laplacian(rng):
    u = random_plane_waves(rng)
    pts = rng.uniform(-2, 2, size=(12, 3))
    hs = [0.08, 0.04, 0.02]
    errs = square_errors(u, pts, hs)
    for s in halving_slopes(hs, errs):
        assert s == pytest.approx(2.0, abs=0.2)


def test_quaternion_relations(rng):
    u = rng.normal(size=(6, 4, 3))
    q = quaternion_action
    np.testing.assert_allclose(q(1, q(1, u)), -u, atol=1e-15)
    np.testing.assert_allclose(q(1, q(2, u)), q(3, u), atol=1e-15)
    np.testing.assert_allclose(q(2, q(3, u)), q(1, u), atol=1e-15)


def test_indicial_scan_passes(rng):
    entries = indicial_roots_check(rng)
    assert all(e.passed for e in entries), [(e.test, e.value) for e in entries if not e.passed]
    assert entries[-1].test == "exclusion_rate_-1"


@given(seeds)
def test_tau_identity(seed):
    rng = np.random.default_rng(seed)
    assert tau_identity_residual(bps_field(), rng.normal(size=4), _off_origin(rng, 8)) < 1e-11


def test_tau_vectors_are_tangent(rng):
    bg = bps_field((0.1, 0.0, -0.2), 1.0)
    pts = _off_origin(rng, 10)
    for t in tau_vectors(bg):
        assert np.max(np.abs(coupled_L(bg, t, pts))) < 1e-10


def test_adjoint_by_integration(rng):
    # <L u, v> = <u, L* v> for compactly supported u, v
    bg = bps_field((0.0, 0.0, 0.0), 1.0)
    u = bump_field((0.2, -0.1, 0.0), 1.5, rng)
    v = bump_field((-0.1, 0.2, 0.1), 1.5, rng)
    grid = Grid3D((0.0, 0.0, 0.0), 1.8, 41)

    def dens(p):
        Lu, Lsv = coupled_L(bg, u, p), coupled_L_adjoint(bg, v, p)
        uu, _ = tangent_derivatives(u, p)
        vv, _ = tangent_derivatives(v, p)
        return np.stack([np.einsum("psa,psa->p", Lu, vv), np.einsum("psa,psa->p", uu, Lsv)], axis=-1)

    a, b = integrate(grid, dens, tail=False).value
    assert a == pytest.approx(b, rel=1e-4, abs=1e-6)


def test_weitzenbock_on_a_bump(rng):
    u = bump_field((0.1, 0.0, -0.1), 1.5, rng)
    res = weitzenbock_check(bps_field(), u, Grid3D((0.0, 0.0, 0.0), 1.8, 41))
    assert res.gap < 1e-8
    assert res.lhs_pairing == pytest.approx(res.lhs, rel=1e-3)


def test_off_shell_background_is_refused(rng):
    u = bump_field((0.0, 0.0, 0.0), 1.0, rng)
    with pytest.raises(ResidualTooLarge):
        weitzenbock_check(detuned(bps_field(), 1.5), u, Grid3D((0.0, 0.0, 0.0), 1.2, 21))
