import csv
import io

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from monolab import su2
from monolab.bps import bps_field
from monolab.errors import CoincidentPoints, InsufficientSweep, LayoutOverlap
from monolab.fields import residual_norm
from monolab.fitting import check_sweep, halving_slopes, loglog_fit
from monolab.preglue import (
    ClusterSpec,
    SamplePlan,
    SpliceLayout,
    build_pregluing,
    cutoff,
    gm_curvature_form,
    gm_flux_table,
    ladder_csv,
    residual_orders,
    smoothstep5,
)

vec = st.tuples(*[st.floats(-1.0, 1.0, allow_nan=False)] * 3)
TWO = ClusterSpec(((1.0, 0.0, 0.0), (-1.0, 0.5, 0.2)), epsilon=0.1)


def test_positions_are_normalised():
    s = ClusterSpec(((3.0, 0.0, 0.0), (0.0, 4.0, 0.0)), epsilon=0.5)
    assert s.normalised_from == pytest.approx(5.0)
    assert np.sum(np.asarray(s.zetas) ** 2) == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(s.positions, [[1.2, 0, 0], [0, 1.6, 0]])
    assert s.charges == (1, 1) and s.phases == (0.0, 0.0)


@pytest.mark.parametrize("zetas", [((0.0, 0.0, 0.0),), ((1.0, 0, 0), (1.0, 0, 0))])
def test_coincident_points(zetas):
    with pytest.raises(CoincidentPoints):
        ClusterSpec(zetas)


@pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(mass=-1.0), dict(charges=(1,)), dict(phases=(0.1,))])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ClusterSpec(((1.0, 0, 0), (0, 1.0, 0)), **kw)


def test_layout_overlap():
    with pytest.raises(LayoutOverlap):
        SpliceLayout((1.0, 1.0), (100.0, 100.0)).validate(TWO)
    with pytest.raises(LayoutOverlap):
        SpliceLayout((2.0, 2.0), (1.0, 1.0)).validate(TWO)
    SpliceLayout.default(TWO).validate(TWO)


def test_cutoff_is_c2():
    t = np.array([0.0, 1.0])
    h = 1e-4
    for x in t:
        d1 = (smoothstep5(x + h) - smoothstep5(x - h)) / (2 * h)
        d2 = (smoothstep5(x + h) - 2 * smoothstep5(x) + smoothstep5(x - h)) / h**2
        assert abs(d1) < 1e-6 and abs(d2) < 1e-2
    assert cutoff(0.5, 1.0, 2.0) == 1.0 and cutoff(2.5, 1.0, 2.0) == 0.0
    assert cutoff(1.5, 1.0, 2.0) == pytest.approx(0.5)


def test_regions():
    g = build_pregluing(TWO)
    z0 = TWO.positions[0]
    r_in, r_out = g.layout.r_in[0], g.layout.r_out[0]
    pts = np.array([z0 + [0.5 * r_in, 0, 0], z0 + [0, 0.5 * (r_in + r_out), 0], [0.0, 4.0, 0.3], [30.0, 0, 0]])
    assert g.regions(pts).tolist() == [0, 1, 2, 3]


def test_corrected_field_is_exact_between_clusters():
    pts = np.array([[0.0, 4.0, 0.3], [0.5, -3.0, 2.0], [20.0, 20.0, 20.0]])
    assert residual_norm(build_pregluing(TWO).field, pts).max() < 1e-12
    assert residual_norm(build_pregluing(TWO, variant="naive").field, pts).max() > 1e-4


def test_core_matches_the_bps_cluster():
    g = build_pregluing(TWO)
    z0 = TWO.positions[0]
    offs = np.array([[0.3, 0.2, 0.1], [-0.5, 0.4, 0.9], [1.0, -1.0, 0.0]])
    glued = su2.norm(g.field.Phi(z0 + offs))
    single = su2.norm(bps_field().Phi(offs))
    # the other cluster's Coulomb tail, switched on away from the centre
    r = np.linalg.norm(offs, axis=1)
    other = 0.5 / np.linalg.norm(z0 + offs - TWO.positions[1], axis=1)
    np.testing.assert_allclose(glued, single - np.tanh(2 * r) * other, atol=1e-12)


def test_unknown_variant():
    with pytest.raises(ValueError):
        build_pregluing(TWO, variant="other")


@given(st.lists(vec, min_size=2, max_size=4), st.lists(st.integers(1, 3), min_size=4, max_size=4))
def test_gm_flux_is_the_enclosed_charge(zs, ks):
    z = np.asarray(zs)
    assume(np.all(np.linalg.norm(z, axis=1) > 0.05))
    assume(all(np.linalg.norm(z[i] - z[j]) > 0.1 for i in range(len(z)) for j in range(i)))
    spec = ClusterSpec(tuple(map(tuple, z)), tuple(ks[: len(z)]))
    for j, i, k, val in gm_flux_table(spec, n_quad=24):
        assert val == pytest.approx(k, abs=1e-6)


def test_gm_form_is_closed(rng):
    spec = ClusterSpec(((1.0, 0, 0), (-0.5, 0.8, 0.1), (0.1, -0.6, 0.7)), (1, 2, 1))
    z = np.asarray(spec.zetas)
    F = gm_curvature_form(spec, 1)
    U, V, W = (rng.normal(size=z.shape) for _ in range(3))
    hs = [1e-2, 5e-3, 2.5e-3]
    errs = [abs(F.exterior_derivative(z, U, V, W, h)) for h in hs]
    assert errs[-1] < 1e-4
    assert loglog_fit(hs, errs).slope > 1.8


def test_gm_form_is_antisymmetric(rng):
    spec = ClusterSpec(((1.0, 0, 0), (-0.5, 0.8, 0.1)))
    z = np.asarray(spec.zetas)
    F = gm_curvature_form(spec, 0)
    U, V = rng.normal(size=z.shape), rng.normal(size=z.shape)
    assert F(z, U, V) == pytest.approx(-F(z, V, U), abs=1e-15)
    with pytest.raises(IndexError):
        gm_curvature_form(spec, 2)


def test_sweep_validation():
    with pytest.raises(InsufficientSweep):
        check_sweep([0.1, 0.05])
    with pytest.raises(InsufficientSweep):
        check_sweep([0.1, 0.05, 0.02])
    with pytest.raises(InsufficientSweep):
        residual_orders(TWO, [0.1, 0.05])
    assert halving_slopes([1.0, 0.5], [4.0, 1.0]) == [pytest.approx(2.0)]


def test_ladder_csv_layout():
    plan = SamplePlan(grid_n=11, shell_count=4, shell_dirs=60)
    rows = residual_orders(TWO, [0.1, 0.05, 0.025], "naive", plan)
    table = list(csv.reader(io.StringIO(ladder_csv(rows))))
    assert table[0] == ["epsilon", "region", "norm_kind", "value", "slope", "r2"]
    assert len(table) == 1 + len(rows)
    assert {r[1] for r in table[1:]} >= {"core", "annulus", "interstitial"}
    assert float(table[1][0]) == 0.1
