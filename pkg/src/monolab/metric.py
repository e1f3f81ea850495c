"""L2 metric of cluster translations and phases on glued configurations.

Each cluster contributes four deformations: the phase and translation
vectors of its own one-cluster field (BPS inside ``R_in``, one-pole Dirac
outside ``R_out``, spliced in the abelian gauge).  Their Coulomb tails reach
the other clusters, which is where the off-diagonal blocks come from.

Quadrature is composite: a spherical product rule inside a ball around every
cluster (weighted by a partition of unity) and a uniform Simpson grid in
``zeta`` for the rest, with the exterior tail extrapolated from the box
surface.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import su2
from .bps import KAPPA, CentreFit, centre_of
from .dirac import one_pole_potential
from .fields import Grid3D, MonopoleField, TangentField, integrate
from .fitting import check_sweep, loglog_fit
from .linear import tau_vectors
from .preglue import ClusterSpec, GluedField, SpliceLayout, _phase_quaternion, build_pregluing, cutoff
from .quad import gauss_legendre, ordered_sum, sphere_rule

TAU_LABELS = ("phase", "x", "y", "z")


def cluster_field(glued: GluedField, j: int) -> MonopoleField:
    """Cluster ``j`` alone: its abelianised BPS core spliced into its own Dirac pole."""
    spec, layout = glued.spec, glued.layout
    zj = spec.positions[j]
    m = spec.mass
    k = spec.charges[j]
    string = spec.strings[j]
    core = glued.clusters[j]
    q = _phase_quaternion(spec.phases[j], m)
    r_in, r_out = layout.r_in[j], layout.r_out[j]

    def evaluate(p):
        d = p - zj
        r = np.sqrt(np.einsum("pi,pi->p", d, d))
        chi = cutoff(r, r_in, r_out)
        n = len(p)
        dt = np.result_type(p, float)
        A = np.zeros((n, 3, 3), dtype=dt)
        Phi = np.zeros((n, 3), dtype=dt)
        outer = np.real(chi) < 1.0
        if np.any(outer):
            w = 1.0 - chi[outer]
            A[outer, :, 2] = w[:, None] * one_pole_potential(d[outer], r[outer], k, string)
            Phi[outer, 2] = w * (m - KAPPA * k / r[outer])
        inner = np.real(r) < r_out
        if np.any(inner):
            Ab, Pb = core.evaluator(p[inner])
            if spec.phases[j] != 0.0:
                Ab = su2.adjoint(q, Ab)
                Pb = su2.adjoint(q, Pb)
            c = chi[inner]
            A[inner] += c[:, None, None] * Ab
            Phi[inner] += c[:, None] * Pb
        return A, Phi

    return MonopoleField(evaluate, m, k, tuple(zj), None, True, "analytic", f"cluster{j}")


@dataclass
class VariationBasis:
    fields: list
    labels: list  # (cluster index, label)
    glued: GluedField = field(repr=False)


def variation_basis(field: "GluedField | MonopoleField", spec: Optional[ClusterSpec] = None,
                    layout: Optional[SpliceLayout] = None) -> VariationBasis:
    """Phase and translation vectors of every cluster, in the order (phase, x, y, z)."""
    if isinstance(field, GluedField):
        glued = field
    else:
        if spec is None:
            raise ValueError("a bare field needs its ClusterSpec")
        # the per-cluster cores are rebuilt; only the layout ties them to ``field``
        glued = build_pregluing(spec, layout)
    fields, labels = [], []
    for j in range(glued.spec.n):
        taus = tau_vectors(cluster_field(glued, j))
        for lab, t in zip(TAU_LABELS, taus):
            fields.append(t)
            labels.append((j, lab))
    return VariationBasis(fields, labels, glued)


@dataclass
class MetricQuadrature:
    """Composite quadrature parameters (defaults are the ones used for the gates)."""

    inner_split: float = 6.0        # radial split, in units of 1/m
    n_radial_inner: int = 48
    n_radial_outer: int = 32
    n_theta: int = 24
    n_phi: int = 48
    pou_inner: float = 0.15         # partition of unity ramps over [a, b] * d_z
    pou_outer: float = 0.35
    single_radius: float = 10.0     # ball radius (units 1/m) when there is one cluster
    grid_half_width: float = 4.0    # in zeta
    grid_n: int = 65
    threads: int = 1

    def ramps(self, spec: ClusterSpec):
        z = spec.positions
        if spec.n == 1:
            b = self.single_radius / spec.mass
            return 0.4 * b, b
        dz = min(np.linalg.norm(z[i] - z[j]) for i in range(spec.n) for j in range(i))
        return self.pou_inner * dz, self.pou_outer * dz


def _pair_density(fields: Sequence[TangentField]):
    k = len(fields)
    iu = np.triu_indices(k)

    def dens(p):
        vals = np.stack([f.evaluate(p) for f in fields], axis=1)
        g = np.einsum("pica,pjca->pij", vals, vals)
        return g[:, iu[0], iu[1]]

    return dens, iu


def _full(k, iu, x):
    m = np.zeros((k, k))
    m[iu] = x
    return m + np.triu(m, 1).T


def composite_gram(fields: Sequence[TangentField], spec: ClusterSpec,
                   quad: Optional[MetricQuadrature] = None, chunk: int = 20000) -> np.ndarray:
    """All L2 pairings of ``fields`` over R^3 with the composite rule."""
    quad = quad or MetricQuadrature()
    z = spec.positions
    m = spec.mass
    a, b = quad.ramps(spec)
    dens, iu = _pair_density(fields)
    k = len(fields)

    def weights(p):
        return [cutoff(np.linalg.norm(p - zj, axis=1), a, b) for zj in z]

    parts = []
    dirs, wdir = sphere_rule(quad.n_theta, quad.n_phi)
    split = min(quad.inner_split / m, b)
    rad_nodes = [gauss_legendre(0.0, split, quad.n_radial_inner)]
    if split < b:
        rad_nodes.append(gauss_legendre(split, b, quad.n_radial_outer))
    r_all = np.concatenate([r for r, _ in rad_nodes])
    w_all = np.concatenate([w for _, w in rad_nodes])
    for j, zj in enumerate(z):
        pts = (zj + r_all[:, None, None] * dirs[None]).reshape(-1, 3)
        wts = (w_all[:, None] * r_all[:, None] ** 2 * wdir[None]).ravel()
        wts = wts * weights(pts)[j]
        acc = []
        for s in range(0, len(pts), chunk):
            acc.append(np.einsum("p,pk->k", wts[s:s + chunk], dens(pts[s:s + chunk])))
        parts.append(ordered_sum(acc))

    # the tail is extrapolated along rays from the box centre, so centre the
    # box on the clusters' charge-weighted mean
    kk = np.asarray(spec.charges, dtype=float)
    c = (kk[:, None] * z).sum(axis=0) / kk.sum()
    # nudge off lattice alignment so no node lands on a Dirac string; the
    # density is gauge invariant, so this only avoids the gauge singularity
    L = quad.grid_half_width / spec.epsilon
    h = 2 * L / (quad.grid_n - 1)
    c = c + h * np.array([0.309, 0.191, 0.0])
    grid = Grid3D(tuple(c), L, quad.grid_n)

    def outer_density(p):
        rest = 1.0 - sum(weights(p))
        out = np.zeros((len(p), len(iu[0])))
        live = rest > 0
        if np.any(live):
            out[live] = rest[live, None] * dens(p[live])
        return out

    res = integrate(grid, outer_density, threads=quad.threads)
    parts.append(np.asarray(res.value))
    return _full(k, iu, ordered_sum(parts))


@dataclass
class GramReport:
    matrix: np.ndarray
    target: np.ndarray
    labels: list
    epsilon: float
    off_block_max: float
    block_dev_max: float
    anisotropy: list

    def to_json(self) -> str:
        return json.dumps(
            {
                "epsilon": self.epsilon,
                "labels": [f"{j}:{lab}" for j, lab in self.labels],
                "matrix": self.matrix.ravel().tolist(),
                "target": self.target.ravel().tolist(),
                "shape": list(self.matrix.shape),
                "off_block_max": self.off_block_max,
                "block_dev_max": self.block_dev_max,
                "anisotropy": self.anisotropy,
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "value", "target"])
        for i, (ji, li) in enumerate(self.labels):
            for k, (jk, lk) in enumerate(self.labels):
                w.writerow([f"{ji}:{li}", f"{jk}:{lk}", repr(float(self.matrix[i, k])),
                            repr(float(self.target[i, k]))])
        return buf.getvalue()


def gram(basis: VariationBasis, quad: Optional[MetricQuadrature] = None) -> GramReport:
    spec = basis.glued.spec
    G = composite_gram(basis.fields, spec, quad)
    blocks = [j for j, _ in basis.labels]
    target = np.zeros_like(G)
    for i, bi in enumerate(blocks):
        target[i, i] = 2 * np.pi * spec.charges[bi] * spec.mass
    same = np.equal.outer(blocks, blocks)
    off = float(np.max(np.abs(G[~same]))) if np.any(~same) else 0.0
    dev = float(np.max(np.abs(G - target)[same] / np.diag(target).max()))
    aniso = []
    for j in range(spec.n):
        idx = [i for i, b in enumerate(blocks) if b == j]
        blk = G[np.ix_(idx, idx)]
        lam = np.trace(blk) / len(idx)
        aniso.append(float(np.max(np.abs(blk - lam * np.eye(len(idx)))) / lam))
    return GramReport(G, target, list(basis.labels), spec.epsilon, off, dev, aniso)


@dataclass
class SweepRow:
    epsilon: float
    block_dev_max: float
    offblock_max: float
    slope: float
    r2: float


def metric_sweep(spec: ClusterSpec, epsilons: Sequence[float], layout_rule=SpliceLayout.default,
                 quad: Optional[MetricQuadrature] = None, variant: str = "corrected"):
    """Gram reports over an eps sweep and the log-log decay rate of the off-block maximum."""
    eps = check_sweep(sorted(epsilons, reverse=True))
    reports = []
    for e in eps:
        s = spec.with_epsilon(e)
        glued = build_pregluing(s, layout_rule(s), variant)
        reports.append(gram(variation_basis(glued), quad))
    fit = loglog_fit(eps, [r.off_block_max for r in reports])
    rows = [SweepRow(float(e), r.block_dev_max, r.off_block_max, fit.slope, fit.r2)
            for e, r in zip(eps, reports)]
    return rows, reports


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "block_dev_max", "offblock_max", "slope", "r2"])
    for r in rows:
        w.writerow([repr(r.epsilon), repr(r.block_dev_max), repr(r.offblock_max), repr(r.slope), repr(r.r2)])
    return buf.getvalue()


@dataclass
class CentreReport:
    fitted: np.ndarray
    expected: np.ndarray
    error: float
    tolerance: float
    fit: CentreFit

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def centre_sum_check(glued: GluedField, shells: Optional[Sequence[float]] = None,
                     tolerance: Optional[float] = None) -> CentreReport:
    """Fit the centre of the glued field and compare with the charge-weighted cluster mean."""
    spec = glued.spec
    z = spec.positions
    k = np.asarray(spec.charges, dtype=float)
    expected = (k[:, None] * z).sum(axis=0) / k.sum()
    reach = float(np.max(np.linalg.norm(z, axis=1)))
    if shells is None:
        shells = [4.0 * reach + 10.0 / spec.mass, 5.0 * reach + 12.0 / spec.mass, 6.0 * reach + 14.0 / spec.mass]
    fit = centre_of(glued.field, shells)
    err = float(np.linalg.norm(fit.centre - expected))
    tol = tolerance if tolerance is not None else 1e-4 * (1.0 + reach)
    return CentreReport(fit.centre, expected, err, tol, fit)
