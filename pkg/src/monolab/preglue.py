"""Approximate multi-cluster monopoles from widely separated BPS clusters.

Clusters sit at ``z_j = zeta_j / eps`` with ``sum |zeta_j|^2 = 1``.  Everything
is assembled in the abelian gauge, where each abelianised BPS cluster and the
Dirac field of the poles are diagonal away from the cluster cores:

    Phi = (1 - sum chi_j) Phi_out + sum chi_j (Phi_B,j + sigma_j Phi_D,not j)
    A   = (1 - sum chi_j) A_out   + sum chi_j (A_B,j   + sigma_j A_D,not j)

``chi_j`` is a quintic smoothstep that is 1 inside ``R_in`` and 0 outside
``R_out``; ``sigma_j = tanh(2 m r_j)`` switches off the other poles' Coulomb
fields at the cluster centre, where the abelian gauge is singular.  The
``corrected`` variant uses the full Dirac Higgs field outside the clusters;
the ``naive`` variant keeps ``Phi_out = m e_3``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import su2
from .bps import KAPPA, abelianize, bps_field
from .dirac import _string_choice, one_pole_potential
from .errors import CoincidentPoints, LayoutOverlap, PatchString
from .fields import MonopoleField, residual_norm
from .fitting import check_sweep, loglog_fit
from .quad import fibonacci_sphere, simpson_weights

REGIONS = ("core", "annulus", "interstitial", "far", "exterior")


def smoothstep5(t):
    """``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1]; complex-safe."""
    tr = np.real(t)
    poly = t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    return np.where(tr <= 0.0, 0.0 * t, np.where(tr >= 1.0, 1.0 + 0.0 * t, poly))


def cutoff(r, r_in: float, r_out: float):
    """1 inside ``r_in``, 0 outside ``r_out``, C^2 in between."""
    return 1.0 - smoothstep5((r - r_in) / (r_out - r_in))


@dataclass(frozen=True)
class ClusterSpec:
    zetas: tuple
    charges: tuple = ()
    k0: int = 0
    mass: float = 1.0
    epsilon: float = 0.1
    phases: tuple = ()
    strings: tuple = ()
    normalised_from: float = 1.0

    def __post_init__(self):
        z = np.asarray(self.zetas, dtype=float).reshape(-1, 3)
        n = len(z)
        if n == 0:
            raise ValueError("need at least one cluster")
        if np.any(np.linalg.norm(z, axis=1) == 0):
            raise CoincidentPoints("cluster positions must be nonzero")
        for i in range(n):
            for j in range(i):
                if np.linalg.norm(z[i] - z[j]) < 1e-12:
                    raise CoincidentPoints(f"clusters {j} and {i} coincide")
        size = float(np.sqrt(np.sum(z * z)))
        if not math.isclose(size, 1.0, rel_tol=1e-12):
            object.__setattr__(self, "normalised_from", size)
            z = z / size
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        charges = tuple(int(k) for k in self.charges) or (1,) * n
        if len(charges) != n or any(k <= 0 for k in charges):
            raise ValueError("one positive charge per cluster")
        phases = tuple(float(t) for t in self.phases) or (0.0,) * n
        if len(phases) != n:
            raise ValueError("one phase per cluster")
        object.__setattr__(self, "zetas", tuple(tuple(float(x) for x in row) for row in z))
        object.__setattr__(self, "charges", charges)
        object.__setattr__(self, "phases", phases)
        strings = tuple(self.strings) or ("auto",) * n
        poles = [(zz, k) for zz, k in zip(self.positions, charges)]
        strings = tuple(_string_choice(poles, j) if s == "auto" else s for j, s in enumerate(strings))
        object.__setattr__(self, "strings", strings)

    @property
    def n(self) -> int:
        return len(self.zetas)

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.zetas) / self.epsilon

    @property
    def d_min(self) -> float:
        """Smallest pairwise separation in ``zeta`` (``min |zeta|`` for a single cluster)."""
        z = np.asarray(self.zetas)
        if self.n == 1:
            return float(np.linalg.norm(z[0]))
        return float(min(np.linalg.norm(z[i] - z[j]) for i in range(self.n) for j in range(i)))

    @property
    def min_norm(self) -> float:
        return float(np.min(np.linalg.norm(np.asarray(self.zetas), axis=1)))

    def with_epsilon(self, eps: float) -> "ClusterSpec":
        return replace(self, epsilon=float(eps), strings=self.strings)

    @classmethod
    def from_mapping(cls, doc: dict) -> "ClusterSpec":
        return cls(
            tuple(tuple(z) for z in doc["zetas"]),
            tuple(doc.get("charges", ())),
            int(doc.get("k0", 0)),
            float(doc.get("mass", 1.0)),
            float(doc.get("epsilon", 0.1)),
            tuple(doc.get("phases", ())),
            tuple(doc.get("strings", ())),
        )


@dataclass(frozen=True)
class SpliceLayout:
    r_in: tuple
    r_out: tuple

    @classmethod
    def default(cls, spec: ClusterSpec, out_frac: float = 0.4, in_frac: float = 0.5) -> "SpliceLayout":
        r_out = out_frac * spec.d_min / spec.epsilon
        return cls((in_frac * r_out,) * spec.n, (r_out,) * spec.n)

    def chi(self, j: int, r):
        return cutoff(r, self.r_in[j], self.r_out[j])

    def validate(self, spec: ClusterSpec) -> None:
        if len(self.r_in) != spec.n or len(self.r_out) != spec.n:
            raise LayoutOverlap("one pair of radii per cluster")
        z = spec.positions
        for j in range(spec.n):
            if not 0 < self.r_in[j] < self.r_out[j]:
                raise LayoutOverlap(f"cluster {j}: need 0 < R_in < R_out")
            for i in range(spec.n):
                if i != j and self.r_out[j] >= 0.5 * np.linalg.norm(z[i] - z[j]):
                    raise LayoutOverlap(f"cluster {j}: R_out reaches half way to cluster {i}")
        for j, s in enumerate(spec.strings):
            direction = np.array([0.0, 0.0, -1.0 if s == "north" else 1.0])
            for i in range(spec.n):
                if i == j:
                    continue
                d = z[i] - z[j]
                t = float(d @ direction)
                gap = float(np.linalg.norm(d - t * direction)) if t > 0 else float(np.linalg.norm(d))
                if gap < self.r_out[i]:
                    raise PatchString(f"string of cluster {j} passes within R_out of cluster {i}")


def _phase_quaternion(t: float, mass: float) -> np.ndarray:
    # exp(t m e_3): the asymptotic value of exp(t Phi) in the abelian gauge
    return np.array([math.cos(t * mass), 0.0, 0.0, math.sin(t * mass)])


@dataclass(frozen=True)
class GluedField:
    """A pregluing configuration together with the data it was built from."""

    field: MonopoleField
    spec: ClusterSpec
    layout: SpliceLayout
    variant: str
    clusters: tuple = field(default=(), compare=False)

    def regions(self, pts) -> np.ndarray:
        """Region index per point: 0 core, 1 annulus, 2 interstitial, 3 far."""
        pts = np.asarray(pts, dtype=float)
        out = np.full(len(pts), 2, dtype=int)
        outside_all = np.ones(len(pts), dtype=bool)
        for j, z in enumerate(self.spec.positions):
            r = np.linalg.norm(pts - z, axis=1)
            outside_all &= r >= self.layout.r_out[j]
            out[(r > self.layout.r_in[j]) & (r < self.layout.r_out[j])] = 1
        for j, z in enumerate(self.spec.positions):
            out[np.linalg.norm(pts - z, axis=1) <= self.layout.r_in[j]] = 0
        far = outside_all & (np.linalg.norm(pts, axis=1) >= 2.0 / self.spec.epsilon)
        out[far] = 3
        return out


def build_pregluing(spec: ClusterSpec, layout: Optional[SpliceLayout] = None, variant: str = "corrected",
                    external: Optional[dict] = None) -> GluedField:
    """Assemble the glued configuration; see the module docstring.

    ``external`` maps a cluster index to a field already in abelian gauge
    (e.g. a sampled higher-charge monopole); other clusters must have
    charge one and use the exact BPS solution.
    """
    if variant not in ("corrected", "naive"):
        raise ValueError("variant must be 'corrected' or 'naive'")
    if spec.k0 != 0:
        raise NotImplementedError("a central cluster is not supported")
    layout = layout or SpliceLayout.default(spec)
    layout.validate(spec)
    external = external or {}
    m = spec.mass
    z = spec.positions
    clusters = []
    for j in range(spec.n):
        if j in external:
            clusters.append(external[j])
            continue
        if spec.charges[j] != 1:
            raise NotImplementedError("charge > 1 clusters must be supplied as external fields")
        clusters.append(abelianize(bps_field(tuple(z[j]), m), spec.strings[j], r_min=layout.r_in[j]))
    phase_q = [_phase_quaternion(t, m) for t in spec.phases]
    ks = spec.charges
    corrected = variant == "corrected"

    def evaluate(p):
        n = len(p)
        dt = np.result_type(p, float)
        offs = [p - zj for zj in z]
        rs = [np.sqrt(np.einsum("pi,pi->p", d, d)) for d in offs]
        chis = [layout.chi(j, rs[j]) for j in range(spec.n)]
        total = sum(chis)
        A = np.zeros((n, 3, 3), dtype=dt)
        Phi = np.zeros((n, 3), dtype=dt)

        outer = np.real(total) < 1.0
        if np.any(outer):
            w = (1.0 - total)[outer]
            a_out = 0
            psi = m + 0 * w
            for i in range(spec.n):
                d, r = offs[i][outer], rs[i][outer]
                a_out = a_out + one_pole_potential(d, r, ks[i], spec.strings[i])
                if corrected:
                    psi = psi - KAPPA * ks[i] / r
            A[outer, :, 2] += w[:, None] * a_out
            Phi[outer, 2] += w * psi

        for j in range(spec.n):
            sel = np.real(rs[j]) < layout.r_out[j]
            if not np.any(sel):
                continue
            Ab, Pb = clusters[j].evaluator(p[sel])
            if spec.phases[j] != 0.0:
                Ab = su2.adjoint(phase_q[j], Ab)
                Pb = su2.adjoint(phase_q[j], Pb)
            sigma = np.tanh(2.0 * m * rs[j][sel])
            a_other = 0
            psi_other = 0
            for i in range(spec.n):
                if i == j:
                    continue
                d, r = offs[i][sel], rs[i][sel]
                a_other = a_other + one_pole_potential(d, r, ks[i], spec.strings[i])
                psi_other = psi_other - KAPPA * ks[i] / r
            c = chis[j][sel]
            A[sel] += c[:, None, None] * Ab
            Phi[sel] += c[:, None] * Pb
            if spec.n > 1:
                A[sel, :, 2] += (c * sigma)[:, None] * a_other
                if corrected:
                    Phi[sel, 2] += c * sigma * psi_other
        return A, Phi

    F = MonopoleField(evaluate, m, sum(ks) + spec.k0, (0.0, 0.0, 0.0), None, True, "analytic",
                      f"glued.{variant}")
    return GluedField(F, spec, layout, variant, tuple(clusters))


# --- residual ladder ---------------------------------------------------------

def string_distance(spec: ClusterSpec, pts) -> np.ndarray:
    """Distance from each point to the nearest Dirac string."""
    best = np.full(len(pts), np.inf)
    for zj, s in zip(spec.positions, spec.strings):
        d = pts - zj
        sign = -1.0 if s == "north" else 1.0
        t = sign * d[:, 2]
        rho = np.hypot(d[:, 0], d[:, 1])
        best = np.minimum(best, np.where(t > 0, rho, np.linalg.norm(d, axis=1)))
    return best


@dataclass
class SamplePlan:
    """Evaluation points: a uniform grid in ``zeta`` plus shells around every cluster."""

    grid_half_width: float = 2.5
    grid_n: int = 51
    shell_count: int = 24
    shell_dirs: int = 600
    string_gap: float = 1e-3

    def points(self, glued: GluedField):
        spec, layout = glued.spec, glued.layout
        eps = spec.epsilon
        ax = np.linspace(-self.grid_half_width, self.grid_half_width, self.grid_n) / eps
        g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
        w1 = simpson_weights(self.grid_n, (ax[1] - ax[0]) * eps)
        wg = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).ravel()
        shells = []
        dirs = fibonacci_sphere(self.shell_dirs)
        for j, zj in enumerate(spec.positions):
            radii = np.linspace(0.3 * layout.r_in[j], 1.6 * layout.r_out[j], self.shell_count)
            shells.append((zj + radii[:, None, None] * dirs[None]).reshape(-1, 3))
        sh = np.concatenate(shells)
        pts = np.concatenate([g, sh])
        weights = np.concatenate([wg, np.zeros(len(sh))])
        keep = string_distance(spec, pts) > self.string_gap
        for zj in spec.positions:
            keep &= np.linalg.norm(pts - zj, axis=1) > 1e-6
        return pts[keep], weights[keep]


def region_norms(glued: GluedField, plan: Optional[SamplePlan] = None,
                 h: Optional[float] = None, chunk: int = 20000) -> dict:
    """``{(region, norm_kind): value}`` of the Bogomolny residual.

    ``sup`` is the z-frame maximum; ``sup_zeta`` and ``l2_zeta`` measure the
    residual as a form in ``zeta = eps z`` (one factor ``1/eps``), the latter
    with the grid's Simpson weights in ``zeta``.
    """
    plan = plan or SamplePlan()
    pts, w = plan.points(glued)
    res = np.concatenate([residual_norm(glued.field, pts[i:i + chunk], h)
                          for i in range(0, len(pts), chunk)])
    reg = glued.regions(pts)
    eps = glued.spec.epsilon
    out = {}
    masks = {name: reg == k for k, name in enumerate(REGIONS[:4])}
    masks["exterior"] = (reg == 1) | (reg == 2)
    for name, mk in masks.items():
        if not np.any(mk):
            continue
        sup = float(res[mk].max())
        out[(name, "sup")] = sup
        out[(name, "sup_zeta")] = sup / eps
        out[(name, "l2_zeta")] = math.sqrt(math.fsum(w[mk] * (res[mk] / eps) ** 2))
    return out


@dataclass
class LadderRow:
    epsilon: float
    region: str
    norm_kind: str
    value: float
    slope: float
    r2: float


def residual_orders(spec: ClusterSpec, epsilons: Sequence[float], variant: str = "corrected",
                    plan: Optional[SamplePlan] = None, h: Optional[float] = None,
                    layout_rule=SpliceLayout.default) -> list[LadderRow]:
    """Region-resolved residual norms over an eps sweep with log-log slopes."""
    eps = check_sweep(sorted(epsilons, reverse=True))
    table = {}
    for e in eps:
        s = spec.with_epsilon(e)
        glued = build_pregluing(s, layout_rule(s), variant)
        table[e] = region_norms(glued, plan, h)
    keys = sorted(set().union(*(t.keys() for t in table.values())),
                  key=lambda k: (REGIONS.index(k[0]), k[1]))
    rows = []
    for key in keys:
        vals = [table[e].get(key, float("nan")) for e in eps]
        fit = loglog_fit(eps, vals)
        rows.extend(LadderRow(float(e), key[0], key[1], float(v), fit.slope, fit.r2)
                    for e, v in zip(eps, vals))
    return rows


def ladder_csv(rows: Sequence[LadderRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "region", "norm_kind", "value", "slope", "r2"])
    for r in rows:
        w.writerow([repr(r.epsilon), r.region, r.norm_kind, repr(r.value), repr(r.slope), repr(r.r2)])
    return buf.getvalue()


def ladder_slope(rows: Sequence[LadderRow], region: str, norm_kind: str) -> tuple[float, float]:
    for r in rows:
        if r.region == region and r.norm_kind == norm_kind:
            return r.slope, r.r2
    raise KeyError((region, norm_kind))


# --- Gibbons-Manton curvature ------------------------------------------------

@dataclass(frozen=True)
class GMCurvature:
    """Curvature 2-form of cluster ``j``'s phase circle over configuration space.

    ``F_j(U, V) = sum_{i != j} k_i * w . (dU x dV) / (4 pi |w|^3)`` with
    ``w = zeta_j - zeta_i``, ``dU = U_j - U_i``: the pullback of the unit-area
    form on the sphere along ``w / |w|``.  Its flux over a sphere of
    ``zeta_j`` positions enclosing ``zeta_i`` (and no other cluster) is
    ``k_i``.
    """

    charges: tuple
    j: int

    def __call__(self, zetas, U, V) -> float:
        zetas = np.asarray(zetas, dtype=float)
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        total = 0.0
        for i, k in enumerate(self.charges):
            if i == self.j:
                continue
            w = zetas[self.j] - zetas[i]
            r = float(np.linalg.norm(w))
            if r < 1e-12:
                raise CoincidentPoints(f"clusters {self.j} and {i} coincide")
            total += k * float(w @ np.cross(U[self.j] - U[i], V[self.j] - V[i])) / (4 * np.pi * r**3)
        return total

    def exterior_derivative(self, zetas, U, V, W, h: float) -> float:
        """``dF(U, V, W)`` for constant vector fields by central differences."""
        zetas = np.asarray(zetas, dtype=float)

        def deriv(X, Y, Z):
            return (self(zetas + h * X, Y, Z) - self(zetas - h * X, Y, Z)) / (2 * h)

        return deriv(U, V, W) - deriv(V, U, W) + deriv(W, U, V)

    def sphere_flux(self, zetas, i: int, radius: float, n_quad: int = 32) -> float:
        """Integral of ``F`` over ``zeta_j = zeta_i + radius * n``, outward orientation."""
        zetas = np.asarray(zetas, dtype=float)
        # parametrise by (theta, phi); tangent vectors d/dtheta, d/dphi give outward order
        ct, wt = np.polynomial.legendre.leggauss(n_quad)
        theta = np.arccos(ct)
        phis = (np.arange(2 * n_quad) + 0.5) * (np.pi / n_quad)
        total = []
        for t, wtt in zip(theta, wt):
            st = math.sin(t)
            for ph in phis:
                n_vec = np.array([st * math.cos(ph), st * math.sin(ph), math.cos(t)])
                e_t = np.array([math.cos(t) * math.cos(ph), math.cos(t) * math.sin(ph), -st])
                e_p = np.array([-math.sin(ph), math.cos(ph), 0.0])
                conf = zetas.copy()
                conf[self.j] = zetas[i] + radius * n_vec
                U = np.zeros_like(zetas)
                V = np.zeros_like(zetas)
                U[self.j] = radius * e_t
                V[self.j] = radius * e_p
                # d(theta) = d(cos theta) / sin(theta): GL in cos(theta)
                total.append(self(conf, U, V) * wtt * (np.pi / n_quad))
        return math.fsum(total)


def gm_curvature_form(spec: ClusterSpec, j: int) -> GMCurvature:
    if not 0 <= j < spec.n:
        raise IndexError(j)
    return GMCurvature(spec.charges, j)


def gm_flux_table(spec: ClusterSpec, radius: Optional[float] = None, n_quad: int = 32) -> list[tuple]:
    """Flux of every ``F_j`` over a small sphere of ``zeta_j`` around each ``zeta_i``."""
    zetas = np.asarray(spec.zetas)
    radius = radius if radius is not None else 0.25 * spec.d_min
    rows = []
    for j in range(spec.n):
        F = gm_curvature_form(spec, j)
        for i in range(spec.n):
            if i != j:
                rows.append((j, i, spec.charges[i], F.sphere_flux(zetas, i, radius, n_quad)))
    return rows

