"""Gauge potentials and Higgs fields on R^3, covariant operators and quadrature.

Array conventions used throughout the package:

* points: ``(N, 3)``
* potential ``A``: ``(N, 3, 3)`` indexed ``[point, direction i, su(2) component a]``
* Higgs ``Phi``: ``(N, 3)``
* derivatives: ``dA[p, j, i, a] = d_j A_i^a`` and ``dPhi[p, j, a] = d_j Phi^a``
* tangent vectors: ``(N, 4, 3)`` ordered ``(phi, a_1, a_2, a_3)``

Hodge star conventions: ``*(dx^1 ^ dx^2) = dx^3`` and cyclic, so the
curvature is reported through ``B_k = 1/2 eps_kij F_ij`` and the Bogomolny
equation reads ``B = nabla_A Phi``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import su2
from .errors import MaskedPoint
from .quad import cube_exterior_r4, ordered_sum, simpson_weights

# complex-step increment; derivatives come out exact to rounding
CS_STEP = 1e-20

FieldFn = Callable[[np.ndarray], tuple]


def complex_step(fn: FieldFn, pts: np.ndarray):
    """Values and first derivatives of a holomorphic-in-each-coordinate ``fn``.

    ``fn(pts)`` returns a tuple of arrays with leading axis over points.
    Returns ``(values, derivs)`` where ``derivs[k]`` has an axis of length 3
    inserted after the point axis.
    """
    pts = np.asarray(pts, dtype=float)
    values = None
    derivs = None
    for j in range(3):
        p = pts.astype(complex)
        p[:, j] += 1j * CS_STEP
        out = fn(p)
        if values is None:
            values = tuple(np.real(o) for o in out)
            derivs = tuple(np.empty((o.shape[0], 3) + o.shape[1:]) for o in out)
        for d, o in zip(derivs, out):
            d[:, j] = np.imag(o) / CS_STEP
    return values, derivs


def central_difference(fn: FieldFn, pts: np.ndarray, h: float):
    pts = np.asarray(pts, dtype=float)
    values = tuple(np.asarray(o) for o in fn(pts))
    derivs = tuple(np.empty((o.shape[0], 3) + o.shape[1:]) for o in values)
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        plus = fn(pts + step)
        minus = fn(pts - step)
        for d, p, m in zip(derivs, plus, minus):
            d[:, j] = (np.asarray(p) - np.asarray(m)) / (2 * h)
    return values, derivs


@dataclass(frozen=True)
class MonopoleField:
    """A configuration ``(A, Phi)`` given by vectorised evaluators.

    ``evaluator(pts)`` returns ``(A, Phi)``.  ``jacobian(pts)``, when given,
    returns ``(A, Phi, dA, dPhi)`` from closed-form derivatives.  When
    ``complex_safe`` is set the evaluator accepts complex points and
    derivatives default to the complex step.
    """

    evaluator: FieldFn
    mass: float = 1.0
    charge: int = 1
    center: tuple = (0.0, 0.0, 0.0)
    jacobian: Optional[Callable] = None
    complex_safe: bool = True
    eval_mode: str = "analytic"
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def evaluate(self, pts):
        return self.evaluator(np.asarray(pts))

    def A(self, pts):
        return self.evaluate(pts)[0]

    def Phi(self, pts):
        return self.evaluate(pts)[1]


@dataclass(frozen=True)
class TangentField:
    """Infinitesimal deformation ``(phi, a)``; ``evaluator(pts) -> (N, 4, 3)``."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    complex_safe: bool = True
    decaying: bool = False
    name: str = ""

    def evaluate(self, pts):
        return self.evaluator(np.asarray(pts))

    def phi(self, pts):
        return self.evaluate(pts)[:, 0]

    def a(self, pts):
        return self.evaluate(pts)[:, 1:]

    def scaled(self, s: float) -> "TangentField":
        return TangentField(lambda p: s * self.evaluator(p), self.complex_safe, self.decaying, self.name)

    def __add__(self, other: "TangentField") -> "TangentField":
        return TangentField(
            lambda p: self.evaluator(p) + other.evaluator(p),
            self.complex_safe and other.complex_safe,
            self.decaying and other.decaying,
        )


def field_derivatives(F: MonopoleField, pts, h: Optional[float] = None):
    """``(A, Phi, dA, dPhi)`` at ``pts``; analytic when ``h`` is None, else central differences."""
    pts = np.asarray(pts, dtype=float)
    if h is None:
        if F.jacobian is not None:
            return F.jacobian(pts)
        if not F.complex_safe:
            raise ValueError(f"field {F.name!r} has no analytic derivatives; pass a step h")
        (A, Phi), (dA, dPhi) = complex_step(F.evaluator, pts)
    else:
        (A, Phi), (dA, dPhi) = central_difference(F.evaluator, pts, h)
    return A, Phi, dA, dPhi


def tangent_derivatives(u: TangentField, pts, h: Optional[float] = None):
    pts = np.asarray(pts, dtype=float)
    fn = lambda p: (u.evaluator(p),)  # noqa: E731
    if h is None:
        if not u.complex_safe:
            raise ValueError("tangent field is not complex-safe; pass a step h")
        (v,), (dv,) = complex_step(fn, pts)
    else:
        (v,), (dv,) = central_difference(fn, pts, h)
    return v, dv


def _check_mask(pts, exclude, h):
    if not exclude:
        return
    pad = 0.0 if h is None else h
    for c, r in exclude:
        d = np.linalg.norm(np.asarray(pts, dtype=float) - np.asarray(c, dtype=float), axis=-1)
        if np.any(d < r + pad):
            raise MaskedPoint(f"stencil touches excluded ball at {tuple(c)} (radius {r})")


def covariant_from(A, Phi, dPhi):
    return dPhi + su2.bracket(A, Phi[:, None, :])


def curvature_from(A, dA):
    """Hodge-dual curvature ``B_k = F_ij`` (cyclic) from potential and its derivatives."""
    out = np.empty_like(A)
    for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        out[:, k] = dA[:, i, j] - dA[:, j, i] + su2.bracket(A[:, i], A[:, j])
    return out


def covariant_derivative(F: MonopoleField, pts, direction: Optional[int] = None,
                         h: Optional[float] = None, exclude=()):
    """``nabla_A Phi`` at ``pts``: all three directions, or one if ``direction`` is given."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _check_mask(pts, exclude, h)
    A, Phi, _, dPhi = field_derivatives(F, pts, h)
    D = covariant_from(A, Phi, dPhi)
    return D if direction is None else D[:, direction]


def curvature(F: MonopoleField, pts, h: Optional[float] = None, exclude=()):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _check_mask(pts, exclude, h)
    A, _, dA, _ = field_derivatives(F, pts, h)
    return curvature_from(A, dA)


def bogomolny_vector(F: MonopoleField, pts, h: Optional[float] = None):
    """Pointwise ``*F_A - nabla_A Phi`` with shape ``(N, 3, 3)``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    A, Phi, dA, dPhi = field_derivatives(F, pts, h)
    return curvature_from(A, dA) - covariant_from(A, Phi, dPhi)


def residual_norm(F: MonopoleField, pts, h: Optional[float] = None) -> np.ndarray:
    r = bogomolny_vector(F, pts, h)
    return np.sqrt(np.einsum("pia,pia->p", r, r))


def energy_density(F: MonopoleField, pts, h: Optional[float] = None) -> np.ndarray:
    A, Phi, dA, dPhi = field_derivatives(F, pts, h)
    B = curvature_from(A, dA)
    D = covariant_from(A, Phi, dPhi)
    return np.einsum("pia,pia->p", B, B) + np.einsum("pia,pia->p", D, D)


# --- grids -------------------------------------------------------------------

@dataclass(frozen=True)
class Grid3D:
    """Uniform box ``[c - h, c + h]^3`` with ``n`` (odd) nodes per axis."""

    center: tuple = (0.0, 0.0, 0.0)
    half_width: float = 1.0
    n: int = 33
    excluded_balls: tuple = ()

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("grid needs an odd number of points per axis (>= 3)")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(
            self,
            "excluded_balls",
            tuple((tuple(float(x) for x in c), float(r)) for c, r in self.excluded_balls),
        )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    def axis(self, k: int) -> np.ndarray:
        return self.center[k] + np.linspace(-self.half_width, self.half_width, self.n)

    def slab(self, i: int) -> np.ndarray:
        """Points with x-index ``i``, ordered with z fastest."""
        y, z = np.meshgrid(self.axis(1), self.axis(2), indexing="ij")
        x = np.full_like(y, self.axis(0)[i])
        return np.stack([x, y, z], axis=-1).reshape(-1, 3)

    def points(self) -> np.ndarray:
        return np.concatenate([self.slab(i) for i in range(self.n)])

    def mask(self, pts) -> np.ndarray:
        """True where a point lies inside an excluded ball."""
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(len(pts), dtype=bool)
        for c, r in self.excluded_balls:
            out |= np.linalg.norm(pts - np.asarray(c), axis=-1) < r
        return out

    def weights(self) -> np.ndarray:
        return simpson_weights(self.n, self.spacing)


@dataclass
class Integral:
    value: np.ndarray
    box: np.ndarray
    tail: np.ndarray
    excluded_volume: float

    def scalar(self) -> float:
        return float(np.asarray(self.value).ravel()[0])


def integrate(grid: Grid3D, density: Callable[[np.ndarray], np.ndarray], *,
              tail: bool = True, threads: int = 1) -> Integral:
    """Simpson quadrature of ``density`` over the grid box plus an exterior tail.

    ``density(pts)`` returns ``(M,)`` or ``(M, K)`` values.  Masked points
    contribute zero.  The tail assumes ``|x - c|^-4`` decay along rays from
    the box centre, which turns the exterior integral into the surface
    integral of ``f (x - c).n``; it is exact for the abelian far
    fields of monopoles and of their tangent vectors.

    Slabs are reduced in order with compensated summation, so the result
    does not depend on ``threads``.
    """
    n = grid.n
    w = grid.weights()
    L = grid.half_width
    dv = grid.spacing**3

    def one(i):
        pts = grid.slab(i)
        masked = grid.mask(pts)
        vals = None
        keep = ~masked
        if np.any(keep):
            got = np.asarray(density(pts[keep]), dtype=float)
            vals = np.zeros((len(pts),) + got.shape[1:])
            vals[keep] = got
        else:
            # shape unknown until something is evaluated; probe one point
            got = np.asarray(density(pts[:1]), dtype=float)
            vals = np.zeros((len(pts),) + got.shape[1:])
        trailing = vals.shape[1:]
        v3 = vals.reshape((n, n) + trailing)
        w2 = np.outer(w, w).reshape((n, n) + (1,) * len(trailing))
        box = w[i] * np.sum(w2 * v3, axis=(0, 1))
        surf = np.zeros(trailing)
        if tail:
            fr = v3 * L
            if i in (0, n - 1):
                surf = surf + np.sum(w2 * fr, axis=(0, 1))
            wz = w.reshape((n,) + (1,) * len(trailing))
            for j in (0, n - 1):
                surf = surf + w[i] * np.sum(wz * fr[j], axis=0)
                surf = surf + w[i] * np.sum(wz * fr[:, j], axis=0)
        return box, surf, float(np.count_nonzero(masked)) * dv

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(n)))
    else:
        parts = [one(i) for i in range(n)]
    box = ordered_sum([p[0] for p in parts])
    surf = ordered_sum([p[1] for p in parts])
    excl = math.fsum(p[2] for p in parts)
    return Integral(box + surf, box, surf, excl)


# --- residual, energy, pairings ---------------------------------------------

@dataclass
class ResidualReport:
    norms: np.ndarray          # (n, n, n), zero at masked points
    masked: np.ndarray         # (n, n, n) bool
    max: float
    l2: float
    excluded_volume: float


def bogomolny_residual(F: MonopoleField, grid: Grid3D, h: Optional[float] = None) -> ResidualReport:
    n = grid.n
    norms = np.zeros((n, n, n))
    masked = np.zeros((n, n, n), dtype=bool)
    for i in range(n):
        pts = grid.slab(i)
        m = grid.mask(pts)
        if h is not None:
            # stencil neighbours must be unmasked too
            for c, rad in grid.excluded_balls:
                m |= np.linalg.norm(pts - np.asarray(c), axis=-1) < rad + h
        vals = np.zeros(len(pts))
        if np.any(~m):
            vals[~m] = residual_norm(F, pts[~m], h)
        norms[i] = vals.reshape(n, n)
        masked[i] = m.reshape(n, n)
    w = grid.weights()
    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
    l2 = math.sqrt(max(math.fsum((w3 * norms**2).ravel()), 0.0))
    return ResidualReport(norms, masked, float(norms.max()), l2,
                          float(masked.sum()) * grid.spacing**3)


@dataclass
class EnergyReport:
    value: float
    box: float
    tail: float
    tail_error: float
    excluded_volume: float


def abelian_tail(charge: float, half_width: float) -> float:
    """Energy of the abelian far field ``k^2 / (2 r^4)`` outside a cube."""
    return 0.5 * charge**2 * cube_exterior_r4() / half_width


def ymh_energy(F: MonopoleField, grid: Grid3D, h: Optional[float] = None,
               threads: int = 1) -> EnergyReport:
    """Yang-Mills-Higgs energy ``int |F_A|^2 + |nabla_A Phi|^2``.

    The box is integrated by Simpson's rule; the exterior by the surface
    extrapolation of :func:`integrate`.  The reported tail error is the
    difference between that tail and the closed-form abelian tail for the
    field's charge.
    """
    res = integrate(grid, lambda p: energy_density(F, p, h), threads=threads)
    tail = float(res.tail)
    model = abelian_tail(F.charge, grid.half_width)
    return EnergyReport(float(res.value), float(res.box), tail, abs(tail - model), res.excluded_volume)


def pair_density(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.einsum("pca,pca->p", U, V)


def l2_pair(u: TangentField, v: TangentField, grid: Grid3D, threads: int = 1) -> Integral:
    """``int <a, a'> + <phi, phi'>`` over R^3 (box plus extrapolated tail)."""
    return integrate(grid, lambda p: pair_density(u.evaluate(p), v.evaluate(p)), threads=threads)


def gram_matrix(fields: Sequence[TangentField], grid: Grid3D, threads: int = 1) -> Integral:
    """All pairwise L2 products in one pass over the grid."""
    k = len(fields)
    iu = np.triu_indices(k)

    def dens(p):
        vals = np.stack([f.evaluate(p) for f in fields], axis=1)  # (M, k, 4, 3)
        g = np.einsum("pica,pjca->pij", vals, vals)
        return g[:, iu[0], iu[1]]

    res = integrate(grid, dens, threads=threads)

    def full(x):
        m = np.zeros((k, k))
        m[iu] = x
        return m + np.triu(m, 1).T

    return Integral(full(res.value), full(res.box), full(res.tail), res.excluded_volume)


# --- gauge transformations ---------------------------------------------------

def gauge_transform(F: MonopoleField, g: Callable[[np.ndarray], np.ndarray],
                    dg: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                    h: float = 1e-5, name: str = "") -> MonopoleField:
    """Apply ``A -> g A g^-1 - (dg) g^-1``, ``Phi -> g Phi g^-1``.

    ``g(pts)`` returns unit quaternions ``(N, 4)``; ``dg(pts)`` returns
    ``(N, 3, 4)`` with ``dg[:, j] = d_j g``.  Without ``dg`` the derivative
    is taken by central differences with step ``h``.
    """
    def mc_form(p):
        q = g(p)
        if dg is not None:
            d = dg(p)
        else:
            d = np.stack([(g(p + h * e) - g(p - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
        right = su2.qmul(d, su2.qconj(q)[:, None, :])
        return q, right[..., 1:]

    def ev(p):
        A, Phi = F.evaluator(p)
        q, w = mc_form(p)
        A2 = su2.adjoint(q[:, None, :], A) - w
        return A2, su2.adjoint(q, Phi)

    return MonopoleField(ev, F.mass, F.charge, F.center, None,
                         F.complex_safe and dg is not None, F.eval_mode,
                         name or f"g.{F.name}")


def constant_gauge(q0) -> tuple:
    """``(g, dg)`` pair for a constant gauge transformation."""
    q0 = np.asarray(q0, dtype=float)

    def g(p):
        return np.broadcast_to(q0, (len(p), 4)).astype(np.result_type(p, float))

    def dg(p):
        return np.zeros((len(p), 3, 4), dtype=np.result_type(p, float))

    return g, dg


# --- sampled fields ----------------------------------------------------------

def sample(F: MonopoleField, grid: Grid3D):
    """Evaluate ``(A, Phi)`` on all grid nodes; arrays shaped ``(n, n, n, ...)``."""
    n = grid.n
    A = np.empty((n, n, n, 3, 3))
    Phi = np.empty((n, n, n, 3))
    for i in range(n):
        a, ph = F.evaluate(grid.slab(i))
        A[i] = np.real(a).reshape(n, n, 3, 3)
        Phi[i] = np.real(ph).reshape(n, n, 3)
    return A, Phi


def sampled_field(grid: Grid3D, A: np.ndarray, Phi: np.ndarray, *, mass: float = 1.0,
                  charge: int = 1, method: str = "cubic", name: str = "sampled") -> MonopoleField:
    """A field interpolated from grid samples; derivatives need a finite step."""
    from scipy.interpolate import RegularGridInterpolator

    axes = tuple(grid.axis(k) for k in range(3))
    n = grid.n
    stacked = np.concatenate([A.reshape(n, n, n, 9), Phi.reshape(n, n, n, 3)], axis=-1)
    interp = RegularGridInterpolator(axes, stacked, method=method)

    def ev(p):
        v = interp(np.real(p))
        return v[:, :9].reshape(-1, 3, 3), v[:, 9:]

    return MonopoleField(ev, mass, charge, grid.center, None, False, "sampled", name)
