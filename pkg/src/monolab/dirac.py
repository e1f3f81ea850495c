"""Abelian multi-pole Dirac monopoles embedded along ``e_3`` in su(2).

Higgs:      psi = m - kappa * sum_j k_j / |z - z_j|
Potential:  one Wu-Yang patch per pole; a ``north`` string runs along
            ``z_j - t e_3`` and a ``south`` string along ``z_j + t e_3``.

The abelian Bogomolny equation ``curl a = grad psi`` holds off poles and
strings, and with ``kappa = 1/2`` the flux ``(1/2 pi) int curl a . dS``
through a sphere is the enclosed charge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bps import KAPPA
from .errors import AtPole, NonclosedDifference, OnString, SphereHitsPole
from .fields import MonopoleField, complex_step
from .quad import gauss_legendre, sphere_rule

POLE_TOL = 1e-12
STRING_TOL = 1e-9


def _string_choice(poles, j):
    """The string direction of pole ``j`` that stays farthest from the other poles."""
    zj = np.asarray(poles[j][0], dtype=float)
    best, best_gap = "north", -1.0
    for name, sign in (("north", -1.0), ("south", 1.0)):
        gap = math.inf
        for i, (zi, _) in enumerate(poles):
            if i == j:
                continue
            d = np.asarray(zi, dtype=float) - zj
            t = sign * d[2]
            # distance from pole i to the ray zj + sign * s e_3, s >= 0
            gap = min(gap, float(np.hypot(d[0], d[1])) if t > 0 else float(np.linalg.norm(d)))
        if gap > best_gap:
            best, best_gap = name, gap
    return best


@dataclass(frozen=True)
class DiracSpec:
    poles: tuple
    mass: float = 1.0
    strings: tuple = ()
    kappa: float = KAPPA

    def __post_init__(self):
        poles = tuple((tuple(float(x) for x in z), int(k)) for z, k in self.poles)
        if not poles:
            raise ValueError("a Dirac monopole needs at least one pole")
        for z, k in poles:
            if k == 0:
                raise ValueError("pole charges must be nonzero")
        for i in range(len(poles)):
            for j in range(i):
                if np.allclose(poles[i][0], poles[j][0], atol=POLE_TOL, rtol=0):
                    raise ValueError(f"poles {j} and {i} coincide")
        strings = tuple(self.strings) or ("auto",) * len(poles)
        if len(strings) != len(poles):
            raise ValueError("one string choice per pole")
        strings = tuple(_string_choice(poles, j) if s == "auto" else s for j, s in enumerate(strings))
        for s in strings:
            if s not in ("north", "south"):
                raise ValueError(f"unknown string choice {s!r}")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "strings", strings)

    @property
    def total_charge(self) -> int:
        return sum(k for _, k in self.poles)

    @classmethod
    def from_mapping(cls, doc: dict) -> "DiracSpec":
        poles = [((p[0], p[1], p[2]), p[3]) for p in doc["poles"]]
        return cls(tuple(poles), float(doc.get("mass", 1.0)), tuple(doc.get("strings", ())),
                   float(doc.get("kappa", KAPPA)))


def _offsets(spec: DiracSpec, pts):
    pts = np.atleast_2d(pts)
    out = []
    for (z, k), s in zip(spec.poles, spec.strings):
        d = pts - np.asarray(z)
        r = np.sqrt(np.einsum("pi,pi->p", d, d))
        if np.any(np.abs(r) < POLE_TOL):
            raise AtPole(f"point coincides with pole at {z}")
        out.append((d, r, k, s))
    return out


def one_pole_potential(d, r, k: float, string: str, kappa: float = KAPPA):
    """``e_3`` component of the Wu-Yang potential of one pole, ``d = z - z_j``."""
    sign = 1.0 if string == "north" else -1.0
    den = r * (r + sign * d[:, 2])
    rho = np.sqrt(np.real(d[:, 0]) ** 2 + np.real(d[:, 1]) ** 2)
    on = (rho < STRING_TOL * np.maximum(1.0, np.real(r))) & (sign * np.real(d[:, 2]) < 0)
    if np.any(on):
        raise OnString(f"point on the {string} string")
    coef = sign * kappa * k / den
    zero = np.zeros_like(d[:, 0])
    return coef[:, None] * np.stack([-d[:, 1], d[:, 0], zero], axis=-1)


def higgs_scalar(spec: DiracSpec, pts):
    psi = spec.mass
    for d, r, k, _ in _offsets(spec, pts):
        psi = psi - spec.kappa * k / r
    return psi


def higgs(spec: DiracSpec, pts):
    """Higgs field ``(N, 3)``, along ``e_3``."""
    psi = higgs_scalar(spec, pts)
    out = np.zeros(np.shape(psi) + (3,), dtype=np.result_type(psi, float))
    out[..., 2] = psi
    return out


def analytic_potential(spec: DiracSpec, pts):
    """Potential ``(N, 3, 3)`` (direction, su(2) component), diagonal along ``e_3``."""
    pts = np.atleast_2d(pts)
    a = 0
    for d, r, k, s in _offsets(spec, pts):
        a = a + one_pole_potential(d, r, k, s, spec.kappa)
    A = np.zeros(pts.shape + (3,), dtype=np.result_type(pts, float))
    A[..., 2] = a
    return A


def analytic_curvature(spec: DiracSpec, pts):
    """``*F`` as ``(N, 3, 3)``; equals ``grad psi`` along ``e_3``."""
    pts = np.atleast_2d(pts)
    B = 0
    for d, r, k, _ in _offsets(spec, pts):
        B = B + spec.kappa * k * d / (r**3)[:, None]
    out = np.zeros(pts.shape + (3,), dtype=np.result_type(pts, float))
    out[..., 2] = B
    return out


def dirac_field(spec: DiracSpec) -> MonopoleField:
    return MonopoleField(lambda p: (analytic_potential(spec, p), higgs(spec, p)), spec.mass,
                         spec.total_charge, (0.0, 0.0, 0.0), None, True, "analytic", "dirac")


def laplacian7(spec: DiracSpec, pts, h: float):
    """Seven-point Laplacian of the Higgs scalar."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    centre = higgs_scalar(spec, pts)
    total = -6.0 * centre
    for e in np.eye(3):
        total = total + higgs_scalar(spec, pts + h * e) + higgs_scalar(spec, pts - h * e)
    return total / h**2


@dataclass(frozen=True)
class FluxResult:
    value: float
    error: float


def _sphere_flux(spec, center, radius, n_quad):
    dirs, w = sphere_rule(n_quad, 2 * n_quad)
    pts = np.asarray(center, dtype=float) + radius * dirs
    B = analytic_curvature(spec, pts)[..., 2]
    return float(math.fsum(w * np.einsum("pi,pi->p", B, dirs))) * radius**2 / (2 * np.pi)


def flux(spec: DiracSpec, center, radius: float, n_quad: int = 64) -> FluxResult:
    """``(1/2 pi) * outward flux of *F`` through a round sphere.

    The error estimate compares against the rule with half the nodes.
    """
    c = np.asarray(center, dtype=float)
    for z, _ in spec.poles:
        gap = abs(float(np.linalg.norm(np.asarray(z) - c)) - radius)
        if gap < 1e-9 * max(1.0, radius):
            raise SphereHitsPole(f"sphere passes through pole at {z}")
    fine = _sphere_flux(spec, c, radius, n_quad)
    coarse = _sphere_flux(spec, c, radius, max(4, n_quad // 2))
    return FluxResult(fine, abs(fine - coarse))


# --- framing phases ----------------------------------------------------------

@dataclass(frozen=True)
class DiracConnection:
    """A Dirac potential shifted by the exact form ``d mu`` (``mu`` optional)."""

    spec: DiracSpec
    mu: Optional[Callable[[np.ndarray], np.ndarray]] = None
    extra: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def potential(self, pts):
        """``e_3`` component ``(N, 3)`` of the potential."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = analytic_potential(self.spec, pts)[..., 2]
        if self.mu is not None:
            _, (dmu,) = complex_step(lambda p: (self.mu(p),), pts)
            a = a + dmu
        if self.extra is not None:
            a = a + self.extra(pts)
        return a


def _curl(fn, pts, h=1e-4):
    d = np.empty((len(pts), 3, 3))
    for j, e in enumerate(np.eye(3)):
        d[:, j] = (fn(pts + h * e) - fn(pts - h * e)) / (2 * h)
    return np.stack([d[:, 1, 2] - d[:, 2, 1], d[:, 2, 0] - d[:, 0, 2], d[:, 0, 1] - d[:, 1, 0]], axis=-1)


def framing_phase_compare(a: DiracConnection, b: DiracConnection, start, end,
                          segments: int = 256, curl_tol: float = 1e-6) -> float:
    """Relative U(1) phase of two connections between two boundary points.

    The difference ``b - a`` must be closed; its line integral from ``start``
    (e.g. on the sphere at infinity) to ``end`` (on a small sphere around a
    pole) is the phase, reduced to ``(-pi, pi]``.  Two-point Gauss-Legendre
    on each of ``segments`` pieces.
    """
    if a.spec != b.spec:
        raise ValueError("connections must share the pole data")
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    t, w = gauss_legendre(0.0, 1.0, 2)
    edges = np.linspace(0.0, 1.0, segments + 1)
    s = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * t[None, :]).ravel()
    ws = ((edges[1:] - edges[:-1])[:, None] * w[None, :]).ravel()
    pts = p0 + s[:, None] * (p1 - p0)

    def diff(p):
        return b.potential(p) - a.potential(p)

    probe = pts[:: max(1, len(pts) // 32)]
    worst = float(np.max(np.linalg.norm(_curl(diff, probe), axis=-1)))
    if worst > curl_tol:
        raise NonclosedDifference(f"curl of the difference is {worst:.3g} along the path")
    val = math.fsum(ws * np.einsum("pi,i->p", diff(pts), p1 - p0))
    return float(math.remainder(val, 2 * math.pi))


def pole_fluxes(spec: DiracSpec, radius: Optional[float] = None, n_quad: int = 64) -> list[tuple]:
    """Flux through a small sphere around each pole and through a large one."""
    zs = [np.asarray(z) for z, _ in spec.poles]
    if radius is None:
        if len(zs) > 1:
            dmin = min(np.linalg.norm(zs[i] - zs[j]) for i in range(len(zs)) for j in range(i))
            radius = 0.25 * float(dmin)
        else:
            radius = 0.5
    rows = []
    for j, z in enumerate(zs):
        res = flux(spec, z, radius, n_quad)
        rows.append((f"pole{j}", *z, radius, spec.poles[j][1], res.value, res.error))
    c = np.mean(zs, axis=0)
    big = 4.0 * (max(float(np.linalg.norm(z - c)) for z in zs) + 1.0)
    res = flux(spec, c, big, n_quad)
    rows.append(("infinity", *c, big, spec.total_charge, res.value, res.error))
    return rows


def superpose_check(spec: DiracSpec, pts) -> float:
    """``higgs(all poles) - [sum of one-pole higgs - (N - 1) m]``; zero by linearity."""
    total = higgs_scalar(spec, pts)
    parts = sum(higgs_scalar(DiracSpec((p,), spec.mass, (s,), spec.kappa), pts)
                for p, s in zip(spec.poles, spec.strings))
    return float(np.max(np.abs(total - (parts - (len(spec.poles) - 1) * spec.mass))))

