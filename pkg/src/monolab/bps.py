"""The charge-one BPS monopole, its symmetries, and its abelian gauges.

In the basis of :mod:`monolab.su2` the solution of ``*F = nabla Phi`` is the
inward hedgehog

    Phi = -H(r) x_hat,          H = m coth(2 m r) - 1/(2r),
    A_i^a = eps_aij x_hat_j (1 - K(r)) / (2r),   K = 2 m r / sinh(2 m r),

so ``|Phi| = m - 1/(2r) + O(e^{-2mr})``.  The profiles are evaluated through
``x = 2 m r`` and the smooth functions

    g(x) = coth(x)/x - 1/x^2,      q(x) = (1 - x/sinh x)/x^2,

with Taylor series near the origin.  Everything here accepts complex points.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import su2
from .errors import FitIllConditioned, SmallHiggs
from .fields import MonopoleField, field_derivatives, gauge_transform
from .quad import fibonacci_sphere

# far-field coefficient of |Phi|: m - KAPPA * k / r
KAPPA = 0.5

_SERIES_CUT = 0.1
_EPS3 = np.zeros((3, 3, 3))
for _a, _i, _j in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS3[_a, _i, _j] = 1.0
    _EPS3[_a, _j, _i] = -1.0


def _coth_csch(x):
    e = np.exp(-2.0 * x)
    den = 1.0 - e
    return (1.0 + e) / den, 2.0 * np.exp(-x) / den


def _where_small(x):
    return np.abs(np.real(x)) < _SERIES_CUT


def _safe(x):
    return np.where(_where_small(x), 1.0, x)


def profile_g(x):
    small = _where_small(x)
    xs = _safe(x)
    coth, _ = _coth_csch(xs)
    big = coth / xs - 1.0 / xs**2
    x2 = x * x
    ser = 1 / 3 - x2 / 45 + 2 * x2**2 / 945 - x2**3 / 4725 + 2 * x2**4 / 93555
    return np.where(small, ser, big)


def profile_dg(x):
    small = _where_small(x)
    xs = _safe(x)
    coth, csch = _coth_csch(xs)
    big = -csch**2 / xs - coth / xs**2 + 2.0 / xs**3
    x2 = x * x
    ser = x * (-2 / 45 + 8 * x2 / 945 - 6 * x2**2 / 4725 + 16 * x2**3 / 93555)
    return np.where(small, ser, big)


def profile_q(x):
    small = _where_small(x)
    xs = _safe(x)
    _, csch = _coth_csch(xs)
    big = 1.0 / xs**2 - csch / xs
    x2 = x * x
    ser = 1 / 6 - 7 * x2 / 360 + 31 * x2**2 / 15120 - 127 * x2**3 / 604800 + 73 * x2**4 / 3421440
    return np.where(small, ser, big)


def profile_dq(x):
    small = _where_small(x)
    xs = _safe(x)
    coth, csch = _coth_csch(xs)
    big = -2.0 / xs**3 + csch * coth / xs + csch / xs**2
    x2 = x * x
    ser = x * (-14 / 360 + 124 * x2 / 15120 - 762 * x2**2 / 604800 + 584 * x2**3 / 3421440)
    return np.where(small, ser, big)


@dataclass(frozen=True)
class BpsProfile:
    """Radial profiles ``H`` (Higgs) and ``K`` (gauge) of the charge-one solution."""

    mass: float = 1.0

    def H(self, r):
        r = np.asarray(r, dtype=float)
        x = 2 * self.mass * r
        return r * 2 * self.mass**2 * profile_g(x)

    def K(self, r):
        r = np.asarray(r, dtype=float)
        x = 2 * self.mass * r
        return 1.0 - 2 * r**2 * 2 * self.mass**2 * profile_q(x)

    def radial(self, r):
        """``(f, fp, w, wp)``: ``Phi = -f z``, ``A_i^a = eps_aij z_j w``, with ``fp = f'/r``, ``wp = w'/r``."""
        m = self.mass
        x = 2 * m * r
        safe = np.where(np.abs(np.real(x)) < 1e-300, 1.0, x)
        f = 2 * m**2 * profile_g(x)
        w = 2 * m**2 * profile_q(x)
        # g'(x)/x and q'(x)/x stay finite at the origin
        small = _where_small(x)
        gx = np.where(small, -2 / 45 + 8 * x**2 / 945 - 6 * x**4 / 4725 + 16 * x**6 / 93555,
                      profile_dg(x) / safe)
        qx = np.where(small, -14 / 360 + 124 * x**2 / 15120 - 762 * x**4 / 604800 + 584 * x**6 / 3421440,
                      profile_dq(x) / safe)
        return f, 8 * m**4 * gx, w, 8 * m**4 * qx


def _hedgehog(profile: BpsProfile, center, with_jacobian: bool):
    c = np.asarray(center, dtype=float)

    def evaluate(pts):
        z = pts - c
        r = np.sqrt(np.einsum("pi,pi->p", z, z))
        f, fp, w, wp = profile.radial(r)
        Phi = -f[:, None] * z
        A = w[:, None, None] * np.einsum("aij,pj->pia", _EPS3, z)
        if not with_jacobian:
            return A, Phi
        eye = np.eye(3)
        dPhi = -(f[:, None, None] * eye + fp[:, None, None] * z[:, :, None] * z[:, None, :])
        # dA[p, k, i, a] = eps_aik w + eps_aij z_j wp z_k
        dA = w[:, None, None, None] * np.einsum("aik->kia", _EPS3)[None]
        dA = dA + wp[:, None, None, None] * np.einsum("aij,pj,pk->pkia", _EPS3, z, z)
        return A, Phi, dA, dPhi

    return evaluate


def bps_field(center=(0.0, 0.0, 0.0), mass: float = 1.0, phase: float = 0.0) -> MonopoleField:
    """Charge-one BPS monopole of the given mass centred at ``center``.

    A nonzero ``phase`` acts by the gauge transformation ``exp(phase * Phi)``.
    """
    if mass <= 0:
        raise ValueError("mass must be positive")
    prof = BpsProfile(mass)
    ev = _hedgehog(prof, center, False)
    jac = _hedgehog(prof, center, True)
    F = MonopoleField(ev, mass, 1, tuple(float(c) for c in center), jac, True, "analytic", "bps")
    if phase == 0.0:
        return F
    g, dg = phase_gauge(F, phase)
    out = gauge_transform(F, g, dg, name="bps")
    return replace(out, meta={"phase": phase})


def phase_gauge(F: MonopoleField, t: float):
    """``(g, dg)`` for ``g = exp(t Phi)``; needs a field with a closed-form jacobian."""
    if F.jacobian is None:
        raise ValueError("phase gauge needs analytic derivatives of Phi")

    def parts(p):
        _, Phi, _, dPhi = F.jacobian(p)
        size = su2.norm(Phi)
        n = Phi / size[:, None]
        theta = t * size
        return n, size, theta, dPhi

    def g(p):
        n, _, theta, _ = parts(p)
        return np.concatenate([np.cos(theta)[:, None], np.sin(theta)[:, None] * n], axis=-1)

    def dg(p):
        n, size, theta, dPhi = parts(p)
        ndot = np.einsum("pa,pja->pj", n, dPhi)
        dtheta = t * ndot
        dn = (dPhi - ndot[:, :, None] * n[:, None, :]) / size[:, None, None]
        s, c = np.sin(theta)[:, None], np.cos(theta)[:, None]
        d0 = -s * dtheta
        dv = (c * dtheta)[:, :, None] * n[:, None, :] + s[:, :, None] * dn
        return np.concatenate([d0[:, :, None], dv], axis=-1)

    return g, dg


def translate(F: MonopoleField, c) -> MonopoleField:
    """Pull a field back along ``z -> z - c``."""
    c = np.asarray(c, dtype=float)
    jac = None if F.jacobian is None else (lambda p: F.jacobian(p - c))
    center = tuple(float(x) for x in np.asarray(F.center) + c)
    return replace(F, evaluator=lambda p: F.evaluator(p - c), jacobian=jac, center=center)


def rescale(F: MonopoleField, s: float) -> MonopoleField:
    """``(A, Phi)(z) -> s (A, Phi)(s z)``: a monopole of mass ``s m`` (centre scales by ``1/s``)."""
    def ev(p):
        A, Phi = F.evaluator(s * p)
        return s * A, s * Phi

    return replace(F, evaluator=ev, jacobian=None, mass=F.mass * s,
                   center=tuple(x / s for x in F.center))


# --- abelian gauge -----------------------------------------------------------

def _rotate_to_e3(n, dn, through_south: bool):
    """Unit quaternion taking ``n`` to ``e_3`` and its derivatives.

    The direct rotation is singular at ``n = -e_3``; the detour through
    ``-e_3`` followed by a half turn about ``e_1`` is singular at ``n = e_3``.
    """
    n1, n2, n3 = n[:, 0], n[:, 1], n[:, 2]
    d1, d2, d3 = dn[..., 0], dn[..., 1], dn[..., 2]
    if not through_south:
        c = 1.0 + n3
        raw = np.stack([c, n2, -n1, np.zeros_like(c)], axis=-1)
        draw = np.stack([d3, d2, -d1, np.zeros_like(d3)], axis=-1)
    else:
        c = 1.0 - n3
        # q1 = (1 - n3, -n2, n1, 0)/N, then q = e_1 q1
        raw1 = np.stack([c, -n2, n1, np.zeros_like(c)], axis=-1)
        draw1 = np.stack([-d3, -d2, d1, np.zeros_like(d3)], axis=-1)
        e1 = np.array([0.0, 1.0, 0.0, 0.0])
        raw = su2.qmul(np.broadcast_to(e1, raw1.shape), raw1)
        draw = su2.qmul(np.broadcast_to(e1, draw1.shape), draw1)
    norm = np.sqrt(2.0 * c)
    q = raw / norm[:, None]
    # d(1/N) = -dc / (2 c N)
    dc = d3 if not through_south else -d3
    dq = draw / norm[:, None, None] - q[:, None, :] * (dc / (2.0 * c[:, None]))[:, :, None]
    return q, dq


def _higgs_with_derivative(F: MonopoleField, p, h=1e-6):
    if F.jacobian is not None:
        _, Phi, _, dPhi = F.jacobian(p)
        return Phi, dPhi
    _, Phi, _, dPhi = field_derivatives(F, np.real(p), h=h)
    return Phi, dPhi


def abelianize(F: MonopoleField, patch: str = "north", r_min: float = 1.0,
               n_check: int = 200) -> MonopoleField:
    """Gauge representative with ``Phi`` along ``+e_3`` away from one string ray.

    ``north`` excludes the ray ``center - t e_3``; ``south`` excludes
    ``center + t e_3``.  The rotation path is picked so that its singular
    direction is the Higgs direction on the excluded ray.

    Raises :class:`SmallHiggs` if ``|Phi| < m/2`` on the sphere of radius
    ``r_min`` about the centre.
    """
    if patch not in ("north", "south"):
        raise ValueError("patch must be 'north' or 'south'")
    c = np.asarray(F.center, dtype=float)
    shell = c + r_min * fibonacci_sphere(n_check)
    size = su2.norm(F.Phi(shell))
    if np.min(size) < 0.5 * F.mass:
        raise SmallHiggs(f"|Phi| = {np.min(size):.3g} < m/2 on the shell r = {r_min:g}")
    ray = np.array([[0.0, 0.0, -1.0 if patch == "north" else 1.0]])
    probe = F.Phi(c + max(r_min, 1.0) * 4.0 * ray)[0]
    through_south = bool(np.real(probe[2]) > 0)

    def gauge(p):
        Phi, dPhi = _higgs_with_derivative(F, p)
        s = su2.norm(Phi)
        n = Phi / s[:, None]
        ndot = np.einsum("pa,pja->pj", n, dPhi)
        dn = (dPhi - ndot[:, :, None] * n[:, None, :]) / s[:, None, None]
        return _rotate_to_e3(n, dn, through_south)

    out = gauge_transform(F, lambda p: gauge(p)[0], lambda p: gauge(p)[1], name=f"{F.name}.{patch}")
    return replace(out, complex_safe=F.jacobian is not None,
                   meta={"patch": patch, "through_south": through_south, "r_min": r_min})


def offdiagonal_profile(F: MonopoleField, radii: Sequence[float], n_dirs: int = 400,
                        exclude_cone: float = 0.3) -> np.ndarray:
    """Largest ``e_1, e_2`` components of ``A`` and ``Phi`` on shells.

    Directions within ``exclude_cone`` (radians) of the z-axis are skipped, so
    both patches can be probed with the same call.
    """
    c = np.asarray(F.center, dtype=float)
    dirs = fibonacci_sphere(n_dirs)
    keep = np.abs(dirs[:, 2]) < np.cos(exclude_cone)
    out = []
    for r in radii:
        A, Phi = F.evaluate(c + r * dirs[keep])
        out.append(max(np.max(np.abs(A[..., :2])), np.max(np.abs(Phi[..., :2]))))
    return np.asarray(out)


def transition_winding(north: MonopoleField, south: MonopoleField, radius: float = 5.0,
                       n: int = 512) -> float:
    """Winding of the transition ``g_N g_S^-1`` around the equator of a sphere.

    Both fields must come from :func:`abelianize` of the same configuration.
    The transition fixes ``e_3``, so it is ``exp(alpha e_3)`` and the winding
    is the total change of ``alpha`` over ``2 pi``.
    """
    c = np.asarray(north.center, dtype=float)
    phi = np.linspace(0.0, 2 * np.pi, n + 1)
    pts = c + radius * np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    # recover the transition from Phi-preserving data: compare A_N and A_S
    # through a_N - a_S = d alpha along the loop
    AN = north.A(pts)
    AS = south.A(pts)
    tangent = radius * np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    diff = np.einsum("pi,pi->p", AN[..., 2] - AS[..., 2], tangent)
    # trapezoid on the periodic loop
    total = np.sum(diff[:-1]) * (2 * np.pi / n)
    # A' = A - d alpha e_3 for g = exp(alpha e_3), so alpha_S - alpha_N = total
    return float(-total / (2 * np.pi))


# --- centre ------------------------------------------------------------------

def _multipole_basis(dirs, r, lmax):
    """Real solid-harmonic-like basis ``Y(dirs) / r^(l+1)`` built from monomials."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cols = [np.ones_like(x), 1.0 / r, x / r**2, y / r**2, z / r**2]
    if lmax >= 2:
        for m in (x * y, x * z, y * z, x * x - y * y, 3 * z * z - 1):
            cols.append(m / r**3)
    if lmax >= 3:
        for m in (x * (x * x - 3 * y * y), y * (3 * x * x - y * y), z * (x * x - y * y), x * y * z,
                  x * (5 * z * z - 1), y * (5 * z * z - 1), z * (5 * z * z - 3)):
            cols.append(m / r**4)
    if lmax >= 4:
        for m in (x * y * (x * x - y * y), (x * x - y * y) ** 2 - 4 * x * x * y * y,
                  y * z * (3 * x * x - y * y), x * z * (x * x - 3 * y * y),
                  x * y * (7 * z * z - 1), (x * x - y * y) * (7 * z * z - 1),
                  y * z * (7 * z * z - 3), x * z * (7 * z * z - 3),
                  35 * z**4 - 30 * z * z + 3):
            cols.append(m / r**5)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class CentreFit:
    centre: np.ndarray
    mass: float
    charge: float
    residual: float
    condition: float


def centre_of(F: MonopoleField, shells: Sequence[float] | None = None, origin=(0.0, 0.0, 0.0),
              n_dirs: int = 400, lmax: int = 4, cond_max: float = 1e10) -> CentreFit:
    """Fit ``|Phi| = m - k/(2r) - (k/2) v.z_hat / r^2 + ...`` on shells around ``origin``.

    Returns the dipole vector ``v``, which equals the position of a single
    monopole, together with the fitted mass and charge.
    """
    if shells is None:
        shells = [12.0 / F.mass, 16.0 / F.mass, 20.0 / F.mass]
    shells = list(shells)
    o = np.asarray(origin, dtype=float)
    dirs = fibonacci_sphere(n_dirs)
    rows, vals = [], []
    for r in shells:
        rows.append(_multipole_basis(dirs, np.full(n_dirs, r), lmax))
        vals.append(su2.norm(F.Phi(o + r * dirs)))
    M = np.concatenate(rows)
    y = np.concatenate(vals)
    if M.shape[0] <= M.shape[1] or len(shells) < 2:
        raise FitIllConditioned("not enough shell samples for the multipole fit")
    # columns have very different scales; normalise before judging conditioning
    scale = np.linalg.norm(M, axis=0)
    Ms = M / scale
    cond = float(np.linalg.cond(Ms))
    if not np.isfinite(cond) or cond > cond_max:
        raise FitIllConditioned(f"shell design matrix condition number {cond:.3g}")
    coef, *_ = np.linalg.lstsq(Ms, y, rcond=None)
    coef = coef / scale
    fit_res = float(np.sqrt(np.mean((M @ coef - y) ** 2)))
    k = -coef[1] / KAPPA
    v = -coef[2:5] / (KAPPA * k)
    return CentreFit(o + v, float(coef[0]), float(k), fit_res, cond)
