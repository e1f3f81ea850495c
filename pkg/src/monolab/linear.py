"""The linearised Bogomolny operator with Coulomb gauge fixing.

A deformation is stored as ``(N, 4, ...)`` with slots ``(phi, a_1, a_2, a_3)``.
At a background ``(A, Phi)``

    L(a, phi)  = (curl_A a - nabla_A phi + [Phi, a],  div_A a + [Phi, phi])
    L*(a, phi) = (curl_A a - nabla_A phi - [Phi, a],  div_A a - [Phi, phi])

and with ``A = 0, Phi = 0`` both reduce to the flat model ``(curl a - grad phi,
div a)``, whose square is minus the componentwise Laplacian.  Outputs use
the same slot order as inputs.

Reading the four slots as a quaternion ``phi + a_1 i + a_2 j + a_3 k`` gives
the quaternionic structure: left multiplication by ``i, j, k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import su2
from .errors import ResidualTooLarge
from .fields import (
    Grid3D,
    MonopoleField,
    TangentField,
    complex_step,
    covariant_from,
    curvature_from,
    field_derivatives,
    integrate,
    residual_norm,
    tangent_derivatives,
)


def _derivs(u: Callable, pts, h: Optional[float]):
    """Values and derivatives ``du[p, j, slot, ...]`` of an array-valued field."""
    pts = np.asarray(pts, dtype=float)
    fn = lambda p: (u(p),)  # noqa: E731
    if h is None:
        (v,), (dv,) = complex_step(fn, pts)
    else:
        v = u(pts)
        dv = np.empty((len(pts), 3) + v.shape[1:])
        for j, e in enumerate(np.eye(3)):
            dv[:, j] = (u(pts + h * e) - u(pts - h * e)) / (2 * h)
    return v, dv


def _flat_apply(dv):
    """Model operator from derivatives ``dv[p, j, slot, ...]``."""
    da = dv[:, :, 1:]  # [p, j, i, ...] = d_j a_i
    curl = np.stack(
        [da[:, 1, 2] - da[:, 2, 1], da[:, 2, 0] - da[:, 0, 2], da[:, 0, 1] - da[:, 1, 0]], axis=1
    )
    grad = dv[:, :, 0]
    div = da[:, 0, 0] + da[:, 1, 1] + da[:, 2, 2]
    return np.concatenate([div[:, None], curl - grad], axis=1)


def model_L(u: Callable, pts, h: Optional[float] = None) -> np.ndarray:
    """Flat operator on a field ``u(pts) -> (N, 4, ...)``.

    ``h=None`` differentiates by complex step (``u`` must accept complex
    points); otherwise second-order central differences.
    """
    _, dv = _derivs(u, pts, h)
    return _flat_apply(dv)


def _coupled(bg: MonopoleField, u: Callable, pts, h: Optional[float], sign: float):
    pts = np.asarray(pts, dtype=float)
    v, dv = _derivs(u, pts, h)
    A, Phi, _, _ = field_derivatives(bg, pts, None if h is None else h)
    # covariant derivative of every slot: d_j u + [A_j, u]
    cov = dv + su2.bracket(A[:, :, None, :], v[:, None, :, :])
    out = _flat_apply(cov)
    return out + sign * su2.bracket(Phi[:, None, :], v)


def coupled_L(bg: MonopoleField, u: TangentField | Callable, pts, h: Optional[float] = None):
    fn = u.evaluate if isinstance(u, TangentField) else u
    return _coupled(bg, fn, pts, h, 1.0)


def coupled_L_adjoint(bg: MonopoleField, u: TangentField | Callable, pts, h: Optional[float] = None):
    fn = u.evaluate if isinstance(u, TangentField) else u
    return _coupled(bg, fn, pts, h, -1.0)


@dataclass(frozen=True)
class PlaneWaves:
    """A smooth four-field, each slot a sum of sines, with a closed-form Laplacian."""

    amps: np.ndarray     # (4, M)
    waves: np.ndarray    # (4, M, 3)
    shifts: np.ndarray   # (4, M)

    def __call__(self, pts):
        arg = np.einsum("smi,pi->psm", self.waves, pts) + self.shifts[None]
        return np.einsum("sm,psm->ps", self.amps, np.sin(arg))

    def minus_laplacian(self, pts):
        arg = np.einsum("smi,pi->psm", self.waves, pts) + self.shifts[None]
        k2 = np.einsum("smi,smi->sm", self.waves, self.waves)
        return np.einsum("sm,psm->ps", self.amps * k2, np.sin(arg))


def random_plane_waves(rng: np.random.Generator, n_waves: int = 3) -> PlaneWaves:
    return PlaneWaves(rng.normal(size=(4, n_waves)), rng.normal(size=(4, n_waves, 3)),
                      rng.uniform(0, 2 * np.pi, size=(4, n_waves)))


def square_errors(u: PlaneWaves, pts, hs: Sequence[float]) -> list[float]:
    """``max |L_h L_h u + nabla^2 u|`` for each step, both factors by central differences."""
    out = []
    for h in hs:
        lu = lambda p, h=h: model_L(u, p, h)  # noqa: E731
        out.append(float(np.max(np.abs(model_L(lu, pts, h) - u.minus_laplacian(pts)))))
    return out


# --- homogeneous solutions ---------------------------------------------------

def f0(pts):
    """``(0, z / |z|^3)``."""
    r = np.sqrt(np.einsum("pi,pi->p", pts, pts))
    out = np.zeros((len(pts), 4), dtype=np.result_type(pts, float))
    out[:, 1:] = pts / (r**3)[:, None]
    return out


def fc(c) -> Callable:
    """``(<c, z>/|z|^3, -(c x z)/|z|^3)``."""
    c = np.asarray(c, dtype=float)

    def u(pts):
        r3 = np.sqrt(np.einsum("pi,pi->p", pts, pts)) ** 3
        out = np.zeros((len(pts), 4), dtype=np.result_type(pts, float))
        out[:, 0] = pts @ c / r3
        out[:, 1:] = -np.cross(np.broadcast_to(c, pts.shape), pts) / r3[:, None]
        return out

    return u


# real harmonic polynomials as {(i, j, k): coefficient} for x^i y^j z^k
_SEEDS = {
    0: [{(0, 0, 0): 1.0}],
    1: [{(1, 0, 0): 1.0}, {(0, 1, 0): 1.0}, {(0, 0, 1): 1.0}],
    2: [
        {(1, 1, 0): 1.0},
        {(0, 1, 1): 1.0},
        {(1, 0, 1): 1.0},
        {(2, 0, 0): 1.0, (0, 2, 0): -1.0},
        {(0, 0, 2): 2.0, (2, 0, 0): -1.0, (0, 2, 0): -1.0},
    ],
    3: [
        {(1, 1, 1): 1.0},
        {(3, 0, 0): 1.0, (1, 2, 0): -3.0},
        {(2, 1, 0): 3.0, (0, 3, 0): -1.0},
        {(2, 0, 1): 1.0, (0, 2, 1): -1.0},
        {(1, 0, 2): 4.0, (3, 0, 0): -1.0, (1, 2, 0): -1.0},
        {(0, 1, 2): 4.0, (2, 1, 0): -1.0, (0, 3, 0): -1.0},
        {(0, 0, 3): 2.0, (2, 0, 1): -3.0, (0, 2, 1): -3.0},
    ],
}


def harmonic_seeds(degree: int) -> list[dict]:
    """Basis of real harmonic polynomials of a given degree (0 to 3)."""
    return _SEEDS[degree]


def poly_eval(poly: dict, pts):
    """Value ``(N,)`` and gradient ``(N, 3)`` of a monomial dictionary."""
    val = 0.0
    grad = [0.0, 0.0, 0.0]
    for powers, c in poly.items():
        mono = c
        for ax, e in enumerate(powers):
            mono = mono * pts[:, ax] ** e
        val = val + mono
        for ax, e in enumerate(powers):
            if e == 0:
                continue
            term = c * e
            for bx, f in enumerate(powers):
                term = term * pts[:, bx] ** (f - 1 if bx == ax else f)
            grad[ax] = grad[ax] + term
    n = len(pts)
    val = val + np.zeros(n, dtype=np.result_type(pts, float))
    grad = np.stack([g + np.zeros(n, dtype=np.result_type(pts, float)) for g in grad], axis=-1)
    return val, grad


@dataclass(frozen=True)
class HomogeneousSolution:
    """``L`` applied to a four-slot harmonic seed.

    ``kind='polynomial'`` uses ``h`` (degree ``n``) and has homogeneity
    ``n - 1``; ``kind='inverted'`` uses the Kelvin transform ``h / r^(2n+1)``
    and has homogeneity ``-n - 2``.  Both are annihilated by ``L`` because
    ``L^2`` is minus the Laplacian.  Evaluation is closed form and accepts
    complex points.
    """

    kind: str
    degree: int
    coeffs: tuple  # (4, n_seeds): mixing of the seeds into the four slots

    @property
    def homogeneity(self) -> int:
        return self.degree - 1 if self.kind == "polynomial" else -self.degree - 2

    def seed_and_gradient(self, pts):
        mix = np.asarray(self.coeffs, dtype=float)
        vals, grads = zip(*(poly_eval(s, pts) for s in harmonic_seeds(self.degree)))
        v = np.stack(vals, axis=-1) @ mix.T                      # (N, 4)
        g = np.einsum("snj,ts->njt", np.stack(grads), mix)       # (N, 3, 4)
        if self.kind == "inverted":
            p = 2 * self.degree + 1
            r2 = np.einsum("pi,pi->p", pts, pts)
            rp = np.sqrt(r2) ** p
            g = g / rp[:, None, None] - p * v[:, None, :] * (pts / (rp * r2)[:, None])[:, :, None]
            v = v / rp[:, None]
        return v, g

    def __call__(self, pts):
        _, g = self.seed_and_gradient(pts)
        return _flat_apply(g)


def random_homogeneous(kind: str, degree: int, rng: np.random.Generator) -> HomogeneousSolution:
    n = len(harmonic_seeds(degree))
    return HomogeneousSolution(kind, degree, tuple(map(tuple, rng.normal(size=(4, n)))))


# --- tau vectors -------------------------------------------------------------

def tau_vectors(bg: MonopoleField) -> list[TangentField]:
    """Phase and translation deformations of a background.

    ``tau_0 = (phi=0, a=-nabla_A Phi)`` and ``tau_i = (phi=nabla_i Phi, a_j=F_ij)``.
    """
    if bg.jacobian is None and not bg.complex_safe:
        raise ValueError("tau vectors need analytic derivatives of the background")

    def parts(p):
        if bg.jacobian is not None:
            A, Phi, dA, dPhi = bg.jacobian(p)
        else:
            A, Phi, dA, dPhi = field_derivatives(bg, p)
        return covariant_from(A, Phi, dPhi), curvature_from(A, dA)

    def tau0(p):
        D, _ = parts(p)
        out = np.zeros((len(p), 4, 3), dtype=D.dtype)
        out[:, 1:] = -D
        return out

    def taui(i):
        def ev(p):
            D, B = parts(p)
            out = np.zeros((len(p), 4, 3), dtype=D.dtype)
            out[:, 0] = D[:, i]
            # F_ij from the dual: F_12 = B_3, F_23 = B_1, F_31 = B_2
            for j in range(3):
                if j == i:
                    continue
                k = 3 - i - j
                sign = 1.0 if (i, j, k) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1.0
                out[:, 1 + j] = sign * B[:, k]
            return out

        return ev

    safe = bg.jacobian is not None
    fields = [TangentField(tau0, safe, True, "tau0")]
    fields += [TangentField(taui(i), safe, True, f"tau{i + 1}") for i in range(3)]
    return fields


def quaternion_action(i: int, u: np.ndarray) -> np.ndarray:
    """Left multiplication of the four slots by the unit quaternion ``e_i`` (i = 1, 2, 3)."""
    unit = np.zeros(4)
    unit[i] = 1.0
    moved = np.moveaxis(u, 1, -1)  # slots last
    out = su2.qmul(np.broadcast_to(unit, moved.shape), moved)
    return np.moveaxis(out, -1, 1)


def tau_identity_residual(bg: MonopoleField, lam, pts, h: Optional[float] = None) -> float:
    """``max |sum lam_a tau_a - L*(lam_0 Phi, lam Phi)|`` at ``pts``."""
    lam = np.asarray(lam, dtype=float)
    taus = tau_vectors(bg)
    lhs = sum(l * t.evaluate(pts) for l, t in zip(lam, taus))

    def seed(p):
        Phi = bg.evaluate(p)[1]
        return lam[None, :, None] * Phi[:, None, :]

    rhs = coupled_L_adjoint(bg, seed, pts, h)
    return float(np.max(np.abs(lhs - rhs)))


# --- Weitzenbock -------------------------------------------------------------

def bump_field(center, radius: float, rng: np.random.Generator, power: int = 6) -> TangentField:
    """Compactly supported smooth deformation: a random affine field times a bump."""
    c = np.asarray(center, dtype=float)
    const = rng.normal(size=(4, 3))
    lin = rng.normal(size=(4, 3, 3)) / radius

    def ev(p):
        poly = const[None] + np.einsum("sai,pi->psa", lin, p - c)
        return _bump_profile(p, c, radius, power)[:, None, None] * poly

    return TangentField(ev, True, True, "bump")


def _bump_profile(p, center, radius, power=6):
    d = p - center
    s = np.einsum("pi,pi->p", d, d) / radius**2
    inside = np.real(s) < 1.0
    return np.where(inside, (1.0 - np.where(inside, s, 0.0)) ** power, 0.0)


def _weitzenbock_parts(bg: MonopoleField, v, dv, p):
    A, Phi, _, _ = field_derivatives(bg, p)
    cov = dv + su2.bracket(A[:, :, None, :], v[:, None, :, :])
    adj = su2.bracket(Phi[:, None, :], v)
    return _flat_apply(cov) - adj, cov, adj


def sensitive_bump(bg: MonopoleField, radius: float, grid: Grid3D) -> tuple[TangentField, float]:
    """The bump-supported field on which the Weitzenbock identity is most violated.

    Searches the span of the twelve constant-coefficient bumps centred on the
    background's centre and returns the extreme generalised eigenvector of
    ``(|L* u|^2 - |nabla_A u|^2 - |[Phi, u]|^2, |nabla_A u|^2 + |[Phi, u]|^2)``
    with its eigenvalue.  On a Bogomolny solution the eigenvalues vanish, so
    this is the natural probe for a detuned background.
    """
    from scipy.linalg import eigh

    c = np.asarray(bg.center, dtype=float)
    units = np.eye(12).reshape(12, 4, 3)

    def dens(p):
        (b,), (db,) = complex_step(lambda q: (_bump_profile(q, c, radius),), p)
        v = b[:, None, None, None] * units[None]                 # (P, 12, 4, 3)
        dv = db[:, :, None, None, None] * units[None, None]       # (P, 3, 12, 4, 3)
        A, Phi, _, _ = field_derivatives(bg, p)
        cov = dv + su2.bracket(A[:, :, None, None, :], v[:, None])
        adj = su2.bracket(Phi[:, None, None, :], v)
        ls = np.stack([_flat_apply(cov[:, :, k]) for k in range(12)], axis=1) - adj
        M = np.einsum("pksa,plsa->pkl", ls, ls)
        N = np.einsum("pjksa,pjlsa->pkl", cov, cov) + np.einsum("pksa,plsa->pkl", adj, adj)
        return np.concatenate([M.reshape(len(p), -1), N.reshape(len(p), -1)], axis=1)

    res = integrate(grid, dens, tail=False).value
    M, N = res[:144].reshape(12, 12), res[144:].reshape(12, 12)
    w, vecs = eigh(M - N, N)
    k = int(np.argmax(np.abs(w)))
    coef = vecs[:, k].reshape(4, 3)

    def ev(p):
        return _bump_profile(p, c, radius)[:, None, None] * coef[None]

    return TangentField(ev, True, True, "sensitive_bump"), float(w[k])


def detuned(bg: MonopoleField, factor: float) -> MonopoleField:
    """Background with the Higgs field scaled by ``factor`` (off-shell unless 1)."""
    from dataclasses import replace

    def ev(p):
        A, Phi = bg.evaluator(p)
        return A, factor * Phi

    def jac(p):
        A, Phi, dA, dPhi = bg.jacobian(p)
        return A, factor * Phi, dA, factor * dPhi

    return replace(bg, evaluator=ev, jacobian=jac if bg.jacobian is not None else None,
                   name=f"{bg.name}*{factor:g}")


@dataclass
class WeitzenbockResult:
    lhs: float
    rhs: float
    gap: float
    lhs_pairing: float = float("nan")


def weitzenbock_check(bg: MonopoleField, u: TangentField, grid: Grid3D, *, h: float = 1e-3,
                      residual_tol: Optional[float] = 1e-6, threads: int = 1) -> WeitzenbockResult:
    """Compare ``<L L* u, u>`` with ``|nabla_A u|^2 + |[Phi, u]|^2`` by quadrature.

    ``lhs`` is computed as ``|L* u|^2`` (integration by parts, exact for
    compact support); ``lhs_pairing`` applies ``L`` to ``L* u`` by central
    differences with step ``h`` and pairs with ``u``.
    Raises :class:`ResidualTooLarge` when the background is visibly off-shell
    and ``residual_tol`` is set.
    """
    if residual_tol is not None:
        probe = grid.points()[:: max(1, grid.n**3 // 512)]
        probe = probe[np.linalg.norm(probe - np.asarray(bg.center), axis=-1) > 1e-6]
        worst = float(residual_norm(bg, probe).max())
        if worst > residual_tol:
            raise ResidualTooLarge(f"background residual {worst:.3g} exceeds {residual_tol:g}")

    def dens(p):
        v, dv = tangent_derivatives(u, p)
        lstar, cov, adj = _weitzenbock_parts(bg, v, dv, p)
        LLs = _coupled(bg, lambda q: coupled_L_adjoint(bg, u, q), p, h, 1.0)
        return np.stack(
            [
                np.einsum("psa,psa->p", lstar, lstar),
                np.einsum("pjsa,pjsa->p", cov, cov) + np.einsum("psa,psa->p", adj, adj),
                np.einsum("psa,psa->p", LLs, v),
            ],
            axis=-1,
        )

    res = integrate(grid, dens, tail=False, threads=threads)
    lhs, rhs, pair = (float(x) for x in res.value)
    return WeitzenbockResult(lhs, rhs, abs(lhs - rhs) / max(abs(rhs), 1e-300), pair)


# --- indicial roots ----------------------------------------------------------

@dataclass
class ReportEntry:
    test: str
    value: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)


def _sample_points(rng, n, rmin=0.5, rmax=3.0):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(rmin, rmax, n)[:, None]


def indicial_roots_check(rng: Optional[np.random.Generator] = None, n_points: int = 40,
                         tol: float = 1e-9, gap_tol: float = 1e-3) -> list[ReportEntry]:
    """Kernel checks for integer rates and an exclusion scan at rate ``r^-1``.

    For each homogeneity ``s - 1`` with ``s`` in ``{-3, -2, -1, 1, 2, 3}`` a
    random harmonic-seeded solution is verified to lie in the kernel of the
    model operator and to have the advertised homogeneity.  For rate ``r^-1``
    the general combination of ``h_l / r^(l+1)`` (``l <= 2``, all four slots) is
    shown to have no kernel: the smallest singular value of ``L`` on that
    family, normalised by the largest, stays above ``gap_tol``.
    """
    rng = rng or np.random.default_rng(0)
    pts = _sample_points(rng, n_points)
    out = []
    families = [("inverted", 2), ("inverted", 1), ("inverted", 0),
                ("polynomial", 1), ("polynomial", 2), ("polynomial", 3)]
    for kind, deg in families:
        sol = random_homogeneous(kind, deg, rng)
        vals = sol(pts)
        res = float(np.max(np.abs(model_L(sol, pts))))
        scale = float(np.max(np.abs(vals)))
        # homogeneity: u(2z) = 2^s u(z)
        ratio = float(np.max(np.abs(sol(2 * pts) - 2.0 ** sol.homogeneity * vals))) / scale
        out.append(ReportEntry(
            f"kernel_rate_{sol.homogeneity}", res / scale, tol,
            bool(res / scale <= tol and ratio <= 1e-12),
            {"kind": kind, "seed_degree": deg, "homogeneity_error": ratio},
        ))
    sv = _rate_minus_one_singular_values(pts)
    rel = float(sv[-1] / sv[0])
    out.append(ReportEntry("exclusion_rate_-1", rel, gap_tol, bool(rel > gap_tol),
                           {"n_unknowns": int(len(sv))}))
    return out


def _rate_minus_one_singular_values(pts):
    r = np.sqrt(np.einsum("pi,pi->p", pts, pts))
    cols = []
    for l in range(3):
        for seed in harmonic_seeds(l):
            for slot in range(4):
                def u(p, seed=seed, slot=slot, l=l):
                    rr = np.sqrt(np.einsum("pi,pi->p", p, p))
                    out = np.zeros((len(p), 4), dtype=np.result_type(p, float))
                    out[:, slot] = poly_eval(seed, p)[0] / rr ** (l + 1)
                    return out
                # normalise each column so that the scan is scale free
                vals = model_L(u, pts) * r[:, None] ** 2
                cols.append(vals.ravel())
    M = np.stack(cols, axis=-1)
    M = M / np.linalg.norm(M, axis=0)
    return np.linalg.svd(M, compute_uv=False)


def report_json(entries: Sequence[ReportEntry]) -> str:
    return json.dumps(
        [{"test": e.test, "value": e.value, "tolerance": e.tolerance, "pass": e.passed, **e.detail}
         for e in entries],
        indent=2,
    )
