"""Arithmetic of su(2) in a fixed orthonormal basis.

The basis is ``e_a = -i sigma_a``.  With the invariant inner product
``<A, B> = -1/2 tr(AB)`` it is orthonormal, and the bracket reads
``[e_a, e_b] = 2 eps_abc e_c``.  An element is stored as its three real
coefficients, so in coefficient form

    inner(u, v) = u . v,        bracket(u, v) = 2 u x v.

Group elements of SU(2) are unit quaternions ``w + x e_1 + y e_2 + z e_3``
(the basis satisfies the quaternion relations ``e_1 e_2 = e_3``,
``e_a^2 = -1``).  The adjoint action of ``q`` is a rotation, and the
one-parameter group ``exp(t e_3)`` rotates by the angle ``2t``.

All array functions broadcast over leading axes and accept complex input,
which the complex-step derivatives in :mod:`monolab.fields` rely on; no
function here conjugates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroHiggs

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
BASIS = -1j * SIGMA

HIGGS_FLOOR = 1e-12


def inner(u, v):
    return np.einsum("...a,...a->...", u, v)


def norm(u):
    return np.sqrt(inner(u, u))


def bracket(u, v):
    return 2.0 * np.cross(u, v)


def ad(u):
    """Matrix of ``v -> [u, v]`` acting on coefficient vectors."""
    u = np.asarray(u)
    m = np.zeros(u.shape[:-1] + (3, 3), dtype=u.dtype)
    m[..., 0, 1] = -u[..., 2]
    m[..., 0, 2] = u[..., 1]
    m[..., 1, 0] = u[..., 2]
    m[..., 1, 2] = -u[..., 0]
    m[..., 2, 0] = -u[..., 1]
    m[..., 2, 1] = u[..., 0]
    return 2.0 * m


def to_matrix(u):
    """2x2 anti-hermitian matrix of an su(2) coefficient vector (debugging view)."""
    return np.einsum("...a,aij->...ij", np.asarray(u), BASIS)


def from_matrix(mat):
    """Coefficients of a traceless anti-hermitian 2x2 matrix."""
    mat = np.asarray(mat)
    # <e_a, X> = -1/2 tr(e_a X)
    return np.real(-0.5 * np.einsum("aij,...ji->...a", BASIS, mat))


def split(u, phi, floor: float = HIGGS_FLOOR):
    """Split ``u`` along the Higgs direction: ``u = u0 * phi_hat + u1``.

    Returns ``(u0, u1)`` with ``inner(phi_hat, u1) == 0``.
    """
    u = np.asarray(u)
    phi = np.asarray(phi)
    size = norm(phi)
    if np.any(np.abs(size) < floor):
        raise ZeroHiggs(f"|phi| below floor {floor:g}")
    phat = phi / size[..., None]
    u0 = inner(phat, u)
    return u0, u - u0[..., None] * phat


# --- quaternions -----------------------------------------------------------

def qmul(p, q):
    pw, pv = p[..., 0], p[..., 1:]
    qw, qv = q[..., 0], q[..., 1:]
    w = pw * qw - inner(pv, qv)
    v = pw[..., None] * qv + qw[..., None] * pv + np.cross(pv, qv)
    return np.concatenate([w[..., None], v], axis=-1)


def qconj(q):
    out = np.array(q, copy=True)
    out[..., 1:] *= -1
    return out


def adjoint(q, v):
    """Adjoint action ``q v q^-1`` of a unit quaternion on su(2) coefficients."""
    w = q[..., 0:1]
    x = q[..., 1:]
    t = 2.0 * np.cross(x, v)
    return v + w * t + np.cross(x, t)


def rotation_matrix(q):
    """3x3 matrix of the adjoint action of ``q``."""
    eye = np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3))
    return np.stack([adjoint(q, eye[..., :, k]) for k in range(3)], axis=-1)


def expmap(u):
    """Group exponential of an su(2) element as a unit quaternion."""
    u = np.asarray(u)
    theta = norm(u)
    small = np.abs(theta) < 1e-8
    safe = np.where(small, 1.0, theta)
    sinc = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    return np.concatenate([np.cos(theta)[..., None], sinc[..., None] * u], axis=-1)


def quat_to_matrix(q):
    q = np.asarray(q)
    return q[..., 0, None, None] * np.eye(2) + to_matrix(q[..., 1:])


@dataclass(frozen=True)
class SuTwoVector:
    """A single su(2) element; a convenience wrapper for non-vectorised code."""

    coeffs: tuple[float, float, float]

    @classmethod
    def of(cls, *c) -> "SuTwoVector":
        if len(c) == 1:
            c = tuple(c[0])
        return cls(tuple(float(x) for x in c))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def __add__(self, other: "SuTwoVector") -> "SuTwoVector":
        return SuTwoVector.of(self.array + other.array)

    def __sub__(self, other: "SuTwoVector") -> "SuTwoVector":
        return SuTwoVector.of(self.array - other.array)

    def __mul__(self, s: float) -> "SuTwoVector":
        return SuTwoVector.of(self.array * s)

    __rmul__ = __mul__

    def inner(self, other: "SuTwoVector") -> float:
        return float(inner(self.array, other.array))

    def bracket(self, other: "SuTwoVector") -> "SuTwoVector":
        return SuTwoVector.of(bracket(self.array, other.array))

    def matrix(self) -> np.ndarray:
        return to_matrix(self.array)


@dataclass(frozen=True)
class AdSplit:
    """Splitting of su(2) into span(phi_hat) and its orthogonal complement."""

    phi_hat: SuTwoVector

    @classmethod
    def from_higgs(cls, phi, floor: float = HIGGS_FLOOR) -> "AdSplit":
        phi = np.asarray(phi, dtype=float)
        size = float(np.sqrt(phi @ phi))
        if size < floor:
            raise ZeroHiggs(f"|phi| = {size:g} below floor {floor:g}")
        return cls(SuTwoVector.of(phi / size))

    def parallel(self, u) -> float:
        return float(inner(self.phi_hat.array, np.asarray(u, dtype=float)))

    def perpendicular(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return u - self.parallel(u) * self.phi_hat.array

    def reconstruct(self, u0: float, u1) -> np.ndarray:
        return u0 * self.phi_hat.array + np.asarray(u1, dtype=float)
