"""Small quadrature helpers shared by the field, flux and metric code."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate


def simpson_weights(n: int, spacing: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` (odd) equally spaced nodes."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of nodes >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * spacing / 3.0


def gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def sphere_rule(n_theta: int = 32, n_phi: int = 64):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), trapezoid in phi.

    Returns ``(directions, weights)`` with weights summing to 4*pi.
    """
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * (2 * np.pi / n_phi)
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack(
        [
            np.outer(st, np.cos(phi)),
            np.outer(st, np.sin(phi)),
            np.outer(ct, np.ones_like(phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.outer(wt, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return dirs, weights


def fibonacci_sphere(n: int) -> np.ndarray:
    """Nearly uniform unit vectors (deterministic), used for shell sampling."""
    i = np.arange(n) + 0.5
    ct = 1.0 - 2.0 * i / n
    st = np.sqrt(1.0 - ct**2)
    phi = np.pi * (1.0 + 5**0.5) * i
    return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)


@lru_cache(maxsize=None)
def cube_exterior_r4() -> float:
    """Integral of ``|x|^-4`` over the exterior of the cube ``[-1, 1]^3``.

    Scales as ``1/L`` for a cube of half-width ``L``.
    """
    face, _ = integrate.dblquad(
        lambda y, x: 1.0 / (1.0 + x * x + y * y) ** 2, -1, 1, -1, 1, epsabs=1e-13, epsrel=1e-13
    )
    return 6.0 * face


def ordered_sum(parts) -> np.ndarray:
    """Sum a sequence of equally shaped arrays in order with compensated summation."""
    parts = [np.asarray(p, dtype=float) for p in parts]
    if not parts:
        return np.zeros(0)
    stacked = np.stack(parts)
    flat = stacked.reshape(len(parts), -1)
    out = np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])])
    return out.reshape(stacked.shape[1:])
