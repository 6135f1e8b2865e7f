"""Galton-Watson quantities of the alive subtree.

The number of alive daughters of a cell has generating function
``psi(z) = p_none + (p0 + p1) z + p10 z^2``. Everything here is exact
arithmetic on psi: extinction probabilities, expected subtree sizes, and the
Laplace transform of the normalised population limit W.
"""

from __future__ import annotations

import math

from .model import ModelTheta, mean_offspring, require_supercritical


def psi(theta: ModelTheta, z: float) -> float:
    """Offspring generating function evaluated at z."""
    return theta.p_none + (theta.p0 + theta.p1) * z + theta.p10 * z * z


def extinction_probability(theta: ModelTheta) -> float:
    """Smallest fixed point of psi in [0, 1]; requires m > 1.

    For p10 > 0 the quadratic gives the closed form 1 - (m - 1)/p10, which
    the fixed point must match; p10 = 0 with m > 1 cannot happen.
    """
    require_supercritical(theta)
    return max(0.0, 1.0 - (mean_offspring(theta) - 1.0) / theta.p10)


def extinction_by_generation(theta: ModelTheta, n: int) -> float:
    """Probability the alive subtree is gone by generation n: psi^(n)(0)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    z = 0.0
    for _ in range(n):
        z = psi(theta, z)
    return z


def expected_generation_size(theta: ModelTheta, k: int) -> float:
    """E|G*_k| = m^k."""
    return mean_offspring(theta) ** k


def expected_tree_size(theta: ModelTheta, r: int) -> float:
    """E|T*_r| = (m^(r+1) - 1)/(m - 1), the geometric partial sum."""
    m = mean_offspring(theta)
    if m == 1.0:
        return float(r + 1)
    return (m ** (r + 1) - 1.0) / (m - 1.0)


def w_laplace(lam: float, theta: ModelTheta, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Laplace transform phi(lambda) = E[exp(-lambda W)] of the limit W.

    phi is the unique solution of phi(lambda) = psi(phi(lambda/m)) with
    phi(0) = 1; it is obtained as the limit of phi_0 = exp(-lambda),
    phi_{k+1}(lambda) = psi(phi_k(lambda/m)), i.e. k nested applications of
    psi seeded with exp(-lambda/m^k). Iterates until successive values
    differ by less than ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    m = require_supercritical(theta)
    prev = math.exp(-lam)
    for k in range(1, max_iter):
        z = math.exp(-lam / m**k)
        for _ in range(k):
            z = psi(theta, z)
        if abs(z - prev) < tol:
            return z
        prev = z
    raise RuntimeError(f"w_laplace did not converge within {max_iter} iterations")
