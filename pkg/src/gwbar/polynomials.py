"""Sparse polynomial test functions on mother-daughter triples.

A :class:`PolySpec` is a sum of monomials ``coef * x^a * y^b * z^c``
evaluated on (mother, new-pole daughter, old-pole daughter). A factor with
positive exponent evaluates to 0 when its cell is dead; exponent 0
evaluates to 1 regardless. User-facing functions are capped at total
degree 2 so that the exact kernel action below stays inside fourth-order
Gaussian/stationary moments; squares (degree up to 4) arise internally.

:func:`conditional_expectation` applies the one-step transition kernel to a
PolySpec in closed form, returning a polynomial in the mother value alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from math import comb
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as npoly

from .model import ModelKappa, ModelTheta
from .tree import CellId, LineageTree

MAX_USER_DEGREE = 2
MAX_INTERNAL_DEGREE = 4

_VARS = {"x": 0, "y": 1, "z": 2}


def _canonical(terms: Iterable[tuple[int, int, int, float]], max_degree: int):
    merged: dict[tuple[int, int, int], float] = {}
    for a, b, c, coef in terms:
        if min(a, b, c) < 0:
            raise ValueError("exponents must be >= 0")
        if a + b + c > max_degree:
            raise ValueError(f"total degree {a + b + c} exceeds cap {max_degree}")
        merged[(a, b, c)] = merged.get((a, b, c), 0.0) + float(coef)
    return tuple(
        (a, b, c, coef) for (a, b, c), coef in sorted(merged.items()) if coef != 0.0
    )


@dataclass(frozen=True)
class PolySpec:
    """Canonicalised monomial list ``(a, b, c, coef)`` meaning x^a y^b z^c."""

    terms: tuple[tuple[int, int, int, float], ...]

    def __init__(self, terms, max_degree: int = MAX_USER_DEGREE):
        object.__setattr__(self, "terms", _canonical(terms, max_degree))

    @classmethod
    def constant(cls, value: float) -> "PolySpec":
        return cls([(0, 0, 0, value)])

    @classmethod
    def parse(cls, text: str) -> "PolySpec":
        """Parse comma-separated terms like ``"1*y^1, 1*z^1"``.

        Each term is a product of an optional numeric coefficient and
        factors ``x``/``y``/``z`` with optional ``^exponent``. Total degree
        above 2 is rejected.
        """
        terms = []
        for raw in text.split(","):
            raw = raw.strip()
            if not raw:
                raise ValueError(f"empty term in polynomial spec {text!r}")
            coef = 1.0
            exps = [0, 0, 0]
            saw_number = False
            for factor in raw.split("*"):
                factor = factor.strip()
                m = re.fullmatch(r"([xyz])(?:\^(\d+))?", factor)
                if m:
                    exps[_VARS[m.group(1)]] += int(m.group(2) or 1)
                    continue
                try:
                    value = float(factor)
                except ValueError:
                    raise ValueError(f"bad factor {factor!r} in term {raw!r}") from None
                if saw_number:
                    raise ValueError(f"multiple coefficients in term {raw!r}")
                coef *= value
                saw_number = True
            terms.append((exps[0], exps[1], exps[2], coef))
        return cls(terms)

    def to_string(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for a, b, c, coef in self.terms:
            factors = [f"{coef:g}"]
            for name, e in (("x", a), ("y", b), ("z", c)):
                if e:
                    factors.append(f"{name}^{e}")
            parts.append("*".join(factors))
        return ", ".join(parts)

    @property
    def degree(self) -> int:
        return max((a + b + c for a, b, c, _ in self.terms), default=0)

    def depends_on_daughters(self) -> bool:
        return any(b or c for _, b, c, _ in self.terms)

    # -- algebra ---------------------------------------------------------

    def __add__(self, other: "PolySpec") -> "PolySpec":
        return PolySpec(self.terms + other.terms, max_degree=MAX_INTERNAL_DEGREE)

    def scale(self, factor: float) -> "PolySpec":
        return PolySpec(
            [(a, b, c, coef * factor) for a, b, c, coef in self.terms],
            max_degree=MAX_INTERNAL_DEGREE,
        )

    def multiply(self, other: "PolySpec") -> "PolySpec":
        """Product polynomial; only degrees <= 4 are representable."""
        terms = [
            (a1 + a2, b1 + b2, c1 + c2, k1 * k2)
            for a1, b1, c1, k1 in self.terms
            for a2, b2, c2, k2 in other.terms
        ]
        return PolySpec(terms, max_degree=MAX_INTERNAL_DEGREE)

    def square(self) -> "PolySpec":
        return self.multiply(self)

    # -- evaluation --------------------------------------------------------

    def eval_arrays(self, x, y, z, has_y, has_z):
        """Evaluate on arrays; y/z entries with a dead daughter are ignored."""
        x = np.asarray(x, dtype=np.float64)
        ysafe = np.where(has_y, y, 0.0)
        zsafe = np.where(has_z, z, 0.0)
        out = np.zeros_like(x)
        for a, b, c, coef in self.terms:
            term = np.full_like(x, coef)
            if a:
                term = term * x**a
            if b:
                term = term * ysafe**b
            if c:
                term = term * zsafe**c
            out += term
        return out

    def poly_in_x(self) -> np.ndarray:
        """Coefficient array when the polynomial involves x only."""
        if self.depends_on_daughters():
            raise ValueError("polynomial depends on daughter values")
        deg = max((a for a, _, _, _ in self.terms), default=0)
        coefs = np.zeros(deg + 1)
        for a, _, _, coef in self.terms:
            coefs[a] += coef
        return coefs


def eval_poly(f: PolySpec, tree: LineageTree, cell: CellId) -> float:
    """f evaluated on the triple of ``cell``; raises if the cell is dead."""
    x, y, z = tree.triple(cell)
    out = 0.0
    for a, b, c, coef in f.terms:
        if (b and y is None) or (c and z is None):
            continue
        term = coef * x**a
        if b:
            term *= y**b
        if c:
            term *= z**c
        out += term
    return out


# -- Gaussian moment table -------------------------------------------------

_STD_NORMAL_MOMENT = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0}


def centered_normal_moment(j: int, sigma: float) -> float:
    """E[e^j] for e ~ N(0, sigma^2), j <= 4."""
    if j not in _STD_NORMAL_MOMENT:
        raise ValueError(f"normal moment of order {j} not tabulated")
    return _STD_NORMAL_MOMENT[j] * sigma**j


def bivariate_normal_moment(j: int, k: int, sigma: float, rho: float) -> float:
    """E[e0^j e1^k] for the correlated both-alive noise pair, j + k <= 4."""
    if j + k > 4 or j < 0 or k < 0:
        raise ValueError(f"bivariate moment ({j}, {k}) not tabulated")
    if (j + k) % 2 == 1:
        return 0.0
    key = (min(j, k), max(j, k))
    if key == (0, 0):
        return 1.0
    if key == (0, 2):
        return sigma**2
    if key == (1, 1):
        return rho * sigma**2
    if key == (0, 4):
        return 3.0 * sigma**4
    if key == (1, 3):
        return 3.0 * rho * sigma**4
    if key == (2, 2):
        return sigma**4 * (1.0 + 2.0 * rho**2)
    raise AssertionError("unreachable")


# -- exact kernel action ----------------------------------------------------


def _affine(alpha: float, beta: float) -> np.ndarray:
    return np.array([beta, alpha])


def _monomial_kernel_poly(a, b, c, theta: ModelTheta, kappa: ModelKappa) -> np.ndarray:
    """Kernel action on x^a y^b z^c as x-coefficients, mixing all fates."""
    if b == 0 and c == 0:
        # no daughter factor: x^a passes through every fate unchanged
        out = np.zeros(a + 1)
        out[a] = 1.0
        return out
    acc = np.zeros(1)
    lin0 = _affine(theta.alpha0, theta.beta0)
    lin1 = _affine(theta.alpha1, theta.beta1)
    if theta.p10 > 0.0:
        both = np.zeros(1)
        for j in range(b + 1):
            for k in range(c + 1):
                mom = bivariate_normal_moment(j, k, kappa.sigma, kappa.rho)
                if mom == 0.0:
                    continue
                piece = npoly.polymul(
                    npoly.polypow(lin0, b - j) if b - j else np.ones(1),
                    npoly.polypow(lin1, c - k) if c - k else np.ones(1),
                )
                both = npoly.polyadd(both, comb(b, j) * comb(c, k) * mom * piece)
        acc = npoly.polyadd(acc, theta.p10 * both)
    if theta.p0 > 0.0 and c == 0:
        single = np.zeros(1)
        lin = _affine(theta.alpha0p, theta.beta0p)
        for j in range(b + 1):
            mom = centered_normal_moment(j, kappa.sigma0)
            if mom == 0.0:
                continue
            piece = npoly.polypow(lin, b - j) if b - j else np.ones(1)
            single = npoly.polyadd(single, comb(b, j) * mom * piece)
        acc = npoly.polyadd(acc, theta.p0 * single)
    if theta.p1 > 0.0 and b == 0:
        single = np.zeros(1)
        lin = _affine(theta.alpha1p, theta.beta1p)
        for k in range(c + 1):
            mom = centered_normal_moment(k, kappa.sigma1)
            if mom == 0.0:
                continue
            piece = npoly.polypow(lin, c - k) if c - k else np.ones(1)
            single = npoly.polyadd(single, comb(c, k) * mom * piece)
        acc = npoly.polyadd(acc, theta.p1 * single)
    if theta.p_none > 0.0 and b == 0 and c == 0:
        acc = npoly.polyadd(acc, np.array([theta.p_none]))
    xa = np.zeros(a + 1)
    xa[a] = 1.0
    return npoly.polymul(acc, xa)


def conditional_expectation(theta: ModelTheta, kappa: ModelKappa, f: PolySpec) -> PolySpec:
    """Exact one-step conditional expectation of f given the mother value.

    The result is a polynomial in x only, of the same total degree as f.
    Degrees above 4 overflow the tabulated moments and are rejected.
    """
    if f.degree > MAX_INTERNAL_DEGREE:
        raise ValueError(f"degree {f.degree} exceeds the closed-form cap")
    coefs = np.zeros(1)
    for a, b, c, coef in f.terms:
        coefs = npoly.polyadd(coefs, coef * _monomial_kernel_poly(a, b, c, theta, kappa))
    return PolySpec(
        [(a, 0, 0, float(v)) for a, v in enumerate(coefs)],
        max_degree=MAX_INTERNAL_DEGREE,
    )
