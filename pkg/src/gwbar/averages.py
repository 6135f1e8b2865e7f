"""Empirical sums and averages over cell subsets, normalised generation
fluctuations, and the genealogy-preserving random order with its companion
timescale.

The random order visits generations one after another, uniformly permuting
each generation's alive cells. The timescale ``tau_n`` maps [0, 1] onto
prefix lengths of that order so that partial sums along it interpolate the
per-generation sums: ``tau_n(1)`` is exactly the number of alive cells up to
generation n, and ``tau_n(m^-k)`` the count up to generation n - k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .model import ModelKappa, ModelTheta
from .polynomials import PolySpec, conditional_expectation, eval_poly
from .tree import CellId, LineageTree


def sum_over(tree: LineageTree, cells: Sequence[CellId], f: PolySpec) -> float:
    """Sum of f over the listed alive cells; an empty list sums to 0."""
    return float(sum(eval_poly(f, tree, cell) for cell in cells))


@dataclass(frozen=True)
class Averages:
    """Cell-average (None when the subset is empty) and the average against
    an externally supplied expected size."""

    bar: Optional[float]
    tilde: float


def averages(
    tree: LineageTree, cells: Sequence[CellId], f: PolySpec, expected_size: float
) -> Averages:
    if expected_size <= 0:
        raise ValueError("expected_size must be > 0")
    total = sum_over(tree, cells, f)
    bar = total / len(cells) if cells else None
    return Averages(bar=bar, tilde=total / expected_size)


def generation_f_values(tree: LineageTree, q: int, f: PolySpec) -> np.ndarray:
    """f evaluated on every mother of generation q, in id order."""
    x, y, z, has_y, has_z = tree.mother_daughter_arrays(q)
    return f.eval_arrays(x, y, z, has_y, has_z)


def sum_up_to(tree: LineageTree, n: int, f: PolySpec) -> float:
    """Sum of f over all alive cells of generation <= n."""
    return float(
        sum(generation_f_values(tree, q, f).sum() for q in range(min(n, tree.max_generation) + 1))
    )


def normalized_fluctuation(
    tree: LineageTree, q: int, f: PolySpec, theta: ModelTheta, kappa: ModelKappa
) -> Optional[float]:
    """|G*_q|^(-1/2) sum over generation q of f(triple) - (kernel f)(mother).

    Returns None when generation q is empty (the statistic is undefined).
    """
    ids, x = tree.generation_arrays(q)
    if len(ids) == 0:
        return None
    fvals = generation_f_values(tree, q, f)
    pf = conditional_expectation(theta, kappa, f).poly_in_x()
    centered = fvals - npoly.polyval(x, pf)
    return float(centered.sum() / math.sqrt(len(ids)))


@dataclass(frozen=True)
class RandomOrder:
    """A genealogy-preserving visiting order of the alive cells up to
    generation n: generations in sequence, each uniformly permuted."""

    n: int
    cells: tuple[CellId, ...]

    def __post_init__(self):
        gens = [c.depth for c in self.cells]
        if any(g2 < g1 for g1, g2 in zip(gens, gens[1:])):
            raise ValueError("order does not preserve the genealogical order")

    def __len__(self) -> int:
        return len(self.cells)


def sample_random_order(tree: LineageTree, n: int, rng: np.random.Generator) -> RandomOrder:
    """Concatenate independent uniform permutations of each generation."""
    if n < 0:
        raise ValueError("n must be >= 0")
    cells: list[CellId] = []
    for q in range(min(n, tree.max_generation) + 1):
        ids, _ = tree.generation_arrays(q)
        for j in rng.permutation(len(ids)):
            cells.append(CellId(q, int(ids[j])))
    return RandomOrder(n=n, cells=tuple(cells))


def tau(tree: LineageTree, n: int, t: float, m: float) -> float:
    """Continuous time change mapping [0, 1] to prefix lengths of the order.

    Piecewise: m^n t on [0, m^-n]; on [m^-k, m^-(k-1)] it grows linearly
    from the size of the subtree up to generation n-k by the fraction
    (m^k t - 1)/(m - 1) of generation n-k+1.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if m <= 1.0:
        raise ValueError("tau needs a supercritical model (m > 1)")
    if n < 0:
        raise ValueError("n must be >= 0")
    if t == 0.0:
        return 0.0
    if t <= m**-n:
        return m**n * t
    k = int(math.floor(-math.log(t) / math.log(m))) + 1
    k = min(max(k, 1), n)
    while k > 1 and t > m ** (-k + 1):
        k -= 1
    while k < n and t <= m**-k:
        k += 1
    return tree.size_up_to(n - k) + (m**k * t - 1.0) / (m - 1.0) * tree.generation_size(
        n - k + 1
    )


def partial_sum_process(
    tree: LineageTree,
    order: RandomOrder,
    n: int,
    f: PolySpec,
    grid: Sequence[float],
    m: float,
) -> list[float]:
    """m^-n times the partial sums of f along the order, at floor(tau_n(t)).

    ``order`` must have been drawn for this tree and the same n.
    """
    if order.n != n:
        raise ValueError(f"order was drawn for n = {order.n}, not {n}")
    for t in grid:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"grid value {t} outside [0, 1]")
    fvals_by_gen = [
        generation_f_values(tree, q, f) for q in range(min(n, tree.max_generation) + 1)
    ]
    values = np.empty(len(order.cells))
    for i, cell in enumerate(order.cells):
        ids, _ = tree.generation_arrays(cell.depth)
        pos = int(np.searchsorted(ids, np.uint64(cell.bits)))
        values[i] = fvals_by_gen[cell.depth][pos]
    prefix = np.concatenate([[0.0], np.cumsum(values)])
    scale = m ** float(-n)
    out = []
    for t in grid:
        idx = int(math.floor(tau(tree, n, t, m)))
        out.append(scale * prefix[idx])
    return out
