"""Lineage simulation and the single-lineage auxiliary chain.

Trees grow breadth-first: every alive cell of generation < max_generation
draws a fate and, per fate, daughter traits via the autoregressive
equations. The generation cap is a hard stop, not a conditioning, so no
size-biasing is introduced. Everything is a pure function of an explicit
counter-based stream, hence trivially parallel across replicates.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from . import rng as _rng
from .kernels import active_aux_chain, active_step
from .model import (
    InitialLaw,
    ModelKappa,
    ModelTheta,
    SimulationSpec,
    mixture_components,
    require_supercritical,
)
from .tree import LineageTree


class Fate(Enum):
    BOTH_ALIVE = "both_alive"
    NEW_ONLY = "new_only"
    OLD_ONLY = "old_only"
    NONE_ALIVE = "none_alive"


def sample_fate(theta: ModelTheta, rng: np.random.Generator) -> Fate:
    """One categorical fate draw with probabilities (p10, p0, p1, rest)."""
    u = rng.random()
    if u < theta.p10:
        return Fate.BOTH_ALIVE
    if u < theta.p10 + theta.p0:
        return Fate.NEW_ONLY
    if u < theta.p10 + theta.p0 + theta.p1:
        return Fate.OLD_ONLY
    return Fate.NONE_ALIVE


def _draw_initial(initial: InitialLaw, rng: np.random.Generator) -> float:
    if initial.kind == "constant":
        return float(initial.value)
    return float(initial.mean + initial.sd * rng.standard_normal())


def _kernel_params(theta: ModelTheta, kappa: ModelKappa):
    s_orth = kappa.sigma * math.sqrt(1.0 - kappa.rho**2)
    return (
        theta.p10,
        theta.p0,
        theta.p1,
        theta.alpha0,
        theta.beta0,
        theta.alpha1,
        theta.beta1,
        theta.alpha0p,
        theta.beta0p,
        theta.alpha1p,
        theta.beta1p,
        kappa.sigma,
        kappa.sigma * kappa.rho,
        s_orth,
        kappa.sigma0,
        kappa.sigma1,
    )


def simulate(
    spec: SimulationSpec,
    theta: ModelTheta,
    kappa: ModelKappa,
    replicate: int = 0,
) -> LineageTree:
    """Simulate one lineage tree down to ``spec.max_generation``.

    ``replicate`` selects the counter-based stream derived from
    ``(spec.seed, replicate)``; the same inputs always yield a bit-identical
    tree, independent of which other replicates ran.
    """
    stream = _rng.stream(spec.seed, replicate)
    return simulate_into_stream(spec.max_generation, theta, kappa, spec.initial, stream)


def simulate_into_stream(
    max_generation: int,
    theta: ModelTheta,
    kappa: ModelKappa,
    initial: InitialLaw,
    stream: np.random.Generator,
) -> LineageTree:
    """Like :func:`simulate` but consuming an already-positioned stream."""
    step = active_step()
    params = _kernel_params(theta, kappa)
    x0 = _draw_initial(initial, stream)
    ids = np.zeros(1, dtype=np.uint64)
    vals = np.array([x0], dtype=np.float64)
    gens = [(ids, vals)]
    for _ in range(max_generation):
        k = len(ids)
        if k == 0:
            break
        u = stream.random(k)
        g0 = stream.standard_normal(k)
        g1 = stream.standard_normal(k)
        ids, vals = step(ids, vals, u, g0, g1, *params)
        gens.append((ids, vals))
    return LineageTree.from_generation_arrays(gens)


def simulate_auxiliary_chain(
    theta: ModelTheta,
    kappa: ModelKappa,
    steps: int,
    y0: float,
    stream: np.random.Generator,
) -> np.ndarray:
    """Path of the chain Y_{k+1} = a Y_k + b + s e_k of length steps + 1.

    The coefficient triple (a, b, s) is drawn i.i.d. from the four-branch
    mixture of :func:`gwbar.model.mixture_components` and e is standard
    normal. This chain has the law of the trait seen along a uniformly
    chosen alive lineage; its stationary moments are the mu_k of
    :func:`gwbar.inference.stationary_moment`.
    """
    require_supercritical(theta)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    comps = mixture_components(theta, kappa)
    weights = np.array([c[0] for c in comps])
    alphas = np.array([c[1] for c in comps])
    betas = np.array([c[2] for c in comps])
    sigmas = np.array([c[3] for c in comps])
    edges = np.cumsum(weights)
    edges[-1] = 1.0
    u = stream.random(steps)
    e = stream.standard_normal(steps)
    branch = np.searchsorted(edges, u, side="right")
    chain = active_aux_chain()
    return chain(float(y0), alphas[branch], betas[branch], sigmas[branch], e)


def w_estimate(tree: LineageTree, q: int, m: float) -> float:
    """Population martingale value m^(-q) |G*_q| at generation q."""
    if q < 0:
        raise ValueError("q must be >= 0")
    if m <= 1.0:
        raise ValueError(f"w_estimate needs a supercritical model, got m = {m}")
    return tree.generation_size(q) / m**q
