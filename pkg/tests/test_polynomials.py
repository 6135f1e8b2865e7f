import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwbar import CellId, ModelKappa, ModelTheta, conditional_expectation, eval_poly
from gwbar.polynomials import (
    MAX_INTERNAL_DEGREE,
    PolySpec,
    bivariate_normal_moment,
    centered_normal_moment,
)
from gwbar import rng as _rng

from conftest import build_tree


def test_parse_and_to_string():
    f = PolySpec.parse("1*y^1, 1*z^1")
    assert f.terms == ((0, 0, 1, 1.0), (0, 1, 0, 1.0))
    assert PolySpec.parse(f.to_string()) == f
    assert PolySpec.parse("2.5") == PolySpec.constant(2.5)
    assert PolySpec.parse("x*y") == PolySpec.parse("1*x^1*y^1")
    assert PolySpec.parse("-0.5*x^2") .terms == ((2, 0, 0, -0.5),)
    assert PolySpec.parse("1*y^1, -1*y^1").to_string() == "0"


@pytest.mark.parametrize("bad", ["1*y^3", "x*y*z", "1*w^1", "", "1*2*x", "x^2*y"])
def test_parse_rejections(bad):
    with pytest.raises(ValueError):
        PolySpec.parse(bad)


def test_eval_dead_cell_convention(affine_tree):
    tree = build_tree({"": 1.0, "0": 2.0})
    f = PolySpec.parse("1*y^1, 1*z^1")
    assert eval_poly(f, tree, CellId.root()) == 2.0
    assert eval_poly(PolySpec.constant(1.0), tree, CellId.root()) == 1.0
    assert eval_poly(PolySpec.parse("1*x^1*y^1"), build_tree({"": 3.0, "0": 2.0, "1": 5.0}), CellId.root()) == 6.0
    with pytest.raises(KeyError):
        eval_poly(f, tree, CellId.from_string("1"))


def test_eval_arrays_matches_pointwise(affine_tree):
    f = PolySpec.parse("1*x^1*y^1, 2*z^2, -1")
    x, y, z, has_y, has_z = affine_tree.mother_daughter_arrays(1)
    vec = f.eval_arrays(x, y, z, has_y, has_z)
    cells = affine_tree.generation_slice(1)
    assert np.allclose(vec, [eval_poly(f, affine_tree, c) for c in cells])


# -- Gaussian moment table ----------------------------------------------------


def stein_bivariate_moment(j, k, sigma, rho):
    """Independent oracle: Gaussian integration-by-parts recursion."""
    if j < 0 or k < 0:
        return 0.0
    if j == 0 and k == 0:
        return 1.0
    if j == 0:
        return stein_bivariate_moment(k, 0, sigma, rho)
    return (j - 1) * sigma**2 * stein_bivariate_moment(j - 2, k, sigma, rho) + (
        k * rho * sigma**2 * stein_bivariate_moment(j - 1, k - 1, sigma, rho)
    )


def test_moment_table_against_recursion_oracle():
    for sigma, rho in [(1.0, 0.3), (0.7, -0.6), (2.0, 0.0)]:
        for j in range(5):
            for k in range(5 - j):
                assert bivariate_normal_moment(j, k, sigma, rho) == pytest.approx(
                    stein_bivariate_moment(j, k, sigma, rho), rel=1e-12, abs=1e-12
                )
    for j in range(5):
        assert centered_normal_moment(j, 1.3) == pytest.approx(
            stein_bivariate_moment(j, 0, 1.3, 0.0), rel=1e-12, abs=1e-12
        )


def test_moment_table_against_monte_carlo():
    stream = _rng.stream(12, 0)
    sigma, rho = 1.0, 0.3
    n = 1_000_000
    g0 = stream.standard_normal(n)
    g1 = stream.standard_normal(n)
    e0 = sigma * g0
    e1 = sigma * (rho * g0 + math.sqrt(1 - rho**2) * g1)
    for j in range(5):
        for k in range(5 - j):
            prod = e0**j * e1**k
            se = prod.std() / math.sqrt(n)
            assert abs(prod.mean() - bivariate_normal_moment(j, k, sigma, rho)) <= 3 * max(se, 1e-12)


def test_moment_table_degree_overflow():
    with pytest.raises(ValueError):
        bivariate_normal_moment(3, 2, 1.0, 0.0)
    with pytest.raises(ValueError):
        centered_normal_moment(5, 1.0)


# -- exact kernel action ------------------------------------------------------


def sample_kernel(theta, kappa, x, n, stream):
    """Draw n transitions from the one-step kernel at mother value x."""
    u = stream.random(n)
    g0 = stream.standard_normal(n)
    g1 = stream.standard_normal(n)
    both = u < theta.p10
    new_only = (u >= theta.p10) & (u < theta.p10 + theta.p0)
    old_only = (u >= theta.p10 + theta.p0) & (u < theta.p10 + theta.p0 + theta.p1)
    y = np.where(
        both,
        theta.alpha0 * x + theta.beta0 + kappa.sigma * g0,
        theta.alpha0p * x + theta.beta0p + kappa.sigma0 * g0,
    )
    z = np.where(
        both,
        theta.alpha1 * x
        + theta.beta1
        + kappa.sigma * (kappa.rho * g0 + math.sqrt(1 - kappa.rho**2) * g1),
        theta.alpha1p * x + theta.beta1p + kappa.sigma1 * g0,
    )
    has_y = both | new_only
    has_z = both | old_only
    return np.full(n, float(x)), y, z, has_y, has_z


def kernel_mc_check(theta, kappa, f, xs, stream, n=1_000_000):
    pf = conditional_expectation(theta, kappa, f)
    coefs = pf.poly_in_x()
    for x in xs:
        triple = sample_kernel(theta, kappa, x, n, stream)
        vals = f.eval_arrays(*triple)
        se = vals.std() / math.sqrt(n)
        expected = float(np.polynomial.polynomial.polyval(x, coefs))
        assert abs(vals.mean() - expected) <= 3 * max(se, 1e-9), (f.to_string(), x)


def test_kernel_action_linear_example():
    theta = ModelTheta(0.5, 1.0, -0.3, 2.0, 0.3, 2.0, -0.2, 1.5, 0.5, 0.2, 0.2)
    kappa = ModelKappa(1.0, 0.3, 1.0, 1.0)
    pf = conditional_expectation(theta, kappa, PolySpec.parse("1*y^1"))
    coefs = pf.poly_in_x()
    assert coefs == pytest.approx([0.9, 0.31], abs=1e-12)
    kernel_mc_check(theta, kappa, PolySpec.parse("1*y^1"), [0.0, 1.0, 2.0], _rng.stream(2001, 0))


def test_kernel_action_constant_is_one(theta_star, kappa_star):
    pf = conditional_expectation(theta_star, kappa_star, PolySpec.constant(1.0))
    assert pf.terms == ((0, 0, 0, 1.0),)


def test_kernel_action_product_example(theta_star, kappa_star):
    pf = conditional_expectation(theta_star, kappa_star, PolySpec.parse("1*y^1*z^1"))
    # only the both-alive branch sees both daughters
    t, k = theta_star, kappa_star
    expected = np.polynomial.polynomial.polymul(
        [t.beta0, t.alpha0], [t.beta1, t.alpha1]
    ) * t.p10
    expected[0] += t.p10 * k.rho * k.sigma**2
    assert pf.poly_in_x() == pytest.approx(expected, abs=1e-12)
    kernel_mc_check(theta_star, kappa_star, PolySpec.parse("1*y^1*z^1"), [0.0, 1.0, 2.0], _rng.stream(2002, 0))


def test_kernel_action_degree_overflow(theta_star, kappa_star):
    quartic = PolySpec([(0, 4, 0, 1.0)], max_degree=4)
    conditional_expectation(theta_star, kappa_star, quartic)  # boundary case is fine
    quintic = PolySpec([(0, 5, 0, 1.0)], max_degree=5)
    with pytest.raises(ValueError):
        conditional_expectation(theta_star, kappa_star, quintic)


@st.composite
def polyspecs(draw):
    exponents = st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)).filter(
        lambda e: sum(e) <= 2
    )
    terms = draw(
        st.lists(
            st.tuples(exponents, st.floats(-3, 3)).map(lambda t: (*t[0], t[1])),
            min_size=1,
            max_size=4,
        )
    )
    return PolySpec(terms)


@settings(max_examples=40, deadline=None)
@given(f=polyspecs(), g=polyspecs(), a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_kernel_action_is_linear(f, g, a, b):
    theta = ModelTheta(0.5, 1.0, -0.3, 2.0, 0.4, 0.5, -0.2, 1.5, 0.5, 0.2, 0.2)
    kappa = ModelKappa(1.0, 0.3, 1.0, 1.0)
    combo = f.scale(a) + g.scale(b)
    lhs = conditional_expectation(theta, kappa, combo).poly_in_x()
    pf = conditional_expectation(theta, kappa, f).poly_in_x()
    pg = conditional_expectation(theta, kappa, g).poly_in_x()
    rhs = np.polynomial.polynomial.polyadd(a * pf, b * pg)
    width = max(len(lhs), len(rhs))
    assert np.allclose(np.pad(lhs, (0, width - len(lhs))), np.pad(rhs, (0, width - len(rhs))), atol=1e-9)


def test_random_kernel_oracle(theta_star, kappa_star):
    # three random quadratic specs against the sampled kernel
    stream = _rng.stream(2003, 0)
    for idx in range(3):
        f = random_polyspec(stream)
        kernel_mc_check(theta_star, kappa_star, f, [0.0, 1.0, 2.0], stream, n=400_000)


def random_polyspec(stream) -> PolySpec:
    monomials = [(a, b, c) for a in range(3) for b in range(3) for c in range(3) if a + b + c <= 2]
    picks = stream.choice(len(monomials), size=3, replace=False)
    terms = [(*monomials[p], float(stream.uniform(-2, 2))) for p in picks]
    return PolySpec(terms)
