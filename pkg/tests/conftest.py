import pytest

from gwbar import CellId, InitialLaw, LineageTree, ModelKappa, ModelTheta


@pytest.fixture
def theta_star() -> ModelTheta:
    """Reference parameter set used across the statistical tests (m=1.4)."""
    return ModelTheta(
        alpha0=0.5,
        beta0=1.0,
        alpha1=-0.3,
        beta1=2.0,
        alpha0p=0.4,
        beta0p=0.5,
        alpha1p=-0.2,
        beta1p=1.5,
        p10=0.5,
        p0=0.2,
        p1=0.2,
    )


@pytest.fixture
def kappa_star() -> ModelKappa:
    return ModelKappa(sigma=1.0, rho=0.3, sigma0=1.0, sigma1=1.0)


@pytest.fixture
def stationary_initial() -> InitialLaw:
    # mu_1 for theta_star/kappa_star
    return InitialLaw.constant(1.507936507936508)


def build_tree(cells: dict[str, float]) -> LineageTree:
    return LineageTree({CellId.from_string(path): value for path, value in cells.items()})


@pytest.fixture
def affine_tree() -> LineageTree:
    """Zero-residual fixture: three both-alive mothers with x in {0, 1, 2},
    new-pole daughters following y = 0.5 x + 1 and old-pole z = 0.5 x + 2."""
    return build_tree(
        {
            "": 0.0,
            "0": 1.0,
            "1": 2.0,
            "00": 1.5,
            "01": 2.5,
            "10": 2.0,
            "11": 3.0,
        }
    )
