"""Simulation and inference toolkit for asymmetric autoregressive cell
lineages evolving on a Galton-Watson tree: exact kernel computations,
maximum-likelihood estimation, the aging test, and a seeded Monte-Carlo
harness that checks the asymptotic theory at desk scale."""

__version__ = "0.1.0"

from .backend import backend_name
from .gw import (
    expected_generation_size,
    expected_tree_size,
    extinction_by_generation,
    extinction_probability,
    psi,
    w_laplace,
)
from .model import (
    InitialLaw,
    ModelKappa,
    ModelTheta,
    SimulationSpec,
    load_params,
    mean_offspring,
    params_from_dict,
    params_to_dict,
    save_params,
)
from .polynomials import PolySpec, conditional_expectation, eval_poly
from .averages import (
    Averages,
    RandomOrder,
    averages,
    normalized_fluctuation,
    partial_sum_process,
    sample_random_order,
    sum_over,
    tau,
)
from .inference import (
    AgingTestReport,
    CovarianceReport,
    KappaHat,
    ThetaHat,
    aging_test,
    covariance_matrices,
    estimate_kappa,
    estimate_theta,
    log_likelihood,
    misspecified_constant,
    pooled_aging_test,
    stationary_mean,
    stationary_moment,
)
from .harness import ExperimentReport, ExperimentSpec, run_experiment
from .simulate import Fate, sample_fate, simulate, simulate_auxiliary_chain, w_estimate
from .tree import (
    CellId,
    LineageTree,
    SubtreeCounts,
    child_id,
    generation,
    read_jsonl,
    subtree_counts,
    write_jsonl,
)

__all__ = [
    "AgingTestReport",
    "Averages",
    "CellId",
    "CovarianceReport",
    "ExperimentReport",
    "ExperimentSpec",
    "Fate",
    "InitialLaw",
    "KappaHat",
    "LineageTree",
    "ModelKappa",
    "ModelTheta",
    "PolySpec",
    "RandomOrder",
    "SimulationSpec",
    "SubtreeCounts",
    "ThetaHat",
    "aging_test",
    "averages",
    "backend_name",
    "child_id",
    "conditional_expectation",
    "covariance_matrices",
    "estimate_kappa",
    "estimate_theta",
    "eval_poly",
    "expected_generation_size",
    "expected_tree_size",
    "extinction_by_generation",
    "extinction_probability",
    "generation",
    "load_params",
    "log_likelihood",
    "mean_offspring",
    "misspecified_constant",
    "normalized_fluctuation",
    "params_from_dict",
    "params_to_dict",
    "partial_sum_process",
    "pooled_aging_test",
    "psi",
    "read_jsonl",
    "run_experiment",
    "sample_fate",
    "sample_random_order",
    "save_params",
    "simulate",
    "simulate_auxiliary_chain",
    "stationary_mean",
    "stationary_moment",
    "subtree_counts",
    "sum_over",
    "tau",
    "w_estimate",
    "w_laplace",
    "write_jsonl",
]
