"""Model parameters for the asymmetric autoregressive lineage model.

A dividing cell with trait x leaves, with probability p10, two alive
daughters whose traits are alpha0*x + beta0 + e0 (new pole) and
alpha1*x + beta1 + e1 (old pole), with (e0, e1) centered bivariate normal,
common variance sigma^2 and correlation rho. With probability p0 (resp. p1)
only the new (resp. old) pole survives and follows its own regression with
primed coefficients and noise sigma0 (resp. sigma1). With the remaining
probability both daughters die. The alive subtree is then a Galton-Watson
tree with mean offspring m = 2*p10 + p0 + p1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

THETA_LABELS = (
    "alpha0",
    "beta0",
    "alpha1",
    "beta1",
    "alpha0p",
    "beta0p",
    "alpha1p",
    "beta1p",
    "p10",
    "p0",
    "p1",
)

KAPPA_LABELS = ("sigma", "rho", "sigma0", "sigma1")


@dataclass(frozen=True)
class ModelTheta:
    """Regression and fate parameters (11 components)."""

    alpha0: float
    beta0: float
    alpha1: float
    beta1: float
    alpha0p: float
    beta0p: float
    alpha1p: float
    beta1p: float
    p10: float
    p0: float
    p1: float

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "alpha0p", "alpha1p"):
            v = getattr(self, name)
            if not math.isfinite(v) or not -1 < v < 1:
                raise ValueError(f"{name} must lie in (-1, 1), got {v}")
        for name in ("beta0", "beta1", "beta0p", "beta1p"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("p10", "p0", "p1"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.p10 + self.p0 + self.p1 > 1 + 1e-12:
            raise ValueError(
                f"p10 + p0 + p1 must be <= 1, got {self.p10 + self.p0 + self.p1}"
            )

    @property
    def p_none(self) -> float:
        return max(0.0, 1.0 - self.p10 - self.p0 - self.p1)

    @property
    def is_supercritical(self) -> bool:
        return mean_offspring(self) > 1.0

    def as_vector(self) -> list[float]:
        """Components in the canonical label order."""
        return [getattr(self, name) for name in THETA_LABELS]


@dataclass(frozen=True)
class ModelKappa:
    """Noise parameters: common both-alive scale/correlation plus the two
    single-survivor scales."""

    sigma: float
    rho: float
    sigma0: float
    sigma1: float

    def __post_init__(self):
        for name in ("sigma", "sigma0", "sigma1"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if not math.isfinite(self.rho) or not -1 < self.rho < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")


def mean_offspring(theta: ModelTheta) -> float:
    """Mean number of alive daughters, m = 2*p10 + p0 + p1."""
    return 2.0 * theta.p10 + theta.p0 + theta.p1


def require_supercritical(theta: ModelTheta) -> float:
    """Return m, raising when m <= 1 (asymptotics need supercriticality)."""
    m = mean_offspring(theta)
    if m <= 1.0:
        raise ValueError(f"model is not supercritical: m = {m} <= 1")
    return m


def mixture_components(theta: ModelTheta, kappa: ModelKappa):
    """Branches ``(weight, alpha, beta, sigma)`` of the single-lineage chain.

    A uniformly chosen alive cell sees its mother's regression drawn from
    this mixture: each both-alive pole with weight p10/m and each
    single-survivor branch with weight p_delta/m.
    """
    m = require_supercritical(theta)
    return (
        (theta.p10 / m, theta.alpha0, theta.beta0, kappa.sigma),
        (theta.p10 / m, theta.alpha1, theta.beta1, kappa.sigma),
        (theta.p0 / m, theta.alpha0p, theta.beta0p, kappa.sigma0),
        (theta.p1 / m, theta.alpha1p, theta.beta1p, kappa.sigma1),
    )


@dataclass(frozen=True)
class InitialLaw:
    """Root trait distribution: a constant or a normal law."""

    kind: str
    value: float = 0.0
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "normal"):
            raise ValueError(f"initial law kind must be constant or normal, got {self.kind!r}")
        if self.kind == "constant" and not math.isfinite(self.value):
            raise ValueError("constant initial value must be finite")
        if self.kind == "normal":
            if not math.isfinite(self.mean):
                raise ValueError("normal initial mean must be finite")
            if not (math.isfinite(self.sd) and self.sd >= 0):
                raise ValueError("normal initial sd must be >= 0")

    @classmethod
    def constant(cls, value: float) -> "InitialLaw":
        return cls("constant", value=value)

    @classmethod
    def normal(cls, mean: float, sd: float) -> "InitialLaw":
        return cls("normal", mean=mean, sd=sd)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "normal", "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, obj: dict) -> "InitialLaw":
        kind = obj.get("kind")
        if kind == "constant":
            return cls.constant(float(obj["value"]))
        if kind == "normal":
            return cls.normal(float(obj["mean"]), float(obj["sd"]))
        raise ValueError(f"unknown initial law {obj!r}")


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate: depth cap, master seed and root distribution."""

    max_generation: int
    seed: int
    initial: InitialLaw

    def __post_init__(self):
        if not 0 <= self.max_generation <= 62:
            raise ValueError(f"max_generation must be in [0, 62], got {self.max_generation}")


# -- parameter file interchange ------------------------------------------

_PARAM_KEYS = THETA_LABELS + KAPPA_LABELS


def params_to_dict(theta: ModelTheta, kappa: ModelKappa) -> dict:
    out = asdict(theta)
    out.update(asdict(kappa))
    return out


def params_from_dict(obj: dict) -> tuple[ModelTheta, ModelKappa]:
    """Build (theta, kappa) from a flat mapping, naming any offending key."""
    if not isinstance(obj, dict):
        raise ValueError("parameter file must contain a JSON object")
    for key in _PARAM_KEYS:
        if key not in obj:
            raise ValueError(f"missing parameter key: {key}")
        v = obj[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ValueError(f"parameter {key} must be a finite number, got {v!r}")
    unknown = set(obj) - set(_PARAM_KEYS)
    if unknown:
        raise ValueError(f"unknown parameter key: {sorted(unknown)[0]}")
    try:
        theta = ModelTheta(**{f.name: float(obj[f.name]) for f in fields(ModelTheta)})
        kappa = ModelKappa(**{f.name: float(obj[f.name]) for f in fields(ModelKappa)})
    except ValueError as exc:
        raise ValueError(f"invalid parameters: {exc}") from None
    return theta, kappa


def load_params(path) -> tuple[ModelTheta, ModelKappa]:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    return params_from_dict(obj)


def save_params(theta: ModelTheta, kappa: ModelKappa, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(theta, kappa), fh, indent=2, sort_keys=True)
        fh.write("\n")
