"""
Loss families with analytic constants on a declared compact domain.

All value and gradient functions broadcast over leading axes: `w` of shape (..., dim)
against samples `x` of shape (..., dim) and labels `y` of shape (...), which is how the
engine evaluates every node's local gradient in one call.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import PartitionedDataset
from .errors import ConfigError, ConvergenceError, ShapeError, UnsupportedError, ValidationError
from .models import LossConfig, LossFamily

logger = logging.getLogger(__name__)

# |φ'| and |φ''| maxima of φ(u) = u²/(1+u²), attained at u = 1/√3 and u = 0
SATURATING_SLOPE = 3.0 * math.sqrt(3.0) / 8.0
SATURATING_CURVATURE = 2.0

MAX_ORACLE_ITERATIONS = 10**6
MIN_ORACLE_STEP = 1e-16
ARMIJO_RESOLUTION = 1e-12
PL_SLACK = 1e-9


@dataclass(frozen=True)
class LossConstants:
    """Lipschitz (L), smoothness (β), strong convexity (μ), PL (γ) and value (M) constants."""

    L: float
    beta: float
    mu: float
    gamma: float
    M: float

    def to_dict(self) -> dict[str, float]:
        return {"L": self.L, "beta": self.beta, "mu": self.mu, "gamma": self.gamma, "M": self.M}


@dataclass(frozen=True)
class LossModel:
    """Loss family on the ball of radius `domain_radius` with features bounded by `feature_bound`."""

    family: LossFamily
    dim: int
    domain_radius: float | None = None
    feature_bound: float | None = None
    mu: float = 0.0
    label_bound: float = 1.0

    def __post_init__(self):
        problems = []
        if self.dim < 1:
            problems.append(f"dim must be positive, got {self.dim}")
        if self.mu < 0:
            problems.append(f"mu must be nonnegative, got {self.mu}")
        if self.family == LossFamily.QUADRATIC and self.mu <= 0:
            problems.append("quadratic family needs mu > 0")
        if self.family in (LossFamily.LOGISTIC, LossFamily.SATURATING_NONCONVEX) and self.mu:
            problems.append(f"{self.family.value} family has mu = 0")
        if problems:
            raise ValidationError("invalid loss model", problems)

    @classmethod
    def from_config(cls, config: LossConfig, dim: int) -> "LossModel":
        return cls(
            family=config.family,
            dim=dim,
            domain_radius=config.domain_radius,
            feature_bound=config.feature_bound,
            mu=config.mu,
            label_bound=config.label_bound,
        )

    @property
    def convex(self) -> bool:
        return self.family != LossFamily.SATURATING_NONCONVEX

    @property
    def strongly_convex(self) -> bool:
        return self.family in (LossFamily.RIDGE_LOGISTIC, LossFamily.QUADRATIC) and self.mu > 0

    @property
    def lipschitz_is_local(self) -> bool:
        """True when L holds only on the declared ball (gradients grow with ‖w‖)."""
        return self.family == LossFamily.QUADRATIC or (
            self.family == LossFamily.RIDGE_LOGISTIC and self.mu > 0
        )

    def constants(self) -> LossConstants:
        return constants(self)

    def describe(self) -> dict[str, object]:
        return {
            "family": self.family.value,
            "dim": self.dim,
            "domain_radius": self.domain_radius,
            "feature_bound": self.feature_bound,
            "mu": self.mu,
            "label_bound": self.label_bound,
        }


def _check(model: LossModel, w: np.ndarray, x: np.ndarray) -> None:
    if w.shape[-1] != model.dim or x.shape[-1] != model.dim:
        raise ShapeError(
            "dimension mismatch", [f"w {w.shape}, x {x.shape}, model dim {model.dim}"]
        )


def _margin(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("...d,...d->...", x, w)


def loss_eval(model: LossModel, w, x, y) -> np.ndarray:
    """f(w; (x, y)), broadcast over leading axes.

    Raises:
        ShapeError: w or x does not match model.dim
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check(model, w, x)
    u = _margin(w, x)
    if model.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        value = np.logaddexp(0.0, -y * u)
        if model.family == LossFamily.RIDGE_LOGISTIC and model.mu:
            value = value + 0.5 * model.mu * np.einsum("...d,...d->...", w, w)
        return value
    residual = u - y
    if model.family == LossFamily.QUADRATIC:
        return 0.5 * model.mu * residual**2
    return residual**2 / (1.0 + residual**2)


def loss_grad(model: LossModel, w, x, y) -> np.ndarray:
    """Analytic gradient of loss_eval with respect to w."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check(model, w, x)
    u = _margin(w, x)
    if model.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        scale = -y * expit(-y * u)
        grad = scale[..., None] * x
        if model.family == LossFamily.RIDGE_LOGISTIC and model.mu:
            grad = grad + model.mu * w
        return grad
    residual = u - y
    if model.family == LossFamily.QUADRATIC:
        scale = model.mu * residual
    else:
        scale = 2.0 * residual / (1.0 + residual**2) ** 2
    return scale[..., None] * x


def constants(model: LossModel) -> LossConstants:
    """Analytic L, β, μ, γ, M on the declared domain.

    Raises:
        ConfigError: feature bound (or, where the constants need it, domain radius) unset
    """
    B = model.feature_bound
    W = model.domain_radius
    if B is None:
        raise ConfigError(f"{model.family.value} constants need a feature bound")
    if model.family == LossFamily.SATURATING_NONCONVEX:
        return LossConstants(
            L=B * SATURATING_SLOPE, beta=SATURATING_CURVATURE * B**2, mu=0.0, gamma=0.0, M=1.0
        )
    if W is None:
        raise ConfigError(f"{model.family.value} constants need a domain radius")

    mu = model.mu
    if model.family == LossFamily.QUADRATIC:
        reach = B * W + model.label_bound
        return LossConstants(
            L=mu * B * reach, beta=mu * B**2, mu=mu, gamma=mu / 2.0, M=0.5 * mu * reach**2
        )
    M = float(np.logaddexp(0.0, B * W))
    if model.family == LossFamily.LOGISTIC:
        return LossConstants(L=B, beta=B**2 / 4.0, mu=0.0, gamma=0.0, M=M)
    return LossConstants(
        L=B + mu * W,
        beta=B**2 / 4.0 + mu,
        mu=mu,
        gamma=mu / 2.0,
        M=M + 0.5 * mu * W**2,
    )


def project(w, radius: float) -> np.ndarray:
    """Euclidean projection onto the ball of the given radius, row-wise for stacked weights."""
    w = np.asarray(w, dtype=float)
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return w * scale


def _check_dataset(model: LossModel, dataset: PartitionedDataset) -> None:
    if dataset.dim != model.dim:
        raise ShapeError(f"dataset dim {dataset.dim} does not match model dim {model.dim}")


def empirical_risk(model: LossModel, dataset: PartitionedDataset, w, node: int | None = None) -> float:
    """R_S(w), or R_{S_r}(w) for a 1-based node."""
    _check_dataset(model, dataset)
    x, y = dataset.node(node) if node else dataset.flat()
    return float(np.mean(loss_eval(model, w, x, y)))


def empirical_grad(model: LossModel, dataset: PartitionedDataset, w, node: int | None = None) -> np.ndarray:
    """∇R_S(w), or ∇R_{S_r}(w) for a 1-based node."""
    _check_dataset(model, dataset)
    x, y = dataset.node(node) if node else dataset.flat()
    return loss_grad(model, w, x, y).mean(axis=0)


def exact_variance(model: LossModel, dataset: PartitionedDataset, w) -> float:
    """E‖(1/m)Σᵢ∇f(w; Z_{j(i)}) − ∇R_S(w)‖² over independent uniform per-node draws.

    Equals (1/m²)Σᵢ Var_k[∇f(w; Z_{k(i)})]; costs mn gradient evaluations.
    """
    _check_dataset(model, dataset)
    grads = loss_grad(model, w, dataset.features, dataset.labels)
    centered = grads - grads.mean(axis=1, keepdims=True)
    node_variance = np.einsum("mnd,mnd->m", centered, centered) / dataset.n
    return float(node_variance.sum() / dataset.m**2)


@dataclass(frozen=True)
class MinimizerResult:
    """Full-batch minimizer w*_R with its risk and final gradient norm."""

    w: np.ndarray
    risk: float
    grad_norm: float
    iterations: int


def _smoothness(model: LossModel) -> float | None:
    if model.feature_bound is None:
        return None
    try:
        beta = constants(model).beta
    except ConfigError:
        return None
    return beta if beta > 0 else None


def minimizer_oracle(
    model: LossModel,
    dataset: PartitionedDataset,
    tol: float = 1e-10,
    max_iterations: int = MAX_ORACLE_ITERATIONS,
    initial_w=None,
) -> MinimizerResult:
    """Full-batch gradient descent with Armijo backtracking until ‖∇R_S‖ ≤ tol.

    With β known, backtracking stops at 1/β, and the step is fixed at 1/β once the required
    decrease drops below float resolution of the risk.

    Raises:
        UnsupportedError: nonconvex family
        ConvergenceError: iteration cap exceeded
    """
    if not model.convex:
        raise UnsupportedError(f"no minimizer oracle for {model.family.value}")
    w = np.zeros(model.dim) if initial_w is None else np.array(initial_w, dtype=float)
    risk = empirical_risk(model, dataset, w)
    grad = empirical_grad(model, dataset, w)
    norm = float(np.linalg.norm(grad))
    beta = _smoothness(model)
    floor = 1.0 / beta if beta is not None else MIN_ORACLE_STEP
    rate = floor if beta is not None else 1.0
    for iteration in range(max_iterations):
        if norm <= tol:
            logger.debug(f"Minimizer converged in {iteration} iterations (risk={risk:.12g})")
            return MinimizerResult(w=w, risk=risk, grad_norm=norm, iterations=iteration)
        resolvable = 0.5 * floor * norm**2 > ARMIJO_RESOLUTION * max(1.0, abs(risk))
        step = 2.0 * rate if beta is None or resolvable else floor
        while True:
            candidate = w - step * grad
            candidate_risk = empirical_risk(model, dataset, candidate)
            if step <= floor or candidate_risk <= risk - 0.5 * step * norm**2:
                break
            step = max(0.5 * step, floor)
        w, risk = candidate, candidate_risk
        grad = empirical_grad(model, dataset, w)
        norm = float(np.linalg.norm(grad))
        rate = step
    raise ConvergenceError(f"gradient norm {norm:.3e} above {tol:.1e} after {max_iterations} iterations")


def pl_check(
    model: LossModel,
    dataset: PartitionedDataset,
    w,
    gamma: float,
    w_star_risk: float,
) -> bool:
    """Whether R_S(w) − R_S(w*) ≤ ‖∇R_S(w)‖²/(4γ) holds at w (additive slack 1e-9).

    Raises:
        ValidationError: gamma is not positive
    """
    if gamma <= 0:
        raise ValidationError(f"PL constant must be positive, got gamma={gamma}")
    gap = empirical_risk(model, dataset, w) - w_star_risk
    grad = empirical_grad(model, dataset, w)
    return bool(gap <= float(grad @ grad) / (4.0 * gamma) + PL_SLACK)
