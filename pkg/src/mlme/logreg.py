"""Instance-weighted, L2-regularized binary logistic regression.

This is the conditional-probability primitive for every tree node and the
building block for structure scoring.  The bias (index 0) is never
regularized.  Optimization uses a limited-memory quasi-Newton method behind
``OptimizerConfig``; the objective/gradient pair is analytic and is checked
against finite differences in the test suite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .dataset import Dataset, as_weight_array, split_folds
from .errors import ArgumentError, NumericError


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    memory: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ArgumentError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0:
            raise ArgumentError("gradient_tolerance must be > 0")


DEFAULT_OPTIMIZER = OptimizerConfig()
DEFAULT_LAMBDA_GRID = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class LinearModel:
    """A trained logistic model: params (bias at index 0) plus its L2 strength."""

    params: np.ndarray
    lam: float

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64, order="C")
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise ArgumentError("params must be a finite 1-D vector")
        if self.lam < 0:
            raise ArgumentError("lambda must be >= 0")
        p.flags.writeable = False
        object.__setattr__(self, "params", p)


def log_sigmoid(z):
    """log(sigma(z)), stable for large |z|: -log(1 + e^-z)."""
    return -np.logaddexp(0.0, -z)


def sigmoid(z):
    return np.exp(log_sigmoid(z))


def predict_prob(model: LinearModel, x: np.ndarray) -> float:
    """P(t=1 | x) = sigma(params . x); strictly inside (0,1) barring underflow."""
    return float(sigmoid(model.params @ np.asarray(x, dtype=np.float64)))


def predict_log_prob(model: LinearModel, x: np.ndarray, t: int) -> float:
    """log P(t | x) via the symmetric form log sigma(+-z); never NaN."""
    z = model.params @ np.asarray(x, dtype=np.float64)
    return float(log_sigmoid(z if t == 1 else -z))


def objective_and_gradient(params, X, t, w, lam):
    """Weighted log-likelihood minus the L2 penalty, with its exact gradient.

    value = sum_n w_n [t_n log sigma(z_n) + (1-t_n) log sigma(-z_n)]
            - lam/2 * ||params[1:]||^2         (bias unpenalized)
    """
    params = np.asarray(params, dtype=np.float64)
    z = X @ params
    ll = np.where(t == 1, log_sigmoid(z), log_sigmoid(-z))
    p = sigmoid(z)
    value = float(w @ ll)
    grad = X.T @ (w * (t - p))
    value -= 0.5 * lam * float(params[1:] @ params[1:])
    grad[1:] -= lam * params[1:]
    return value, grad


def train_weighted(
    X: np.ndarray,
    t: np.ndarray,
    w,
    lam: float,
    cfg: OptimizerConfig = DEFAULT_OPTIMIZER,
    x0: np.ndarray | None = None,
) -> LinearModel:
    """Maximize the weighted, penalized log-likelihood over params.

    Instances with zero weight do not influence the fit.  Degenerate targets
    (no effective instances, or all effective targets equal) still have a
    finite optimum thanks to the penalty; a RuntimeWarning is surfaced.
    """
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    w = as_weight_array(w, X.shape[0])
    if lam < 0:
        raise ArgumentError("lambda must be >= 0")
    if t.shape[0] != X.shape[0]:
        raise ArgumentError("target length does not match feature rows")

    effective = t[w > 0]
    if effective.size == 0:
        warnings.warn("training set has no effective (positive-weight) instances",
                      RuntimeWarning, stacklevel=2)
    elif np.all(effective == effective[0]):
        warnings.warn("all effective targets are identical; fit is penalty-driven",
                      RuntimeWarning, stacklevel=2)

    start = np.zeros(X.shape[1]) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    n_evals = [0]

    def neg(params):
        n_evals[0] += 1
        value, grad = objective_and_gradient(params, X, t, w, lam)
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite objective at evaluation {n_evals[0]}")
        return -value, -grad

    res = minimize(
        neg,
        start,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": cfg.max_iterations,
            "maxcor": cfg.memory,
            "gtol": cfg.gradient_tolerance,
            "ftol": 1e-14,
        },
    )
    return LinearModel(res.x, lam)


def select_lambda(
    data: Dataset,
    grid=DEFAULT_LAMBDA_GRID,
    folds: int = 3,
    seed: int = 0,
    cfg: OptimizerConfig = DEFAULT_OPTIMIZER,
) -> float:
    """Pick one L2 strength by k-fold CV on per-label logistic regressions.

    Scores each grid value by summed held-out log-likelihood across all d
    labels; ties go to the smaller (less trusting) lambda.
    """
    if not grid:
        raise ArgumentError("lambda grid must be nonempty")
    if len(grid) == 1:
        return float(grid[0])
    n_folds = min(folds, data.n)
    if n_folds < 2:
        return float(sorted(grid)[0])
    scores = {float(g): 0.0 for g in grid}
    for train, test in split_folds(data, n_folds, seed):
        ones = np.ones(train.n)
        for lam in scores:
            for i in range(train.d):
                model = train_weighted(train.features, train.labels[:, i],
                                       ones, lam, cfg)
                z = test.features @ model.params
                lp = np.where(test.labels[:, i] == 1, log_sigmoid(z), log_sigmoid(-z))
                scores[lam] += float(lp.sum())
    best = max(sorted(scores), key=lambda g: (scores[g], -g))
    return best


__all__ = [
    "LinearModel",
    "OptimizerConfig",
    "DEFAULT_OPTIMIZER",
    "DEFAULT_LAMBDA_GRID",
    "log_sigmoid",
    "sigmoid",
    "predict_prob",
    "predict_log_prob",
    "objective_and_gradient",
    "train_weighted",
    "select_lambda",
]
