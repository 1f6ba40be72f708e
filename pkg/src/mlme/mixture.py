"""Mixtures of CTBN experts: softmax gating, EM fitting, and boosted growth.

The mixture distribution is P(y|x) = sum_k g_k(x) P(y|x, expert_k) with a
softmax gate over linear scores.  Parameters are fit by EM on fixed
structures; the number of experts grows one tree at a time on reweighted
data, with an internal validation split deciding when to stop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import ctbn
from .ctbn import CtbnExpert, TreeStructure, train_parameters
from .dataset import Dataset, holdout_split
from .errors import ArgumentError, EmMonotonicityError, NumericError
from .logreg import (
    DEFAULT_LAMBDA_GRID,
    DEFAULT_OPTIMIZER,
    OptimizerConfig,
    select_lambda,
)
from .structlearn import learn_structure


@dataclass(frozen=True)
class GatingModel:
    """Softmax gate parameters, one (m+1)-vector per expert."""

    theta: np.ndarray  # (K, m+1)

    def __post_init__(self):
        t = np.array(self.theta, dtype=np.float64, order="C")
        if t.ndim != 2 or t.shape[0] < 1:
            raise ArgumentError("gate parameters must be a (K, m+1) matrix, K >= 1")
        if not np.all(np.isfinite(t)):
            raise ArgumentError("gate parameters must be finite")
        t.flags.writeable = False
        object.__setattr__(self, "theta", t)

    @property
    def k(self) -> int:
        return self.theta.shape[0]


def gating_log_probs(gate: GatingModel, x: np.ndarray) -> np.ndarray:
    """Log-softmax of the gate scores; entries sum to 1 in prob space."""
    z = gate.theta @ np.asarray(x, dtype=np.float64)
    return z - logsumexp(z)


def gating_probs(gate: GatingModel, x: np.ndarray) -> np.ndarray:
    return np.exp(gating_log_probs(gate, x))


@dataclass(frozen=True)
class MixtureModel:
    """K CTBN experts plus their gate; immutable once assembled."""

    experts: tuple[CtbnExpert, ...]
    gating: GatingModel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "experts", tuple(self.experts))
        if not self.experts:
            raise ArgumentError("mixture needs at least one expert")
        if self.gating.k != len(self.experts):
            raise ArgumentError("gate row count must equal expert count")
        dims = {(e.d, e.n_features) for e in self.experts}
        if len(dims) != 1:
            raise ArgumentError("experts must share label and feature dimensions")
        if self.gating.theta.shape[1] != self.experts[0].n_features:
            raise ArgumentError("gate and expert feature dimensions differ")

    @property
    def k(self) -> int:
        return len(self.experts)

    @property
    def d(self) -> int:
        return self.experts[0].d

    @property
    def n_features(self) -> int:
        return self.experts[0].n_features


def expert_log_prob_matrix(model: MixtureModel, data: Dataset) -> np.ndarray:
    """(N, K) joint log-likelihood of each instance under each expert."""
    return np.column_stack([ctbn.log_likelihoods(e, data) for e in model.experts])


def component_log_prob_matrix(model: MixtureModel, data: Dataset) -> np.ndarray:
    """(N, K) of log g_k(x_n) + log P(y_n | x_n, expert_k)."""
    Z = data.features @ model.gating.theta.T
    log_g = Z - logsumexp(Z, axis=1, keepdims=True)
    return log_g + expert_log_prob_matrix(model, data)


def mixture_log_prob(model: MixtureModel, x: np.ndarray, y) -> float:
    """log sum_k g_k(x) P(y | x, expert_k), evaluated by log-sum-exp."""
    lg = gating_log_probs(model.gating, x)
    ll = np.array([ctbn.joint_log_prob(e, x, y) for e in model.experts])
    return float(logsumexp(lg + ll))


def instance_log_probs(model: MixtureModel, data: Dataset) -> np.ndarray:
    """(N,) mixture log-probability of every instance's label vector."""
    return logsumexp(component_log_prob_matrix(model, data), axis=1)


def observed_log_likelihood(model: MixtureModel, data: Dataset) -> float:
    return float(instance_log_probs(model, data).sum())


def model_penalty(model: MixtureModel, lam_gate: float) -> float:
    """L2 penalties of all CPDs (bias-free) plus the gate."""
    pen = 0.5 * lam_gate * float((model.gating.theta ** 2).sum())
    for expert in model.experts:
        for models in expert.cpds:
            for m in models:
                pen += 0.5 * m.lam * float(m.params[1:] @ m.params[1:])
    return pen


def penalized_objective(model: MixtureModel, data: Dataset, lam_gate: float) -> float:
    """Observed log-likelihood minus all regularization penalties."""
    return observed_log_likelihood(model, data) - model_penalty(model, lam_gate)


def e_step(model: MixtureModel, data: Dataset) -> np.ndarray:
    """Posterior responsibility of each expert for each instance (rows sum to 1)."""
    L = component_log_prob_matrix(model, data)
    return np.exp(L - logsumexp(L, axis=1, keepdims=True))


def gate_objective_and_gradient(theta_flat, X, h, lam_gate):
    """Expected gate log-likelihood minus L2 penalty, with exact gradient.

    value = sum_{n,k} h[n,k] log g_k(x_n) - lam_gate/2 * ||theta||^2
    The gradient row for expert j is X^T (h_j - g_j) - lam_gate * theta_j.
    """
    n, p = X.shape
    K = h.shape[1]
    theta = np.asarray(theta_flat, dtype=np.float64).reshape(K, p)
    Z = X @ theta.T
    lse = logsumexp(Z, axis=1)
    value = float((h * Z).sum() - lse.sum())
    value -= 0.5 * lam_gate * float((theta ** 2).sum())
    P = np.exp(Z - lse[:, None])
    grad = (h - P).T @ X - lam_gate * theta
    return value, grad.ravel()


def m_step_gate(
    h: np.ndarray,
    data: Dataset,
    lam_gate: float,
    cfg: OptimizerConfig = DEFAULT_OPTIMIZER,
    x0: Optional[GatingModel] = None,
) -> GatingModel:
    """Maximize the (concave) expected gate log-likelihood with L2 penalty."""
    h = np.asarray(h, dtype=np.float64)
    K = h.shape[1]
    p = data.features.shape[1]
    if h.shape[0] != data.n:
        raise ArgumentError("responsibility rows must match instance count")
    if K == 1:
        # a single expert always gets gate probability 1; zeros by convention
        return GatingModel(np.zeros((1, p)))
    start = np.zeros(K * p) if x0 is None else x0.theta.ravel().copy()
    X = data.features
    n_evals = [0]

    def neg(theta_flat):
        n_evals[0] += 1
        value, grad = gate_objective_and_gradient(theta_flat, X, h, lam_gate)
        if not np.isfinite(value):
            raise NumericError(f"non-finite gate objective at evaluation {n_evals[0]}")
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
    return GatingModel(res.x.reshape(K, p))


def m_step_experts(
    h: np.ndarray,
    data: Dataset,
    structures: Sequence[TreeStructure],
    lam: float,
    cfg: OptimizerConfig = DEFAULT_OPTIMIZER,
    init: Optional[Sequence[CtbnExpert]] = None,
) -> tuple[CtbnExpert, ...]:
    """Refit every expert's CPDs with its responsibility column as weights."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[1] != len(structures):
        raise ArgumentError("responsibility columns must match structure count")
    experts = []
    for k, structure in enumerate(structures):
        warm = init[k] if init is not None else None
        experts.append(
            train_parameters(structure, data, h[:, k], lam, cfg, init=warm))
    return tuple(experts)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for EM fitting and mixture growth."""

    max_experts: int = 5
    lam: Optional[float] = None              # CPD/edge L2; None -> pick from grid
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    lam_gate: Optional[float] = None         # None -> same as lam
    holdout_ratio: float = 0.25              # structure-scoring split
    internal_test_ratio: float = 0.2         # growth stopping split
    em_tol: float = 1e-5                     # relative objective improvement
    em_max_iters: int = 100
    optimizer: OptimizerConfig = DEFAULT_OPTIMIZER
    seed: int = 0

    def __post_init__(self):
        if self.max_experts < 1:
            raise ArgumentError("max_experts must be >= 1")
        if self.em_max_iters < 1:
            raise ArgumentError("em_max_iters must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_experts": self.max_experts,
            "lambda": self.lam,
            "lambda_grid": list(self.lambda_grid),
            "lambda_gate": self.lam_gate,
            "holdout_ratio": self.holdout_ratio,
            "internal_test_ratio": self.internal_test_ratio,
            "em_tol": self.em_tol,
            "em_max_iters": self.em_max_iters,
            "optimizer": {
                "max_iterations": self.optimizer.max_iterations,
                "gradient_tolerance": self.optimizer.gradient_tolerance,
                "memory": self.optimizer.memory,
            },
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EmResult:
    model: MixtureModel
    objective_trace: tuple[float, ...]


def _tagged_seed(base: int, *tags: int) -> int:
    """Independent deterministic child seed for a named sub-computation."""
    return int(np.random.SeedSequence(base, spawn_key=tags).generate_state(1)[0])


def _resolve_lambdas(data, config, lam, lam_gate):
    if lam is None:
        lam = config.lam
    if lam is None:
        lam = select_lambda(data, config.lambda_grid,
                            seed=_tagged_seed(config.seed, 0),
                            cfg=config.optimizer)
    if lam_gate is None:
        lam_gate = config.lam_gate if config.lam_gate is not None else lam
    return float(lam), float(lam_gate)


def em_fit(
    structures: Sequence[TreeStructure],
    data: Dataset,
    config: TrainConfig = TrainConfig(),
    lam: Optional[float] = None,
    lam_gate: Optional[float] = None,
    init_model: Optional[MixtureModel] = None,
    init_responsibilities: Optional[np.ndarray] = None,
) -> EmResult:
    """Alternate E- and M-steps on fixed structures until convergence.

    The trace records the regularized observed log-likelihood after the
    initialization and after every EM iteration; it must never decrease by
    more than 1e-6 (anything larger is an internal-consistency failure).
    Initialization: ``init_responsibilities`` triggers an immediate M-step
    from those assignments (warm-starting optimizers from ``init_model`` if
    given); otherwise ``init_model`` is used as-is; otherwise a first M-step
    runs from seeded, slightly perturbed uniform responsibilities.
    """
    structures = list(structures)
    if not structures:
        raise ArgumentError("need at least one structure")
    K = len(structures)
    lam, lam_gate = _resolve_lambdas(data, config, lam, lam_gate)
    if init_model is not None and init_model.k != K:
        raise ArgumentError("init_model expert count must match structures")

    if init_responsibilities is None and init_model is not None:
        model = init_model
    else:
        if init_responsibilities is not None:
            h0 = np.asarray(init_responsibilities, dtype=np.float64)
            if h0.shape != (data.n, K):
                raise ArgumentError("init responsibilities must be (N, K)")
        else:
            rng = np.random.default_rng(_tagged_seed(config.seed, 1))
            h0 = 1.0 + 0.01 * rng.random((data.n, K))
            h0 /= h0.sum(axis=1, keepdims=True)
        warm_gate = init_model.gating if init_model is not None else None
        warm_experts = init_model.experts if init_model is not None else None
        gate = m_step_gate(h0, data, lam_gate, config.optimizer, x0=warm_gate)
        experts = m_step_experts(h0, data, structures, lam, config.optimizer,
                                 init=warm_experts)
        model = MixtureModel(experts, gate)

    obj = penalized_objective(model, data, lam_gate)
    trace = [obj]
    for _ in range(config.em_max_iters):
        h = e_step(model, data)
        gate = m_step_gate(h, data, lam_gate, config.optimizer, x0=model.gating)
        experts = m_step_experts(h, data, structures, lam, config.optimizer,
                                 init=model.experts)
        model = MixtureModel(experts, gate)
        new_obj = penalized_objective(model, data, lam_gate)
        if new_obj < obj - 1e-6:
            raise EmMonotonicityError(
                f"EM objective decreased from {obj:.9f} to {new_obj:.9f}")
        trace.append(new_obj)
        improved = new_obj - obj
        obj = new_obj
        if improved < config.em_tol * max(1.0, abs(obj)):
            break
    return EmResult(model, tuple(trace))


def grow_mixture(data: Dataset, config: TrainConfig = TrainConfig()) -> MixtureModel:
    """Grow a mixture one tree at a time on residual-weighted data.

    Instances start uniformly weighted; each round learns a structure on the
    current weights, refits the enlarged mixture by EM on an internal train
    split, and keeps it only while the internal test log-likelihood does not
    get worse.  Weights for the next round are the renormalized prediction
    error margins 1 - P(y|x, mixture).  Finally the accepted structures are
    refit on the full data; the returned model's meta carries the full
    growth log.
    """
    if data.n < 5:
        raise ArgumentError("mixture growth needs at least 5 instances")
    lam, lam_gate = _resolve_lambdas(data, config, None, None)
    (itr, _), (ite, _) = holdout_split(
        data, np.ones(data.n), config.internal_test_ratio,
        _tagged_seed(config.seed, 2))

    omega = np.full(itr.n, 1.0 / itr.n)
    margins: Optional[np.ndarray] = None
    accepted: list[TreeStructure] = []
    current: Optional[MixtureModel] = None
    current_test_ll = -np.inf
    rounds = []

    for k in range(1, config.max_experts + 1):
        structure = learn_structure(
            itr, omega, lam, config.holdout_ratio,
            seed=_tagged_seed(config.seed, 3, k), cfg=config.optimizer)
        if current is None:
            init = None
            init_h = None
        else:
            # the new expert starts out owning the poorly-explained mass:
            # its responsibility column is the error margin, the previous
            # experts share the remainder in their current posterior ratios
            new_expert = train_parameters(
                structure, itr, omega * itr.n, lam, config.optimizer)
            gate = GatingModel(np.vstack(
                [current.gating.theta, np.zeros((1, data.features.shape[1]))]))
            init = MixtureModel(current.experts + (new_expert,), gate)
            h_prev = e_step(current, itr)
            init_h = np.hstack(
                [(1.0 - margins)[:, None] * h_prev, margins[:, None]])
        fit = em_fit(accepted + [structure], itr, config,
                     lam=lam, lam_gate=lam_gate, init_model=init,
                     init_responsibilities=init_h)
        test_ll = observed_log_likelihood(fit.model, ite)
        entry = {
            "k": k,
            "parent": [None if p is None else int(p) for p in structure.parent],
            "internal_test_ll": float(test_ll),
            "em_trace": [float(v) for v in fit.objective_trace],
        }
        if current is not None and test_ll < current_test_ll:
            entry["accepted"] = False
            rounds.append(entry)
            break
        entry["accepted"] = True
        rounds.append(entry)
        accepted.append(structure)
        current = fit.model
        current_test_ll = test_ll
        if k == config.max_experts:
            break
        margins = np.clip(1.0 - np.exp(instance_log_probs(current, itr)), 0.0, 1.0)
        total = margins.sum()
        if total <= 1e-12:
            rounds.append({"k": k + 1, "stopped": "zero residual weights"})
            break
        omega = margins / total

    final = em_fit(accepted, data, config,
                   lam=lam, lam_gate=lam_gate, init_model=current)
    meta = {
        "m": data.m,
        "d": data.d,
        "k": len(accepted),
        "lambda": lam,
        "lambda_gate": lam_gate,
        "config": config.to_dict(),
        "growth": {
            "rounds": rounds,
            "final_em_trace": [float(v) for v in final.objective_trace],
        },
    }
    return MixtureModel(final.model.experts, final.model.gating, meta)
