"""Conditional tree-structured Bayesian network experts.

An expert is a forest over the d class variables (each node has at most one
class parent) plus per-node logistic CPDs: children carry two models keyed
by the parent's label value, roots carry one.  The joint conditional
probability factorizes over nodes, and the exact MAP assignment is found by
one upward max-sum pass and one downward backtracking pass per tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, as_weight_array
from .errors import ArgumentError
from .logreg import (
    DEFAULT_OPTIMIZER,
    LinearModel,
    OptimizerConfig,
    log_sigmoid,
    train_weighted,
)


@dataclass(frozen=True)
class TreeStructure:
    """Parent map over class nodes; None marks a root. Must be a forest."""

    parent: tuple[Optional[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "parent", tuple(
            None if p is None else int(p) for p in self.parent))
        d = len(self.parent)
        if d < 1:
            raise ArgumentError("structure needs at least one node")
        for i, p in enumerate(self.parent):
            if p is None:
                continue
            if not 0 <= p < d:
                raise ArgumentError(f"parent[{i}]={p} out of range")
            if p == i:
                raise ArgumentError(f"node {i} cannot be its own parent")
        # cycle check: walking up from any node must terminate
        for i in range(d):
            seen = set()
            j: Optional[int] = i
            while j is not None:
                if j in seen:
                    raise ArgumentError(f"cycle detected through node {i}")
                seen.add(j)
                j = self.parent[j]

    @property
    def d(self) -> int:
        return len(self.parent)

    @property
    def roots(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parent) if p is None)

    def children(self) -> list[list[int]]:
        ch: list[list[int]] = [[] for _ in range(self.d)]
        for i, p in enumerate(self.parent):
            if p is not None:
                ch[p].append(i)
        return ch

    def topological_order(self) -> list[int]:
        """Node order with every parent before its children."""
        ch = self.children()
        order: list[int] = []
        stack = list(reversed(self.roots))
        while stack:
            i = stack.pop()
            order.append(i)
            stack.extend(reversed(ch[i]))
        return order


@dataclass(frozen=True)
class CtbnExpert:
    """A tree structure plus logistic CPDs for each class node."""

    structure: TreeStructure
    cpds: tuple[tuple[LinearModel, ...], ...]

    def __post_init__(self):
        d = self.structure.d
        if len(self.cpds) != d:
            raise ArgumentError("cpds length must equal node count")
        for i, models in enumerate(self.cpds):
            want = 1 if self.structure.parent[i] is None else 2
            if len(models) != want:
                raise ArgumentError(
                    f"node {i} expects {want} CPD model(s), got {len(models)}")
        dims = {m.params.shape[0] for models in self.cpds for m in models}
        if len(dims) != 1:
            raise ArgumentError("all CPD parameter vectors must share one length")

    @property
    def d(self) -> int:
        return self.structure.d

    @property
    def n_features(self) -> int:
        """Parameter vector length m+1 (bias included)."""
        return self.cpds[0][0].params.shape[0]

    def param_table(self) -> np.ndarray:
        """(d, 2, m+1) stacked CPD weights; the root row is duplicated."""
        cached = getattr(self, "_param_table", None)
        if cached is not None:
            return cached
        table = np.empty((self.d, 2, self.n_features))
        for i, models in enumerate(self.cpds):
            if len(models) == 1:
                table[i, 0] = models[0].params
                table[i, 1] = models[0].params
            else:
                table[i, 0] = models[0].params
                table[i, 1] = models[1].params
        table.flags.writeable = False
        object.__setattr__(self, "_param_table", table)
        return table

    def logit_table(self, x: np.ndarray) -> np.ndarray:
        """(d, 2) per-node logits z[i, v] = theta_{i|parent=v} . x."""
        return self.param_table() @ np.asarray(x, dtype=np.float64)


def joint_log_prob(expert: CtbnExpert, x: np.ndarray, y: Sequence[int]) -> float:
    """log P(y | x) = sum_i log P(y_i | x, y_parent(i)); always <= 0."""
    y = np.asarray(y)
    if y.shape[0] != expert.d:
        raise ArgumentError("label vector length does not match expert")
    z = expert.logit_table(x)
    total = 0.0
    for i, p in enumerate(expert.structure.parent):
        v = 0 if p is None else int(y[p])
        zi = z[i, v]
        total += float(log_sigmoid(zi if y[i] == 1 else -zi))
    return total


def log_likelihoods(expert: CtbnExpert, data: Dataset) -> np.ndarray:
    """(N,) joint conditional log-probability of every instance's labels."""
    if expert.d != data.d:
        raise ArgumentError("expert and dataset label counts differ")
    X, Y = data.features, data.labels
    n = data.n
    Z = np.einsum("ivp,np->niv", expert.param_table(), X)
    rows = np.arange(n)
    out = np.zeros(n)
    for i, p in enumerate(expert.structure.parent):
        v = np.zeros(n, dtype=np.intp) if p is None else Y[:, p].astype(np.intp)
        zi = Z[rows, i, v]
        sign = 2.0 * Y[:, i] - 1.0
        out += log_sigmoid(sign * zi)
    return out


def node_log_probs(expert: CtbnExpert, x: np.ndarray) -> np.ndarray:
    """(d, 2, 2) table lp[i, v, u] = log P(y_i = u | x, parent = v)."""
    z = expert.logit_table(x)
    lp = np.empty((expert.d, 2, 2))
    lp[:, :, 1] = log_sigmoid(z)
    lp[:, :, 0] = log_sigmoid(-z)
    return lp


def exact_map(expert: CtbnExpert, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact MAP assignment via max-sum over the forest.

    One upward pass (children before parents) computes, for each node and
    each possible parent value, the best achievable subtree score and the
    arg-max label; one downward pass reads the assignment off.  Ties prefer
    label 0, so the result is a pure function of (expert, x).
    """
    lp = node_log_probs(expert, x)
    order = expert.structure.topological_order()
    ch = expert.structure.children()
    d = expert.d

    # child_sum[i, u] = sum of children's best-score messages given y_i = u
    child_sum = np.zeros((d, 2))
    best = np.zeros((d, 2))    # best subtree score of i given parent value v
    choice = np.zeros((d, 2), dtype=np.int8)  # arg-max label of i given v

    for i in reversed(order):
        for v in (0, 1):
            s0 = lp[i, v, 0] + child_sum[i, 0]
            s1 = lp[i, v, 1] + child_sum[i, 1]
            u = 1 if s1 > s0 else 0
            best[i, v] = s1 if u else s0
            choice[i, v] = u
        p = expert.structure.parent[i]
        if p is not None:
            child_sum[p, 0] += best[i, 0]
            child_sum[p, 1] += best[i, 1]

    y = np.zeros(d, dtype=np.int8)
    for i in order:
        p = expert.structure.parent[i]
        v = 0 if p is None else int(y[p])
        y[i] = choice[i, v]
    return y, joint_log_prob(expert, x, y)


def train_parameters(
    structure: TreeStructure,
    data: Dataset,
    w,
    lam: float,
    cfg: OptimizerConfig = DEFAULT_OPTIMIZER,
    init: CtbnExpert | None = None,
) -> CtbnExpert:
    """Fit all CPDs of a fixed structure on instance-weighted data.

    Each child node trains one model per parent label value on the rows
    where the parent takes that value; roots train on everything.  A branch
    whose parent value never occurs ends up penalty-only (params stay 0).
    Passing ``init`` warm-starts each fit from the same node's previous
    parameters.
    """
    if structure.d != data.d:
        raise ArgumentError("structure size does not match dataset labels")
    if init is not None and init.structure.parent != structure.parent:
        raise ArgumentError("warm-start expert has a different structure")
    w = as_weight_array(w, data.n)
    X, Y = data.features, data.labels
    cpds = []
    for i, p in enumerate(structure.parent):
        if p is None:
            x0 = init.cpds[i][0].params if init is not None else None
            cpds.append((train_weighted(X, Y[:, i], w, lam, cfg, x0=x0),))
            continue
        branch = []
        for v in (0, 1):
            mask = Y[:, p] == v
            x0 = init.cpds[i][v].params if init is not None else None
            branch.append(
                train_weighted(X[mask], Y[mask, i], w[mask], lam, cfg, x0=x0))
        cpds.append(tuple(branch))
    return CtbnExpert(structure, tuple(cpds))
