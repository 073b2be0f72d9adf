"""End-to-end training: encode, solve, decode, verify."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import BinaryDataset
from .encoder import ObjectiveConfig, encode
from .rules import CNF, POLARITIES, Rule, decode, predict
from .solver import (FEASIBLE, INFEASIBLE, OPTIMUM, TIMEOUT_NONE, SolverConfig,
                     SolverError, solve)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, instance_path: str | None = None):
        if instance_path:
            message = f"{message}; instance kept at {instance_path} for offline solving"
        super().__init__(message)
        self.instance_path = instance_path


class MonotonicityError(AssertionError):
    """Exact optima at increasing lambda got larger errors or smaller rules."""


@dataclass(frozen=True)
class LearnConfig:
    k: int = 1
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    polarity: str = CNF
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")

    @property
    def lam(self) -> int:
        return self.objective.lam

    def label(self) -> str:
        o = self.objective
        lam = f"{o.lam_fp}/{o.lam_fn}" if o.cost_sensitive else str(o.lam)
        return f"{self.polarity} k={self.k} lam={lam}"


@dataclass(frozen=True, eq=False)
class TrainOutcome:
    rule: Rule
    errors: tuple[int, ...]
    cost: int
    status: str
    wall_time: float

    @property
    def n_errors(self) -> int:
        return len(self.errors)

    @property
    def size(self) -> int:
        return self.rule.size


def error_indices(rule: Rule, data: BinaryDataset) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(predict(rule, data.X) != data.y))


def objective_value(rule: Rule, data: BinaryDataset, obj: ObjectiveConfig) -> int:
    """Sparsity term plus weighted training errors of `rule` on `data`."""
    errs = error_indices(rule, data)
    return obj.size_term(rule.clauses) + sum(obj.error_weight(int(data.y[i])) for i in errs)


def train(data: BinaryDataset, cfg: LearnConfig) -> TrainOutcome:
    """Learn a k-clause rule minimising sparsity + weighted training errors.

    DNF rules are learned as CNF rules on flipped labels (with the false
    positive and false negative weights swapped) and stored with DNF
    polarity, which negates the CNF at prediction time.
    """
    t0 = time.perf_counter()
    if cfg.polarity == CNF:
        target, obj = data, cfg.objective
    else:
        target, obj = data.with_labels(1 - data.y), cfg.objective.negated()
    f, layout = encode(target, cfg.k, obj)
    try:
        a = solve(f, layout, cfg.solver)
    except SolverError as exc:
        raise TrainingError(str(exc)) from exc
    if a.status == TIMEOUT_NONE:
        raise TrainingError("solver budget expired before any model was found", a.instance_path)
    if a.status == INFEASIBLE:
        raise TrainingError("solver claims the instance is unsatisfiable, which is impossible "
                            "for this encoding: solver fault", a.instance_path)
    o = cfg.objective
    meta = {"k": cfg.k, "lam": o.lam, "lam_fp": o.lam_fp, "lam_fn": o.lam_fn,
            "sparsity": o.sparsity, "feature_costs": o.feature_costs,
            "status": a.status}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rule = decode(a, layout, data.names, cfg.polarity, meta)
    if any(not c for c in rule.clauses):
        log.info("rule has an empty clause and predicts a constant")
    errors = error_indices(rule, data)
    cost = objective_value(rule, data, cfg.objective)
    if a.status == OPTIMUM and cost != a.cost:
        raise TrainingError(f"decoded rule costs {cost} but the optimum is {a.cost}")
    if a.status == FEASIBLE and cost > a.cost:
        raise TrainingError(f"decoded rule costs {cost}, more than its model ({a.cost})")
    rule.meta["training_errors"] = list(errors)
    return TrainOutcome(rule, errors, cost, a.status, time.perf_counter() - t0)


def sweep_lambda(data: BinaryDataset, cfg: LearnConfig, lams: Sequence[int],
                 strict: bool = True) -> list[TrainOutcome]:
    """Train once per lambda and check that exact optima are monotone:
    for lam1 < lam2 the sparsity term does not shrink and the error count
    does not grow. A violation means a solver or encoding bug; it raises
    MonotonicityError (or warns when ``strict=False``)."""
    if not cfg.solver.exact:
        raise ValueError("sweep_lambda needs the exact internal backend")
    if cfg.objective.cost_sensitive:
        raise ValueError("sweep_lambda varies a single lambda; cost-sensitive mode is not supported")
    lams = list(lams)
    if not lams or any(a >= b for a, b in zip(lams, lams[1:])):
        raise ValueError(f"lambda list must be non-empty and strictly increasing: {lams}")
    outcomes = [train(data, replace(cfg, objective=replace(cfg.objective, lam=lam)))
                for lam in lams]
    for (l1, o1), (l2, o2) in zip(zip(lams, outcomes), zip(lams[1:], outcomes[1:])):
        if o1.status != OPTIMUM or o2.status != OPTIMUM:
            warnings.warn(f"lambda {l1} or {l2} hit the time budget; monotonicity not checked",
                          stacklevel=2)
            continue
        s1 = cfg.objective.size_term(o1.rule.clauses)
        s2 = cfg.objective.size_term(o2.rule.clauses)
        if s1 > s2 or o1.n_errors < o2.n_errors:
            msg = (f"monotonicity violated between lambda {l1} (size {s1}, errors "
                   f"{o1.n_errors}) and lambda {l2} (size {s2}, errors {o2.n_errors})")
            if strict:
                raise MonotonicityError(msg)
            warnings.warn(msg, stacklevel=2)
    return outcomes
