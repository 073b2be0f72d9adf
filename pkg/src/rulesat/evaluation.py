"""Cross-validation, learning curves and accuracy metrics."""
from __future__ import annotations

import csv
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import BinaryDataset
from .encoder import ObjectiveConfig
from .learner import LearnConfig, TrainingError, train
from .rules import CNF, DNF, Rule, predict
from .solver import SolverConfig, TIMEOUT_NONE

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    errors: tuple[int, ...]
    tp: int
    tn: int
    fp: int
    fn: int


def metrics(rule: Rule, X: np.ndarray, y: Sequence[int]) -> Metrics:
    y = np.asarray(y).astype(bool)
    pred = predict(rule, X).astype(bool)
    errors = tuple(int(i) for i in np.flatnonzero(pred != y))
    n = len(y)
    return Metrics(
        accuracy=(n - len(errors)) / n if n else 0.0,
        errors=errors,
        tp=int(np.sum(pred & y)),
        tn=int(np.sum(~pred & ~y)),
        fp=int(np.sum(pred & ~y)),
        fn=int(np.sum(~pred & y)),
    )


def make_grid(lams: Sequence[int] = (1, 10), ks: Sequence[int] = (1, 2, 3),
              polarities: Sequence[str] = (CNF, DNF),
              solver: SolverConfig | None = None,
              objective: ObjectiveConfig | None = None) -> list[LearnConfig]:
    """Cartesian grid of learner configurations."""
    solver = solver or SolverConfig()
    base = objective or ObjectiveConfig()
    return [LearnConfig(k, replace(base, lam=lam), pol, solver)
            for pol in polarities for k in ks for lam in lams]


def fold_assignment(y: Sequence[int], folds: int, seed: int = 0,
                    stratified: bool = True) -> np.ndarray:
    """Fold id for every sample.

    Samples are shuffled (within each class when stratified), laid out
    class by class and dealt round-robin, so fold sizes differ by at most
    one and so do per-fold class counts.
    """
    y = np.asarray(y)
    n = len(y)
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= {n}, got {folds}")
    rng = np.random.default_rng(seed)
    if stratified:
        counts = [int(np.sum(y == c)) for c in (0, 1)]
        small = min(c for c in counts if c) if any(counts) else 0
        if 0 < small < folds and all(counts):
            raise ValueError(f"a class has only {small} samples; stratified CV "
                             f"needs at most {small} folds")
        order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in (0, 1)])
    else:
        order = rng.permutation(n)
    fold = np.empty(n, dtype=int)
    fold[order] = np.arange(n) % folds
    return fold


@dataclass(frozen=True)
class CvPlan:
    grid: tuple[LearnConfig, ...]
    folds: int = 10
    seed: int = 0
    stratified: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(self.grid))
        if not self.grid:
            raise ValueError("grid must not be empty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass(frozen=True, eq=False)
class FoldResult:
    config: int
    fold: int
    test_accuracy: float | None
    train_accuracy: float | None
    size: int | None
    status: str
    wall_time: float
    rule: Rule | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.rule is not None


@dataclass(frozen=True)
class ConfigSummary:
    config: int
    label: str
    k: int
    mean_test: float
    median_test: float
    mean_train: float
    median_size: float
    ok_folds: int
    failed_folds: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    labels: tuple[str, ...]
    results: tuple[FoldResult, ...]
    summaries: tuple[ConfigSummary, ...]
    best: int | None

    @property
    def best_summary(self) -> ConfigSummary | None:
        return None if self.best is None else self.summaries[self.best]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.results)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["config", "label", "fold", "test_accuracy", "train_accuracy",
                        "rule_size", "status", "wall_time"])
            for r in self.results:
                w.writerow([r.config, self.labels[r.config], r.fold,
                            _num(r.test_accuracy), _num(r.train_accuracy),
                            "" if r.size is None else r.size, r.status, f"{r.wall_time:.3f}"])

    def summary_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["config", "label", "mean_test", "median_test", "mean_train",
                        "median_size", "ok_folds", "failed_folds", "best"])
            for s in self.summaries:
                w.writerow([s.config, s.label, _num(s.mean_test), _num(s.median_test),
                            _num(s.mean_train), s.median_size, s.ok_folds, s.failed_folds,
                            int(s.config == self.best)])

    def to_text(self) -> str:
        rows = [("config", "mean test", "median test", "mean train", "median size", "folds")]
        for s in self.summaries:
            mark = " *" if s.config == self.best else ""
            rows.append((s.label + mark, _num(s.mean_test), _num(s.median_test),
                         _num(s.mean_train), f"{s.median_size:g}",
                         f"{s.ok_folds}" + (f" ({s.failed_folds} failed)" if s.failed_folds else "")))
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        if self.failures:
            lines.append(f"{self.failures} fold(s) failed without a model and were excluded")
        return "\n".join(lines)


def _num(v: float | None) -> str:
    return "" if v is None or v != v else f"{v:.4f}"


def _run_cell(data: BinaryDataset, cfg: LearnConfig, ci: int, fold: int,
              train_idx: np.ndarray, test_idx: np.ndarray) -> FoldResult:
    tr, te = data.subset(train_idx), data.subset(test_idx)
    try:
        out = train(tr, cfg)
    except TrainingError as exc:
        return FoldResult(ci, fold, None, None, None, TIMEOUT_NONE, 0.0, failure=str(exc))
    return FoldResult(ci, fold, metrics(out.rule, te.X, te.y).accuracy,
                      metrics(out.rule, tr.X, tr.y).accuracy, out.size, out.status,
                      out.wall_time, out.rule)


def cross_validate(data: BinaryDataset, plan: CvPlan) -> EvalReport:
    """Train every grid configuration on every fold split and score it.

    The best configuration has the highest mean test accuracy; ties go to
    the smaller median rule size, then to the smaller k.
    """
    fold = fold_assignment(data.y, plan.folds, plan.seed, plan.stratified)
    tasks = []
    for ci, cfg in enumerate(plan.grid):
        for f in range(plan.folds):
            tasks.append((data, cfg, ci, f, np.flatnonzero(fold != f), np.flatnonzero(fold == f)))
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*tasks)))
    else:
        results = [_run_cell(*t) for t in tasks]
    results.sort(key=lambda r: (r.config, r.fold))

    summaries = []
    for ci, cfg in enumerate(plan.grid):
        ok = [r for r in results if r.config == ci and r.ok]
        failed = sum(1 for r in results if r.config == ci and not r.ok)
        if failed:
            log.warning("%s: %d fold(s) produced no model and are excluded", cfg.label(), failed)
        nan = float("nan")
        summaries.append(ConfigSummary(
            ci, cfg.label(), cfg.k,
            statistics.fmean(r.test_accuracy for r in ok) if ok else nan,
            statistics.median(r.test_accuracy for r in ok) if ok else nan,
            statistics.fmean(r.train_accuracy for r in ok) if ok else nan,
            statistics.median(r.size for r in ok) if ok else nan,
            len(ok), failed))
    ranked = [s for s in summaries if s.ok_folds]
    best = min(ranked, key=lambda s: (-s.mean_test, s.median_size, s.k, s.config),
               default=None)
    return EvalReport(tuple(c.label() for c in plan.grid), tuple(results), tuple(summaries),
                      None if best is None else best.config)


# -- learning curves --------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    median_train: float
    median_test: float
    trials: int


def _stratified_take(rng: np.random.Generator, idx: np.ndarray, y: np.ndarray,
                     frac: float) -> np.ndarray:
    parts = []
    for c in (0, 1):
        members = idx[y[idx] == c]
        take = int(round(frac * len(members)))
        parts.append(rng.permutation(members)[:take])
    return np.sort(np.concatenate(parts))


def learning_curve(data: BinaryDataset, cfg: LearnConfig, fractions: Sequence[float],
                   trials: int = 10, test_fraction: float = 0.2,
                   seed: int = 0) -> list[CurvePoint]:
    """Median train/test accuracy when training on growing subsets.

    A stratified held-out split of `test_fraction` is fixed once from
    `seed`; each trial draws a fresh stratified subsample of the remaining
    training rows.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < test_fraction < 1:
        raise ValueError("test fraction must lie in (0, 1)")
    for fr in fractions:
        if not 0 < fr <= 1:
            raise ValueError(f"fraction {fr} outside (0, 1]")
    rng = np.random.default_rng(seed)
    everything = np.arange(data.n)
    test_idx = _stratified_take(rng, everything, data.y, test_fraction)
    if len(test_idx) == 0:
        raise ValueError("held-out split is empty")
    train_pool = np.setdiff1d(everything, test_idx)
    test = data.subset(test_idx)
    points = []
    for fr in fractions:
        tr_acc, te_acc = [], []
        for _ in range(trials):
            sub = _stratified_take(rng, train_pool, data.y, fr)
            if len(sub) == 0 or len(set(data.y[sub].tolist())) < 2:
                raise ValueError(f"fraction {fr} yields an empty or single-class training set")
            tr = data.subset(sub)
            out = train(tr, cfg)
            tr_acc.append(metrics(out.rule, tr.X, tr.y).accuracy)
            te_acc.append(metrics(out.rule, test.X, test.y).accuracy)
        points.append(CurvePoint(fr, statistics.median(tr_acc), statistics.median(te_acc),
                                 trials))
    return points


def format_curve(points: Sequence[CurvePoint]) -> str:
    lines = ["fraction\tmedian_train_accuracy\tmedian_test_accuracy"]
    lines += [f"{p.fraction:g}\t{p.median_train:.4f}\t{p.median_test:.4f}" for p in points]
    return "\n".join(lines)
