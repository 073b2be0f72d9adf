"""Learned rules: decoding from a MaxSAT model, evaluation, rendering, files.

A rule always stores k clauses of a CNF over feature indices. With DNF
polarity the stored CNF is the one learned on flipped labels and the rule
predicts its negation, i.e. the DNF whose terms are the stored clauses with
every literal negated.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .dataset import FeatureMap
from .encoder import VarLayout
from .solver import FEASIBLE, OPTIMUM, Assignment

CNF = "CNF"
DNF = "DNF"
POLARITIES = (CNF, DNF)
RULE_FORMAT = "rulesat.rule"


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    clauses: tuple[tuple[int, ...], ...]
    polarity: str = CNF
    names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.polarity not in POLARITIES:
            raise RuleError(f"unknown polarity {self.polarity!r}")
        clauses = tuple(tuple(sorted(set(int(j) for j in c))) for c in self.clauses)
        if any(j < 0 for c in clauses for j in c):
            raise RuleError("feature indices must be non-negative")
        if self.names and any(j >= len(self.names) for c in clauses for j in c):
            raise RuleError("clause refers to a feature index beyond the name list")
        object.__setattr__(self, "clauses", clauses)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def k(self) -> int:
        return len(self.clauses)

    @property
    def size(self) -> int:
        return size(self)

    def __str__(self) -> str:
        return render(self)


def size(rule: Rule) -> int:
    """Total number of literals over all clauses."""
    return sum(len(c) for c in rule.clauses)


def decode(a: Assignment, layout: VarLayout, names: Sequence[str] = (),
           polarity: str = CNF, meta: dict | None = None) -> Rule:
    """Feature j belongs to clause l exactly when selector b(l, j) is true."""
    if a.status not in (OPTIMUM, FEASIBLE) or a.model is None:
        raise RuleError(f"cannot decode an assignment with status {a.status!r}")
    if len(a.model) < layout.num_selectors:
        raise RuleError("assignment is missing selector variables")
    clauses = tuple(tuple(j for j in range(layout.m) if a.model[layout.b(l, j) - 1])
                    for l in range(layout.k))
    if any(not c for c in clauses):
        warnings.warn("learned rule has an empty clause; "
                      f"it predicts constant {0 if polarity == CNF else 1}", stacklevel=2)
    return Rule(clauses, polarity, tuple(names or layout.names), dict(meta or {}))


def _cnf_value(clauses: Sequence[Sequence[int]], row: np.ndarray) -> bool:
    return all(any(row[j] for j in c) for c in clauses)


def classify(rule: Rule, row: Sequence[int]) -> int:
    """Prediction (0/1) for one binary row. An empty clause is false."""
    row = np.asarray(row)
    if rule.names and len(row) != len(rule.names):
        raise RuleError(f"row has {len(row)} features, rule expects {len(rule.names)}")
    top = max((j for c in rule.clauses for j in c), default=-1)
    if top >= len(row):
        raise RuleError(f"row has {len(row)} features, rule uses feature {top}")
    v = _cnf_value(rule.clauses, row)
    return int(v) if rule.polarity == CNF else int(not v)


def predict(rule: Rule, X: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify` over the rows of X."""
    X = np.asarray(X, dtype=bool)
    if X.ndim != 2:
        raise RuleError("X must be two-dimensional")
    if rule.names and X.shape[1] != len(rule.names):
        raise RuleError(f"X has {X.shape[1]} features, rule expects {len(rule.names)}")
    out = np.ones(X.shape[0], dtype=bool)
    for c in rule.clauses:
        out &= X[:, list(c)].any(axis=1) if c else False
    if rule.polarity == DNF:
        out = ~out
    return out.astype(np.uint8)


def _literal(rule: Rule, j: int, fmap: FeatureMap | None, negated: bool) -> str:
    if fmap is not None:
        if j >= len(fmap):
            raise RuleError(f"feature {j} not covered by the feature map")
        return fmap.features[j].label(negated)
    name = rule.names[j] if j < len(rule.names) else f"x{j + 1}"
    return f"not {name}" if negated else name


def render(rule: Rule, fmap: FeatureMap | None = None) -> str:
    """Readable form of the rule, one clause (CNF) or term (DNF) per line.

    Thresholds render as ``name > t`` and ``name <= t``; repeated clauses are
    shown once with a ``[xN]`` note.
    """
    dnf = rule.polarity == DNF
    if any(not c for c in rule.clauses):
        return "TRUE" if dnf else "FALSE"
    seen: dict[tuple[int, ...], int] = {}
    for c in rule.clauses:
        seen[c] = seen.get(c, 0) + 1
    inner = " AND " if dnf else " OR "
    parts = []
    for c, count in seen.items():
        text = "( " + inner.join(_literal(rule, j, fmap, dnf) for j in c) + " )"
        parts.append(text + (f" [x{count}]" if count > 1 else ""))
    return (" OR\n" if dnf else " AND\n").join(parts)


def rule_to_dict(rule: Rule, feature_map: str | None = None) -> dict[str, Any]:
    return {
        "format": RULE_FORMAT,
        "version": 1,
        "polarity": rule.polarity,
        "k": rule.k,
        "clauses": [list(c) for c in rule.clauses],
        "feature_names": list(rule.names),
        "feature_map": feature_map,
        "meta": rule.meta,
    }


def save_rule(rule: Rule, path: str | Path, feature_map: str | None = None) -> None:
    """Write the rule as JSON. `feature_map` is a path (relative to the rule
    file or absolute) of the map needed to apply the rule to raw data."""
    Path(path).write_text(json.dumps(rule_to_dict(rule, feature_map), indent=2) + "\n")


def load_rule(path: str | Path) -> tuple[Rule, Path | None]:
    """Read a rule file; returns the rule and the resolved feature-map path."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RuleError(f"{path}: cannot read rule: {exc}") from exc
    if d.get("format") != RULE_FORMAT:
        raise RuleError(f"{path}: not a rule file")
    try:
        rule = Rule(tuple(tuple(c) for c in d["clauses"]), d["polarity"],
                    tuple(d.get("feature_names", ())), dict(d.get("meta") or {}))
    except (KeyError, TypeError) as exc:
        raise RuleError(f"{path}: malformed rule: {exc}") from exc
    if len(rule.clauses) != d.get("k", rule.k):
        raise RuleError(f"{path}: k does not match the clause list")
    ref = d.get("feature_map")
    return rule, (None if not ref else (path.parent / ref))


def from_sets(sets: Iterable[Iterable[int]], polarity: str = CNF,
              names: Sequence[str] = ()) -> Rule:
    return Rule(tuple(tuple(s) for s in sets), polarity, tuple(names))
