"""Partial weighted MaxSAT encoding of k-clause rule learning.

For a binary dataset (X, y), clause count k and error weight lambda the
instance has three groups of variables, numbered contiguously from 1:

* ``b(l, j)`` -- feature j is selected in clause slot l (k*m variables,
  slot-major),
* ``eta(i)`` -- sample i is treated as noise (n variables),
* ``z(i, l)`` -- Tseitin auxiliary meaning "slot l rejects negative sample i"
  (k variables per sample with label 0).

Slots, features and samples are 0-based in the Python API; variable ids are
the 1-based DIMACS ids.

Soft clauses (minimisation form): ``(-eta_i)`` with weight lambda and
``(-b_lj)`` with weight equal to the feature cost. Hard clauses: for a
positive sample, one clause ``eta_i | OR_{X_ij=1} b_lj`` per slot; for a
negative sample, ``eta_i | OR_l z_il`` plus ``-z_il | -b_lj`` for every slot l
and every feature j with X_ij = 1. Only the direction ``z -> clause false``
is emitted; nothing rewards setting z, so the converse is not needed.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dataset import BinaryDataset

LITERAL = "literal"
FEATURE = "feature"
SPARSITY_MODES = (LITERAL, FEATURE)

# Classic WCNF solvers store weights in signed 64-bit integers.
WEIGHT_LIMIT = 2**63 - 1


class EncodingError(ValueError):
    pass


class FormulaError(ValueError):
    """Invalid formula or malformed WCNF text."""


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights of the learning objective.

    ``lam`` weighs every training error. Setting both ``lam_fp`` and
    ``lam_fn`` switches to cost-sensitive mode: errors on label-0 samples
    (false positives) cost ``lam_fp``, errors on label-1 samples cost
    ``lam_fn``. ``feature_costs`` replaces the unit cost of selecting each
    feature. ``sparsity`` is ``"literal"`` (pay per selected literal) or
    ``"feature"`` (one soft clause per feature over all slots).
    """

    lam: int = 1
    lam_fp: int | None = None
    lam_fn: int | None = None
    feature_costs: tuple[int, ...] | None = None
    sparsity: str = LITERAL

    def __post_init__(self) -> None:
        if not _is_pos_int(self.lam):
            raise EncodingError(f"lambda must be a positive integer, got {self.lam!r}")
        if (self.lam_fp is None) != (self.lam_fn is None):
            raise EncodingError("cost-sensitive mode needs both lam_fp and lam_fn")
        if self.cost_sensitive and not (_is_pos_int(self.lam_fp) and _is_pos_int(self.lam_fn)):
            raise EncodingError("lam_fp and lam_fn must be positive integers")
        if self.feature_costs is not None:
            costs = tuple(self.feature_costs)
            if not all(_is_pos_int(c) for c in costs):
                raise EncodingError("feature costs must be positive integers")
            object.__setattr__(self, "feature_costs", costs)
        if self.sparsity not in SPARSITY_MODES:
            raise EncodingError(f"unknown sparsity mode {self.sparsity!r}")

    @property
    def cost_sensitive(self) -> bool:
        return self.lam_fp is not None

    def error_weight(self, label: int) -> int:
        if not self.cost_sensitive:
            return self.lam
        return self.lam_fn if label else self.lam_fp

    def feature_cost(self, j: int) -> int:
        return 1 if self.feature_costs is None else self.feature_costs[j]

    def negated(self) -> ObjectiveConfig:
        """Objective for the same task with labels flipped (fp and fn swap)."""
        if not self.cost_sensitive:
            return self
        return replace(self, lam_fp=self.lam_fn, lam_fn=self.lam_fp)

    def size_term(self, clauses: Sequence[Iterable[int]]) -> int:
        """Sparsity part of the objective for a rule given as clause index sets."""
        sets = [set(c) for c in clauses]
        if self.sparsity == LITERAL:
            return sum(self.feature_cost(j) for c in sets for j in c)
        common = set.intersection(*sets) if sets else set()
        return sum(self.feature_cost(j) for j in common)


def _is_pos_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1


@dataclass(frozen=True)
class VarLayout:
    k: int
    m: int
    n: int
    negatives: tuple[int, ...]
    names: tuple[str, ...] = ()
    _rank: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "negatives", tuple(int(i) for i in self.negatives))
        object.__setattr__(self, "_rank", {i: r for r, i in enumerate(self.negatives)})

    def b(self, l: int, j: int) -> int:
        return l * self.m + j + 1

    def eta(self, i: int) -> int:
        return self.k * self.m + i + 1

    def z(self, i: int, l: int) -> int:
        return self.k * self.m + self.n + self._rank[i] * self.k + l + 1

    @property
    def num_selectors(self) -> int:
        return self.k * self.m

    @property
    def num_vars(self) -> int:
        return self.k * self.m + self.n + self.k * len(self.negatives)

    def role(self, var: int) -> tuple:
        """``("b", l, j)``, ``("eta", i)`` or ``("z", i, l)`` for a variable id."""
        v = var - 1
        if not 0 <= v < self.num_vars:
            raise IndexError(f"variable {var} outside layout")
        if v < self.k * self.m:
            return ("b", v // self.m, v % self.m)
        v -= self.k * self.m
        if v < self.n:
            return ("eta", v)
        v -= self.n
        return ("z", self.negatives[v // self.k], v % self.k)


Clause = tuple[int, ...]


@dataclass(frozen=True)
class WcnfFormula:
    num_vars: int
    hard: tuple[Clause, ...]
    soft: tuple[tuple[int, Clause], ...]
    top: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hard", tuple(tuple(int(x) for x in c) for c in self.hard))
        object.__setattr__(self, "soft",
                           tuple((int(w), tuple(int(x) for x in c)) for w, c in self.soft))
        if self.top is None:
            object.__setattr__(self, "top", 1 + self.soft_total)

    @property
    def soft_total(self) -> int:
        return sum(w for w, _ in self.soft)

    def check(self) -> None:
        """Raise FormulaError unless the formula is well formed."""
        if self.num_vars < 1:
            raise FormulaError("formula declares no variables")
        for idx, c in enumerate(self.hard):
            if not c:
                raise FormulaError(f"hard clause {idx} is empty")
            self._check_lits(c, f"hard clause {idx}")
        for idx, (w, c) in enumerate(self.soft):
            if w < 1:
                raise FormulaError(f"soft clause {idx} has weight {w} < 1")
            self._check_lits(c, f"soft clause {idx}")
        if self.top <= self.soft_total:
            raise FormulaError(f"top {self.top} does not exceed soft total {self.soft_total}")

    def _check_lits(self, c: Clause, where: str) -> None:
        for lit in c:
            if lit == 0 or abs(lit) > self.num_vars:
                raise FormulaError(f"{where}: literal {lit} outside 1..{self.num_vars}")

    def satisfied(self, clause: Clause, model: np.ndarray) -> bool:
        return any((model[lit - 1] == 1) if lit > 0 else (model[-lit - 1] == 0)
                   for lit in clause)

    def violated_hard(self, model: np.ndarray) -> list[int]:
        return [i for i, c in enumerate(self.hard) if not self.satisfied(c, model)]

    def cost(self, model: np.ndarray) -> int:
        """Total weight of soft clauses falsified by a full 0/1 model
        (``model[v - 1]`` is the value of variable v)."""
        return sum(w for w, c in self.soft if not self.satisfied(c, model))


def encode(data: BinaryDataset, k: int, obj: ObjectiveConfig | None = None,
           max_selectors: int | None = None) -> tuple[WcnfFormula, VarLayout]:
    """Build the MaxSAT instance whose optima are the best k-clause CNF rules."""
    obj = obj or ObjectiveConfig()
    if not _is_pos_int(k):
        raise EncodingError(f"k must be a positive integer, got {k!r}")
    n, m = data.n, data.m
    if obj.feature_costs is not None and len(obj.feature_costs) != m:
        raise EncodingError(f"{len(obj.feature_costs)} feature costs for {m} features")
    if max_selectors is not None and k * m > max_selectors:
        raise EncodingError(f"k*m = {k * m} selector variables exceeds the cap {max_selectors}")

    X, y = data.X, data.y
    negatives = tuple(int(i) for i in np.flatnonzero(y == 0))
    layout = VarLayout(k, m, n, negatives, data.names)

    soft: list[tuple[int, Clause]] = [(obj.error_weight(int(y[i])), (-layout.eta(i),))
                                      for i in range(n)]
    if obj.sparsity == LITERAL:
        soft += [(obj.feature_cost(j), (-layout.b(l, j),)) for l in range(k) for j in range(m)]
    else:
        soft += [(obj.feature_cost(j), tuple(-layout.b(l, j) for l in range(k)))
                 for j in range(m)]

    hard: list[Clause] = []
    for i in range(n):
        ones = np.flatnonzero(X[i]).tolist()
        eta = layout.eta(i)
        if y[i] == 1:
            for l in range(k):
                hard.append((eta, *(layout.b(l, j) for j in ones)))
        else:
            hard.append((eta, *(layout.z(i, l) for l in range(k))))
            for l in range(k):
                z = layout.z(i, l)
                hard.extend((-z, -layout.b(l, j)) for j in ones)

    f = WcnfFormula(layout.num_vars, tuple(hard), tuple(soft))
    if f.top > WEIGHT_LIMIT:
        raise EncodingError(f"top weight {f.top} overflows 64-bit solver weights")
    return f, layout


# -- classic DIMACS WCNF ----------------------------------------------------

def _layout_comments(layout: VarLayout) -> Iterable[str]:
    yield f"c rulesat k={layout.k} m={layout.m} n={layout.n}"
    for v in range(1, layout.num_vars + 1):
        role = layout.role(v)
        if role[0] == "b":
            name = layout.names[role[2]] if layout.names else ""
            yield f"c var {v} b slot={role[1]} feature={role[2]} {name}".rstrip()
        elif role[0] == "eta":
            yield f"c var {v} eta sample={role[1]}"
        else:
            yield f"c var {v} z sample={role[1]} slot={role[2]}"


def emit_wcnf(f: WcnfFormula, sink: TextIO | str | Path,
              layout: VarLayout | None = None) -> None:
    """Write `f` in classic WCNF: header ``p wcnf <vars> <clauses> <top>``,
    soft clauses first, hard clauses carry weight `top`."""
    try:
        f.check()
    except FormulaError as exc:
        raise FormulaError(f"refusing to emit invalid formula: {exc}") from exc
    if isinstance(sink, (str, Path)):
        with open(sink, "w") as fh:
            _write(f, fh, layout)
    else:
        _write(f, sink, layout)


def _write(f: WcnfFormula, fh: TextIO, layout: VarLayout | None) -> None:
    if layout is not None:
        for line in _layout_comments(layout):
            fh.write(line + "\n")
    fh.write(f"p wcnf {f.num_vars} {len(f.soft) + len(f.hard)} {f.top}\n")
    for w, c in f.soft:
        fh.write(f"{w} {' '.join(map(str, c))} 0\n")
    for c in f.hard:
        fh.write(f"{f.top} {' '.join(map(str, c))} 0\n")


def format_wcnf(f: WcnfFormula, layout: VarLayout | None = None) -> str:
    buf = io.StringIO()
    emit_wcnf(f, buf, layout)
    return buf.getvalue()


def parse_wcnf(source: str | TextIO) -> WcnfFormula:
    """Parse classic WCNF text. Clauses with weight equal to top are hard."""
    text = source if isinstance(source, str) else source.read()
    header = None
    hard: list[Clause] = []
    soft: list[tuple[int, Clause]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise FormulaError(f"line {lineno}: second header")
            if len(parts) != 5 or parts[1] != "wcnf":
                raise FormulaError(f"line {lineno}: expected 'p wcnf <vars> <clauses> <top>'")
            try:
                header = tuple(int(x) for x in parts[2:])
            except ValueError:
                raise FormulaError(f"line {lineno}: non-integer header field") from None
            continue
        if header is None:
            raise FormulaError(f"line {lineno}: clause before header")
        nv, _, top = header
        try:
            nums = [int(x) for x in line.split()]
        except ValueError:
            raise FormulaError(f"line {lineno}: non-integer token") from None
        if len(nums) < 2 or nums[-1] != 0:
            raise FormulaError(f"line {lineno}: clause must be '<weight> <literals> 0'")
        w, lits = nums[0], tuple(nums[1:-1])
        for lit in lits:
            if lit == 0 or abs(lit) > nv:
                raise FormulaError(f"line {lineno}: literal {lit} outside 1..{nv}")
        if w > top:
            raise FormulaError(f"line {lineno}: weight {w} exceeds top {top}")
        if w < 1:
            raise FormulaError(f"line {lineno}: weight {w} < 1")
        if w == top:
            hard.append(lits)
        else:
            soft.append((w, lits))
    if header is None:
        raise FormulaError("missing 'p wcnf' header")
    nv, nc, top = header
    if nc != len(hard) + len(soft):
        raise FormulaError(f"header declares {nc} clauses, body has {len(hard) + len(soft)}")
    f = WcnfFormula(nv, tuple(hard), tuple(soft), top)
    f.check()
    return f


def load_wcnf(path: str | Path) -> WcnfFormula:
    return parse_wcnf(Path(path).read_text())
