"""MaxSAT back ends.

``solve_internal`` is an exact branch and bound for instances produced by
:func:`rulesat.encoder.encode`. It searches over the selector variables only:
once every ``b`` is fixed, each ``eta_i`` is forced (true exactly when the
decoded rule misclassifies sample i) and each ``z`` is determined, so the
search space is the 2^(k*m) rules rather than all assignments.

``solve_external`` hands the instance to any MaxSAT solver that reads classic
WCNF and prints ``o``/``s``/``v`` lines.
"""
from __future__ import annotations

import logging
import os
import shlex
import signal
import subprocess
import sys
import tempfile
import time
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .encoder import VarLayout, WcnfFormula, emit_wcnf

log = logging.getLogger(__name__)

OPTIMUM = "optimum"
FEASIBLE = "feasible-best"
INFEASIBLE = "infeasible"
TIMEOUT_NONE = "timeout-none"
STATUSES = (OPTIMUM, FEASIBLE, INFEASIBLE, TIMEOUT_NONE)

INTERNAL = "internal"
EXTERNAL = "external"

DEFAULT_SELECTOR_CAP = 24


class SolverError(RuntimeError):
    def __init__(self, message: str, instance_path: str | None = None):
        if instance_path:
            message = f"{message} (instance kept at {instance_path})"
        super().__init__(message)
        self.instance_path = instance_path


@dataclass(frozen=True, eq=False)
class Assignment:
    """Solver result. ``model[v - 1]`` is the value of variable v."""

    status: str
    cost: int | None = None
    model: np.ndarray | None = None
    instance_path: str | None = None

    @property
    def has_model(self) -> bool:
        return self.model is not None

    def value(self, var: int) -> int:
        if self.model is None:
            raise SolverError(f"no model (status {self.status})")
        return int(self.model[var - 1])

    @property
    def values(self) -> dict[int, int]:
        if self.model is None:
            return {}
        return {v + 1: int(x) for v, x in enumerate(self.model)}


@dataclass(frozen=True)
class SolverConfig:
    """Back-end selection.

    `command` is an argv template for the external back end; ``{wcnf}`` is
    replaced by the instance path and ``{timeout}`` by the whole-second budget.
    `seed` is accepted for reproducible manifests; the internal back end is
    deterministic and ignores it.
    """

    backend: str = INTERNAL
    command: str | None = None
    time_budget: float = 60.0
    seed: int = 0
    max_selectors: int = DEFAULT_SELECTOR_CAP

    def __post_init__(self) -> None:
        if self.backend not in (INTERNAL, EXTERNAL):
            raise ValueError(f"unknown solver backend {self.backend!r}")
        if not self.time_budget > 0:
            raise ValueError("time budget must be positive")
        if self.backend == EXTERNAL and (not self.command or "{wcnf}" not in self.command):
            raise ValueError("external backend needs a command containing '{wcnf}'")

    @property
    def exact(self) -> bool:
        return self.backend == INTERNAL


def solve(f: WcnfFormula, layout: VarLayout, cfg: SolverConfig | None = None) -> Assignment:
    cfg = cfg or SolverConfig()
    if cfg.backend == INTERNAL:
        return solve_internal(f, layout, cfg.time_budget, cfg.max_selectors)
    return solve_external(f, layout, cfg.command, cfg.time_budget)


def check_model(f: WcnfFormula, model: np.ndarray) -> int:
    """Cost of a model after confirming it satisfies every hard clause."""
    bad = f.violated_hard(model)
    if bad:
        raise SolverError(f"model violates {len(bad)} hard clauses, first {f.hard[bad[0]]}")
    return f.cost(model)


# -- internal branch and bound ---------------------------------------------

class _Timeout(Exception):
    pass


class _Instance:
    """Bitmask view of an encoded instance; bit i stands for sample i."""

    def __init__(self, f: WcnfFormula, layout: VarLayout):
        k, m, n = layout.k, layout.m, layout.n
        nb = k * m
        self.k, self.m, self.n, self.nb = k, m, n, nb
        self.layout = layout
        self.pos_cov = [0] * nb      # positives covered when selector p is on
        self.neg_hit = [0] * nb      # negatives whose slot is blocked by selector p
        self.pos = 0                 # samples with cover requirements
        self.neg = 0                 # samples with a Tseitin disjunction
        self.forced = 0              # samples whose eta is forced true
        self.weight = [0] * n
        self.bsoft: list[list[tuple[int, int]]] = [[] for _ in range(nb)]

        seen_slots: set[tuple[int, int]] = set()
        for c in f.hard:
            roles = [(lit > 0, layout.role(abs(lit))) for lit in c]
            etas = [idx for idx, (sign, r) in enumerate(roles) if r[0] == "eta"]
            if len(etas) == 1 and roles[etas[0]][0]:
                i = roles[etas[0]][1][1]
                rest = roles[:etas[0]] + roles[etas[0] + 1:]
                if not rest:
                    self.forced |= 1 << i
                elif all(s and r[0] == "b" for s, r in rest):
                    slots = {r[1] for _, r in rest}
                    if len(slots) != 1 or (i, next(iter(slots))) in seen_slots:
                        raise _unsupported(c)
                    seen_slots.add((i, slots.pop()))
                    self.pos |= 1 << i
                    for _, r in rest:
                        self.pos_cov[r[1] * m + r[2]] |= 1 << i
                elif (all(s and r[0] == "z" and r[1] == i for s, r in rest)
                      and sorted(r[2] for _, r in rest) == list(range(k))):
                    self.neg |= 1 << i
                else:
                    raise _unsupported(c)
            elif (len(c) == 2 and not roles[0][0] and not roles[1][0]
                  and {roles[0][1][0], roles[1][1][0]} == {"z", "b"}):
                z = roles[0][1] if roles[0][1][0] == "z" else roles[1][1]
                b = roles[1][1] if roles[0][1][0] == "z" else roles[0][1]
                if z[2] != b[1]:
                    raise _unsupported(c)
                self.neg_hit[b[1] * m + b[2]] |= 1 << z[1]
            else:
                raise _unsupported(c)
        if self.pos & self.neg:
            raise SolverError("internal backend: a sample is both positive and negative")
        per_sample = Counter(i for i, _ in seen_slots)
        for i in range(n):
            if (self.pos >> i) & 1 and per_sample[i] != k:
                raise SolverError(f"internal backend: sample {i} lacks a clause for some slot")

        for w, c in f.soft:
            roles = [(lit > 0, layout.role(abs(lit))) for lit in c]
            if len(c) == 1 and not roles[0][0] and roles[0][1][0] == "eta":
                self.weight[roles[0][1][1]] += w
            elif c and all(not s and r[0] == "b" for s, r in roles):
                ps = sorted({abs(lit) - 1 for lit in c})
                self.bsoft[ps[-1]].append((w, sum(1 << p for p in ps[:-1])))
            else:
                raise SolverError(f"internal backend cannot handle soft clause {c}")

        groups: dict[int, int] = {}
        for i, w in enumerate(self.weight):
            if w:
                groups[w] = groups.get(w, 0) | (1 << i)
        self.groups = sorted(groups.items())

        # positives that slot l can still cover from position j onward
        self.suffix = [0] * (nb + 1)
        for l in range(k):
            acc = 0
            for j in reversed(range(m)):
                acc |= self.pos_cov[l * m + j]
                self.suffix[l * m + j] = acc
        full = [self.suffix[l * m] for l in range(k)]
        # positives that some later slot can never cover
        self.doomed_after = [0] * k
        for l in range(k):
            for l2 in range(l + 1, k):
                self.doomed_after[l] |= self.pos & ~full[l2]
        self.symmetric = self._slot_symmetric()

    def _slot_symmetric(self) -> bool:
        k, m = self.k, self.m
        for l in range(1, k):
            for j in range(m):
                if (self.pos_cov[l * m + j] != self.pos_cov[j]
                        or self.neg_hit[l * m + j] != self.neg_hit[j]):
                    return False
        clauses = {}
        for p, entries in enumerate(self.bsoft):
            for w, others in entries:
                key = frozenset([p] + [q for q in range(self.nb) if (others >> q) & 1])
                clauses[key] = clauses.get(key, 0) + w

        def swapped(key, l):
            out = set()
            for p in key:
                s, j = divmod(p, m)
                s = l + 1 if s == l else l if s == l + 1 else s
                out.add(s * m + j)
            return frozenset(out)

        for l in range(k - 1):
            perm = {}
            for key, w in clauses.items():
                sk = swapped(key, l)
                perm[sk] = perm.get(sk, 0) + w
            if perm != clauses:
                return False
        return True

    def wsum(self, mask: int) -> int:
        return sum(w * (mask & g).bit_count() for w, g in self.groups)

    def errors(self, bits: int) -> int:
        """Mask of misclassified samples for a selector bit vector."""
        k, m = self.k, self.m
        err = self.forced
        all_hit = self.neg
        for l in range(k):
            cov = hit = 0
            for j in range(m):
                if (bits >> (l * m + j)) & 1:
                    cov |= self.pos_cov[l * m + j]
                    hit |= self.neg_hit[l * m + j]
            err |= self.pos & ~cov
            all_hit &= hit
        return err | all_hit

    def model(self, bits: int) -> np.ndarray:
        lay, k, m = self.layout, self.k, self.m
        model = np.zeros(lay.num_vars, dtype=np.uint8)
        for p in range(self.nb):
            model[p] = (bits >> p) & 1
        err = self.errors(bits)
        for i in range(self.n):
            model[lay.eta(i) - 1] = (err >> i) & 1
        for l in range(k):
            hit = 0
            for j in range(m):
                if (bits >> (l * m + j)) & 1:
                    hit |= self.neg_hit[l * m + j]
            for i in lay.negatives:
                model[lay.z(i, l) - 1] = 0 if (hit >> i) & 1 else 1
        return model


def _unsupported(c) -> SolverError:
    return SolverError(f"internal backend cannot handle hard clause {c}; "
                       "it only solves instances produced by encode()")


class _Search:
    def __init__(self, inst: _Instance, deadline: float):
        self.inst = inst
        self.deadline = deadline
        self.best_cost: float = float("inf")
        self.best_bits = 0
        self.nodes = 0

    def run(self) -> bool:
        """Search; True when finished (optimum proved), False on timeout."""
        inst = self.inst
        try:
            self._visit(0, 0, 0, inst.forced, 0, 0, inst.neg, True)
        except _Timeout:
            return False
        return True

    def _visit(self, p, bits, lit, err, cov, hit, all_hit, tight):
        inst = self.inst
        self.nodes += 1
        if not self.nodes & 1023 and time.monotonic() > self.deadline:
            raise _Timeout
        if p == inst.nb:
            cost = lit + inst.wsum(err)
            if cost < self.best_cost:
                self.best_cost, self.best_bits = cost, bits
            return
        m, k = inst.m, inst.k
        l, j = divmod(p, m)
        lost = err | (inst.pos & ~(cov | inst.suffix[p])) | inst.doomed_after[l]
        if l == k - 1:
            lost |= all_hit & hit
        if lit + inst.wsum(lost) >= self.best_cost:
            return
        # clause slots are interchangeable: keep slot blocks lexicographically non-decreasing
        constrained = inst.symmetric and l > 0 and tight
        prev = (bits >> (p - m)) & 1 if constrained else 0
        for v in (0, 1):
            if constrained and prev and not v:
                continue
            nbits, nlit, ncov, nhit = bits, lit, cov, hit
            if v:
                nbits |= 1 << p
                for w, others in inst.bsoft[p]:
                    if nbits & others == others:
                        nlit += w
                ncov |= inst.pos_cov[p]
                nhit |= inst.neg_hit[p]
            if j == m - 1:
                nerr = err | (inst.pos & ~ncov)
                nall = all_hit & nhit
                if l == k - 1:
                    nerr |= nall
                self._visit(p + 1, nbits, nlit, nerr, 0, 0, nall, True)
            else:
                self._visit(p + 1, nbits, nlit, err, ncov, nhit, all_hit,
                            constrained and v == prev)


def solve_internal(f: WcnfFormula, layout: VarLayout, budget: float | None = None,
                   max_selectors: int = DEFAULT_SELECTOR_CAP) -> Assignment:
    """Exact optimum by branch and bound over the selector variables.

    Among optimal rules the lexicographically smallest selector vector
    (variable 1 most significant, 0 before 1) is returned. When the
    wall-clock budget runs out the best rule found so far is returned with
    status ``feasible-best``.
    """
    f.check()
    if layout.num_vars != f.num_vars:
        raise SolverError(f"layout has {layout.num_vars} variables, formula {f.num_vars}")
    if layout.num_selectors > max_selectors:
        raise SolverError(f"k*m = {layout.num_selectors} exceeds the internal solver cap "
                          f"{max_selectors}; use an external solver")
    inst = _Instance(f, layout)
    deadline = time.monotonic() + (budget if budget is not None else float("inf"))
    search = _Search(inst, deadline)
    finished = search.run()
    bits = search.best_bits
    model = inst.model(bits)
    cost = check_model(f, model)
    if search.best_cost != float("inf") and cost != search.best_cost:
        raise SolverError(f"internal search cost {search.best_cost} disagrees with "
                          f"recomputed cost {cost}")
    log.debug("internal search: %d nodes, cost %d, finished=%s", search.nodes, cost, finished)
    return Assignment(OPTIMUM if finished else FEASIBLE, cost, model)


# -- external solvers -------------------------------------------------------

@dataclass
class SolverOutput:
    status_line: str | None = None
    last_o: int | None = None
    model: np.ndarray | None = None


def parse_solver_output(text: str, num_vars: int) -> SolverOutput:
    """Read MaxSAT-evaluation style output: ``o <cost>`` (last wins),
    ``s <status>``, and ``v`` lines holding either signed literals or a
    0/1 string. Unlisted variables default to 0."""
    out = SolverOutput()
    lits: list[int] = []
    bitstring: str | None = None
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "o" and len(parts) >= 2:
            try:
                out.last_o = int(parts[1])
            except ValueError:
                pass
        elif tag == "s":
            out.status_line = " ".join(parts[1:]).upper()
        elif tag == "v":
            toks = parts[1:]
            if len(toks) == 1 and set(toks[0]) <= {"0", "1"} and len(toks[0]) > 1:
                bitstring = (bitstring or "") + toks[0]
            else:
                for t in toks:
                    try:
                        lits.append(int(t))
                    except ValueError as exc:
                        raise SolverError(f"unparseable model token {t!r}") from exc
    if bitstring is not None or lits:
        model = np.zeros(num_vars, dtype=np.uint8)
        if bitstring is not None:
            bits = np.frombuffer(bitstring[:num_vars].encode(), dtype=np.uint8) - ord("0")
            model[:len(bits)] = bits
        for lit in lits:
            if lit == 0:
                continue
            if abs(lit) > num_vars:
                raise SolverError(f"model literal {lit} outside 1..{num_vars}")
            model[abs(lit) - 1] = 1 if lit > 0 else 0
        out.model = model
    return out


def solve_external(f: WcnfFormula, layout: VarLayout, command: str,
                   budget: float | None = None) -> Assignment:
    """Run an external MaxSAT solver on `f` and map its answer to an Assignment.

    The instance is written to a temporary file which is removed on success
    and kept (its path reported) otherwise. When the budget expires the
    solver is killed and whatever it printed so far is used.
    """
    if "{wcnf}" not in command:
        raise SolverError("solver command must contain the '{wcnf}' placeholder")
    fd, path = tempfile.mkstemp(prefix="rulesat-", suffix=".wcnf")
    os.close(fd)
    emit_wcnf(f, path, layout)
    secs = str(max(1, int(budget))) if budget is not None else "0"
    argv = [tok.replace("{wcnf}", path).replace("{timeout}", secs)
            for tok in shlex.split(command)]
    log.debug("running %s", argv)
    try:
        proc = subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                text=True, start_new_session=True)
    except OSError as exc:
        raise SolverError(f"cannot start solver {argv[0]!r}: {exc}", path) from exc
    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=budget)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill(proc)
        stdout, stderr = proc.communicate()

    try:
        parsed = parse_solver_output(stdout, f.num_vars)
    except SolverError as exc:
        raise SolverError(str(exc), path) from exc
    status = parsed.status_line
    anything = status is not None or parsed.last_o is not None or parsed.model is not None
    if not anything and not timed_out:
        tail = (stderr or "").strip().splitlines()[-1:] or [""]
        raise SolverError(f"solver exited with code {proc.returncode} without parseable "
                          f"output {tail[0]!r}", path)

    if status == "UNSATISFIABLE":
        return Assignment(INFEASIBLE, instance_path=path)
    if parsed.model is None:
        if status == "OPTIMUM FOUND":
            warnings.warn("solver reported an optimum but printed no model", stacklevel=2)
        return Assignment(TIMEOUT_NONE, instance_path=path)

    try:
        cost = check_model(f, parsed.model)
    except SolverError as exc:
        raise SolverError(f"solver fault: {exc}", path) from exc
    if parsed.last_o is not None and parsed.last_o != cost:
        warnings.warn(f"solver reported cost {parsed.last_o} but its model costs {cost}; "
                      "using the model cost", stacklevel=2)
    os.unlink(path)
    found = OPTIMUM if status == "OPTIMUM FOUND" and not timed_out else FEASIBLE
    return Assignment(found, cost, parsed.model)


def _kill(proc: subprocess.Popen) -> None:
    try:
        if sys.platform != "win32":
            os.killpg(proc.pid, signal.SIGKILL)
        else:
            proc.kill()
    except ProcessLookupError:
        pass
