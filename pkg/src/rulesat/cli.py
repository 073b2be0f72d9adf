"""Command-line interface.

Every flag can also be given in a ``--config`` file (INI syntax, one
``[rulesat]`` section, keys named like the long flags). Flags override the
config file, which overrides the defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset import (DatasetError, FeatureMap, KINDS, apply_map_rows, binarize,
                      bundled_path, coerce_labels, load_binary_csv, load_csv, read_rows)
from .encoder import EncodingError, FormulaError, ObjectiveConfig, SPARSITY_MODES, emit_wcnf, encode
from .evaluation import CvPlan, cross_validate, format_curve, learning_curve, make_grid
from .learner import LearnConfig, TrainingError, train
from .rules import POLARITIES, RuleError, load_rule, predict, render, save_rule
from .solver import EXTERNAL, INTERNAL, SolverConfig, SolverError

log = logging.getLogger("rulesat")

SOLVER_ENV = "RULESAT_SOLVER_CMD"
CONFIG_SECTION = "rulesat"


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _kinds(text: str) -> dict[str, str]:
    out = {}
    for item in _str_list(text):
        name, _, kind = item.partition("=")
        if kind not in KINDS:
            raise argparse.ArgumentTypeError(f"bad kind override {item!r}; kinds are {KINDS}")
        out[name.strip()] = kind
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


# -- parser -----------------------------------------------------------------

def _add_data(p: argparse.ArgumentParser, binary_ok: bool = True) -> None:
    g = p.add_argument_group("data")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--data", help="raw CSV to binarize ('bundled:iris' for a shipped file)")
    if binary_ok:
        src.add_argument("--binary", help="already-binary CSV, columns used as-is")
    g.add_argument("--label", default="label", help="label column name (default: label)")
    g.add_argument("--positive", help="label value mapped to 1; all others map to 0")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--kinds", type=_kinds, default={},
                   help="kind overrides, e.g. 'age=continuous,zip=categorical'")
    g.add_argument("--ignore", type=_str_list, default=[], help="columns to skip")
    g.add_argument("--thresholds", type=_positive_int, default=10,
                   help="thresholds per continuous column (default: 10)")
    g.add_argument("--strategy", choices=("quantile", "uniform"), default="quantile")
    g.add_argument("--missing", choices=("strict", "drop"), default="strict")
    g.add_argument("--max-categories", type=_positive_int, default=10,
                   help="numeric columns with at most this many values are categorical")


def _add_objective(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("objective")
    g.add_argument("-k", "--k", type=_positive_int, default=1, help="number of clauses")
    g.add_argument("--lam", type=_positive_int, default=1, help="error weight lambda")
    g.add_argument("--lam-fp", type=_positive_int, help="false-positive weight (cost-sensitive)")
    g.add_argument("--lam-fn", type=_positive_int, help="false-negative weight (cost-sensitive)")
    g.add_argument("--sparsity", choices=SPARSITY_MODES, default="literal")
    g.add_argument("--feature-costs", type=_int_list, help="comma-separated cost per feature")
    g.add_argument("--polarity", choices=POLARITIES, default="CNF")


def _add_solver(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--solver", choices=(INTERNAL, EXTERNAL), default=INTERNAL)
    g.add_argument("--solver-cmd", help=f"external command with {{wcnf}} placeholder "
                                        f"(default: ${SOLVER_ENV})")
    g.add_argument("--timeout", type=_positive_float, default=600.0,
                   help="seconds per solve (default: 600)")
    g.add_argument("--max-selectors", type=_positive_int, default=24,
                   help="largest k*m the internal solver accepts (default: 24)")
    g.add_argument("--seed", type=int, default=0, help="seed for every random choice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulesat",
        description="Learn sparse CNF/DNF classification rules via weighted MaxSAT.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="INI file with a [rulesat] section mirroring the flags")
        return p

    p = cmd("binarize", "binarize a raw CSV into a 0/1 dataset and a feature map")
    _add_data(p, binary_ok=False)
    p.add_argument("--out-dir", required=True)

    p = cmd("encode", "write the MaxSAT instance for a dataset as classic WCNF")
    _add_data(p)
    _add_objective(p)
    p.add_argument("--out", required=True, help="WCNF output path")

    p = cmd("train", "learn a rule and write it to a file")
    _add_data(p)
    _add_objective(p)
    _add_solver(p)
    p.add_argument("--out", required=True, help="rule file (JSON)")
    p.add_argument("--map", help="feature map of an already-binarized --binary file")
    p.add_argument("--map-out", help="where to write the feature map when training on --data "
                                     "(default: next to the rule file)")

    p = cmd("predict", "apply a rule file to raw or binary rows")
    p.add_argument("--rule", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="raw CSV (needs the rule's feature map)")
    src.add_argument("--binary", help="binary CSV whose header names the rule's features")
    p.add_argument("--map", help="feature map overriding the one referenced by the rule")
    p.add_argument("--label", help="label column to report next to predictions")
    p.add_argument("--positive", help="label value mapped to 1")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", help="predictions CSV (default: standard output)")

    p = cmd("evaluate", "cross-validate a grid of configurations")
    _add_data(p)
    _add_objective(p)
    _add_solver(p)
    p.add_argument("--folds", type=_positive_int, default=10)
    p.add_argument("--lams", type=_int_list, default=[1, 10])
    p.add_argument("--ks", type=_int_list, default=[1, 2, 3])
    p.add_argument("--polarities", type=_str_list, default=["CNF", "DNF"])
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel fold tasks")
    p.add_argument("--out", help="per-fold results CSV")
    p.add_argument("--summary", help="per-configuration summary CSV")

    p = cmd("curve", "learning curve: accuracy against training-set fraction")
    _add_data(p)
    _add_objective(p)
    _add_solver(p)
    p.add_argument("--fractions", type=_float_list,
                   default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", help="table output path (default: standard output)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    try:
        with open(known.config) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"--config {known.config}: {exc}") from exc
    if not cp.has_section(CONFIG_SECTION):
        raise UsageError(f"--config {known.config}: missing [{CONFIG_SECTION}] section")
    command = next((a for a in argv if not a.startswith("-")), None)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = sub.choices.get(command)
    if target is None:
        return
    actions = {a.dest: a for a in target._actions if a.option_strings}
    defaults = {}
    for key, value in cp.items(CONFIG_SECTION):
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"--config {known.config}: unknown key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = cp.getboolean(CONFIG_SECTION, key)
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"--config {known.config}: {key}: {exc}") from exc
        else:
            if action.choices and value not in action.choices:
                raise UsageError(f"--config {known.config}: {key} must be one of {action.choices}")
            defaults[dest] = value
    target.set_defaults(**defaults)


# -- helpers ----------------------------------------------------------------

def _resolve(path: str) -> Path:
    if path.startswith("bundled:"):
        return bundled_path(path.split(":", 1)[1])
    return Path(path)


def _load_data(args) -> tuple:
    """(BinaryDataset, FeatureMap or None) from --data or --binary."""
    if getattr(args, "binary", None):
        return load_binary_csv(_resolve(args.binary), args.label, args.delimiter), None
    if not args.data:
        raise UsageError("one of --data or --binary is required")
    raw = load_csv(_resolve(args.data), args.label, delimiter=args.delimiter,
                   kinds=args.kinds, positive=args.positive,
                   max_categories=args.max_categories, ignore=args.ignore)
    return binarize(raw, args.thresholds, args.strategy, args.missing)


def _objective(args) -> ObjectiveConfig:
    return ObjectiveConfig(lam=args.lam, lam_fp=args.lam_fp, lam_fn=args.lam_fn,
                           feature_costs=tuple(args.feature_costs) if args.feature_costs else None,
                           sparsity=args.sparsity)


def _solver(args) -> SolverConfig:
    cmd = args.solver_cmd or os.environ.get(SOLVER_ENV)
    if args.solver == EXTERNAL and not cmd:
        raise UsageError(f"--solver external needs --solver-cmd or ${SOLVER_ENV}")
    return SolverConfig(args.solver, cmd, args.timeout, args.seed, args.max_selectors)


def _write_text(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# -- subcommands ------------------------------------------------------------

def cmd_binarize(args) -> None:
    data, fmap = _load_data(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.save_csv(out / "binary.csv", label=args.label)
    fmap.save(out / "featuremap.json")
    print(f"{data.n} rows, {data.m} binary features -> {out / 'binary.csv'}, "
          f"{out / 'featuremap.json'}")


def cmd_encode(args) -> None:
    data, _ = _load_data(args)
    f, layout = encode(data, args.k, _objective(args))
    emit_wcnf(f, args.out, layout)
    print(f"{f.num_vars} variables, {len(f.hard)} hard and {len(f.soft)} soft clauses "
          f"-> {args.out}")


def cmd_train(args) -> None:
    data, fmap = _load_data(args)
    cfg = LearnConfig(args.k, _objective(args), args.polarity, _solver(args))
    out = train(data, cfg)
    rule_path = Path(args.out)
    map_ref = None
    if fmap is not None:
        map_path = Path(args.map_out) if args.map_out else rule_path.with_suffix(".featuremap.json")
        fmap.save(map_path)
        map_ref = os.path.relpath(map_path.resolve(), rule_path.resolve().parent)
    elif args.map:
        fmap = FeatureMap.load(args.map)
        map_ref = os.path.relpath(Path(args.map).resolve(), rule_path.resolve().parent)
    save_rule(out.rule, rule_path, map_ref)
    print(render(out.rule, fmap))
    print(f"status: {out.status}")
    print(f"rule size: {out.size}")
    print(f"training errors: {out.n_errors}/{data.n}")
    print(f"objective: {out.cost}")
    print(f"error rows: {' '.join(map(str, out.errors)) or '-'}")
    print(f"time: {out.wall_time:.3f}s")


def cmd_predict(args) -> None:
    rule, map_path = load_rule(args.rule)
    if args.map:
        map_path = Path(args.map)
    rows = read_rows(args.data or args.binary, args.delimiter)
    if args.data:
        if map_path is None:
            raise UsageError("rule file references no feature map; pass --map")
        X = apply_map_rows(FeatureMap.load(map_path), rows)
    else:
        absent = [n for n in rule.names if n not in rows[0]]
        if absent:
            raise UsageError(f"--binary {args.binary}: missing feature columns {absent}")
        try:
            X = np.array([[int(r[n]) for n in rule.names] for r in rows])
        except ValueError as exc:
            raise DatasetError(f"--binary {args.binary}: {exc}") from exc
    pred = predict(rule, X)
    labels = None
    if args.label:
        if args.label not in rows[0]:
            raise UsageError(f"label column {args.label!r} not in {args.data or args.binary}")
        labels = coerce_labels([r[args.label] for r in rows], args.positive, args.label)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prediction"] + (["label"] if labels is not None else []))
        for i, p in enumerate(pred):
            w.writerow([i, int(p)] + ([labels[i]] if labels is not None else []))
    finally:
        if args.out:
            fh.close()


def cmd_evaluate(args) -> None:
    data, _ = _load_data(args)
    for p in args.polarities:
        if p not in POLARITIES:
            raise UsageError(f"--polarities: unknown polarity {p!r}")
    grid = make_grid(args.lams, args.ks, args.polarities, _solver(args), _objective(args))
    plan = CvPlan(tuple(grid), args.folds, args.seed, not args.no_stratify, args.jobs)
    report = cross_validate(data, plan)
    if args.out:
        report.to_csv(args.out)
    if args.summary:
        report.summary_csv(args.summary)
    print(report.to_text())
    best = report.best_summary
    if best is not None:
        print(f"best: {best.label} mean test accuracy {best.mean_test:.4f}, "
              f"median rule size {best.median_size:g}")


def cmd_curve(args) -> None:
    data, _ = _load_data(args)
    cfg = LearnConfig(args.k, _objective(args), args.polarity, _solver(args))
    points = learning_curve(data, cfg, args.fractions, args.trials, args.test_fraction, args.seed)
    _write_text(format_curve(points), args.out)


COMMANDS = {
    "binarize": cmd_binarize,
    "encode": cmd_encode,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "curve": cmd_curve,
}

ERRORS = (UsageError, DatasetError, EncodingError, FormulaError, SolverError, TrainingError,
          RuleError, ValueError, OSError)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except ERRORS as exc:
        msg = " ".join(str(exc).split())
        print(f"rulesat: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
