"""Interpretable k-clause CNF/DNF rule learning by reduction to weighted MaxSAT."""
from .dataset import (BinaryDataset, FeatureMap, RawTable, apply_map, binarize, bundled_path,
                      load_csv)
from .encoder import ObjectiveConfig, VarLayout, WcnfFormula, emit_wcnf, encode, parse_wcnf
from .evaluation import CvPlan, EvalReport, cross_validate, learning_curve, metrics
from .learner import LearnConfig, TrainOutcome, sweep_lambda, train
from .rules import CNF, DNF, Rule, classify, decode, render, size
from .solver import Assignment, SolverConfig, solve, solve_external, solve_internal

__version__ = "0.1.0"
