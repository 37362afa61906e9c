"""
shiftgauge - target-risk estimation under distribution shift.

This package estimates how a classifier will do on an unlabeled target
domain, using domain-invariant check models:
- tensor / models: a small numpy autodiff engine and MLP hypotheses
- trainer: domain-invariant (DANN-style) training
- divergence / adversarial: sample and class divergences
- proxy: proxy risk, division selection, early stopping, error detection
- baselines: Ben-David and confidence-score predictors
- oracle: exact enumeration over tiny finite classes
- datasets: synthetic shift benchmarks and file loaders

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

__version__ = "1.0.0"
__author__ = "shiftgauge Project"

from .baselines import ben_david_estimate, conf_score_estimate, score_methods
from .datasets import Dataset, ShiftPair, load_csv, load_idx, make_gauss_shift, make_moons_shift, make_toy2d, split
from .models import Hypothesis, MlpSpec, disagreement, zero_one_risk
from .proxy import (
    compute_proxy_risk,
    detect_errors,
    early_stopping_trace,
    score_error_detection,
    select_division,
    worst_in_class_proxy_risk,
)
from .trainer import DirConfig, alpha_schedule, dir_objective, epsilon_from_pretrained, train_dir, train_supervised

__all__ = [
    "Dataset",
    "DirConfig",
    "Hypothesis",
    "MlpSpec",
    "ShiftPair",
    "alpha_schedule",
    "ben_david_estimate",
    "compute_proxy_risk",
    "conf_score_estimate",
    "detect_errors",
    "dir_objective",
    "disagreement",
    "early_stopping_trace",
    "epsilon_from_pretrained",
    "load_csv",
    "load_idx",
    "make_gauss_shift",
    "make_moons_shift",
    "make_toy2d",
    "score_error_detection",
    "score_methods",
    "select_division",
    "split",
    "train_dir",
    "train_supervised",
    "worst_in_class_proxy_risk",
    "zero_one_risk",
]
