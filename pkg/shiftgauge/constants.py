"""
Shared constants: hyperparameter defaults, enums and artifact names.

Numeric defaults follow the desk-scale replication settings; file names
and CSV column lists are shared by the library and the harness.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import math
from enum import Enum

# ============================================================================
# Optimiser Defaults
# ============================================================================

DEFAULT_LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Steepness of the progressive alpha schedule: 2 / (1 + exp(-10 p)) - 1
ALPHA_SCHEDULE_GAMMA = 10.0


# ============================================================================
# Training / Estimation Defaults
# ============================================================================

DEFAULT_ALPHA_MAX = 1.0
DEFAULT_LAMBDA_PENALTY = 50.0
DEFAULT_EPSILON_SLACK = 0.10
DEFAULT_EPOCHS_T1 = 30
DEFAULT_EPOCHS_T2 = 30
DEFAULT_BATCH_SIZE = 64
DEFAULT_VAL_FRACTION = 0.2
DEFAULT_AUDIT_EPOCHS = 20
DEFAULT_AUDIT_HOLDOUT = 0.3
DEFAULT_WARM_START_EPOCHS = 5
DEFAULT_DISCRIMINATOR_WIDTHS = (64, 64)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# Upper end of the Jensen-Shannon proxy
LN2 = math.log(2.0)


# ============================================================================
# Checkpoint Format
# ============================================================================

CHECKPOINT_MAGIC = b"SHGAUGE1"
CHECKPOINT_VERSION = 1
CHECKPOINT_EXTENSION = ".ckpt"


# ============================================================================
# File System Configuration
# ============================================================================

CSV_FILE_EXTENSION = ".csv"
SVG_FILE_EXTENSION = ".svg"
MANIFEST_PREFIX = "manifest"
LOGS_DIR_NAME = "logs"
DATA_DIR_NAME = "data"
CHECKPOINTS_DIR_NAME = "checkpoints"
PLOTS_DIR_NAME = "plots"


# ============================================================================
# CSV Schemas
# ============================================================================

TRACE_COLUMNS = ["epoch", "src_train_risk", "src_val_risk", "divergence", "objective"]
PROXY_TRACE_COLUMNS = ["epoch", "disagreement", "objective", "feasible"]
METHODS_COLUMNS = ["task", "method", "predicted_risk", "true_risk", "abs_err"]
DIVISION_SWEEP_COLUMNS = [
    "division_index",
    "second_level_division",
    "seed",
    "worst_in_class_proxy_risk",
    "true_target_risk",
]
EARLYSTOP_COLUMNS = ["epoch", "src_risk", "proxy_risk", "true_target_risk"]
DETECTION_COLUMNS = ["index", "flagged", "true_error"]
DETECTION_SCORE_COLUMNS = ["precision", "recall", "f1", "tp", "fp", "fn"]


# ============================================================================
# Logging Configuration
# ============================================================================

LOG_FILENAME = "shiftgauge.log"
LOG_MAX_BYTES = 10 * 1024 * 1024  # 10 MB per file
LOG_BACKUP_COUNT = 5  # Keep 5 backup files
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%H:%M:%S"


# ============================================================================
# Plot Configuration
# ============================================================================

PLOT_WIDTH = 640
PLOT_HEIGHT = 420
PLOT_MARGIN = 56

PLOT_COLORS = [
    "#2563eb",  # blue
    "#ef4444",  # red
    "#10b981",  # green
    "#f59e0b",  # orange
    "#455A64",  # blue-gray
]


# ============================================================================
# Enumerations
# ============================================================================


class DivergenceMethod(str, Enum):
    """Divergence used for alignment training and constraint audits."""

    JS_DISCRIMINATOR = "js_discriminator"
    MMD_RBF = "mmd_rbf"


class ClassDivergenceKind(str, Enum):
    """Which class-level divergence an adversarial estimate refers to."""

    HDH = "hdh"
    FGG = "fgg"
    LATENT_FDF = "latent_fdf"


class ConstraintKind(str, Enum):
    """Constraint defining a hypothesis class for divergence estimation."""

    NONE = "none"
    SOURCE_RISK = "source_risk"  # {h : R_S(h) <= eps}
    DIR = "dir"  # check-model set P^eps


class PlotKind(str, Enum):
    """Supported SVG plot kinds."""

    RISK_CURVE = "risk_curve"
    SCATTER = "scatter_pred_vs_true"
    DIVISION_UCURVE = "division_ucurve"


class DomainTag(str, Enum):
    """Which side of the shift a dataset belongs to."""

    SOURCE = "source"
    TARGET = "target"
