"""
Proxy risk of a candidate model and what is built on it.

compute_proxy_risk pretrains a domain-invariant check model h', sets
epsilon from its audited objective and then maximises the target
disagreement between h and h' while h' stays in the check-model set.
The largest disagreement seen at a feasible epoch is the proxy risk.

Also here: worst in-class proxy risk and division selection, early
stopping traces, and point-wise error detection.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shiftgauge.adversarial import (
    DisagreementGame,
    GameEpoch,
    HypothesisClass,
    Player,
    class_epsilon,
    make_player,
    pretrain_member,
)
from shiftgauge.constants import (
    DEFAULT_SEEDS,
    DIVISION_SWEEP_COLUMNS,
    EARLYSTOP_COLUMNS,
    PROXY_TRACE_COLUMNS,
    ConstraintKind,
)
from shiftgauge.datasets import Dataset, split
from shiftgauge.exceptions import InternalError, InvalidInputError, ShapeError
from shiftgauge.models import Hypothesis, MlpSpec, zero_one_risk
from shiftgauge.rng import RngStreams
from shiftgauge.trainer import DirConfig, epsilon_from_pretrained, train_dir

logger = logging.getLogger("shiftgauge")


@dataclass
class ProxyResult:
    """
    Outcome of one proxy-risk estimation.

    Attributes:
        max_risk: Largest target disagreement at a feasible epoch
        best_check_model: Snapshot of the feasible h' attaining max_risk
        pretrained_check_model: h' after the pretraining phase
        epsilon_used: Threshold of the check-model set
        feasible_epochs: Epochs (including epoch 0) where h' was feasible
        best_epoch: Epoch of best_check_model (0 means the pretrained model)
        trace: Per-epoch disagreement, objective and feasibility
    """

    max_risk: float
    best_check_model: Hypothesis
    pretrained_check_model: Hypothesis
    epsilon_used: float
    feasible_epochs: int
    best_epoch: int
    trace: List[GameEpoch] = field(default_factory=list)

    def to_rows(self) -> Tuple[List[str], List[List[Any]]]:
        return list(PROXY_TRACE_COLUMNS), [e.to_row() for e in self.trace]


def _check_candidate(h: Hypothesis, check_spec: MlpSpec, source: Dataset, target: Dataset) -> None:
    if h.input_dim != check_spec.input_dim or source.dim != h.input_dim or target.dim != h.input_dim:
        raise ShapeError(
            f"width mismatch: candidate {h.input_dim}, check spec {check_spec.input_dim}, "
            f"source {source.dim}, target {target.dim}"
        )
    if h.num_classes != check_spec.num_classes:
        raise InvalidInputError(
            f"class-count mismatch: candidate {h.num_classes} vs check spec {check_spec.num_classes}"
        )


def compute_proxy_risk(
    h: Hypothesis,
    check_spec: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    init: Optional[Hypothesis] = None,
    pretrain_epochs: Optional[int] = None,
    label: str = "proxy",
) -> ProxyResult:
    """
    Estimate the target risk of ``h`` without target labels.

    Args:
        h: Candidate model (never modified)
        check_spec: Shape and division of the check models
        source: Labeled source data
        target: Unlabeled target data; disagreement is measured on it
        cfg: Hyperparameters (epochs_t1 pretraining, epochs_t2 ascent)
        init: Warm start for the check model
        pretrain_epochs: Overrides ``cfg.epochs_t1``
        label: Namespace of the random streams

    Raises:
        InternalError: if the pretrained check model is not feasible
        TrainingError: on non-finite losses
    """
    _check_candidate(h, check_spec, source, target)
    pretrained, _ = train_dir(
        check_spec, source, target, cfg, init=init, epochs=pretrain_epochs, label=f"{label}/pretrain"
    )
    source_train, source_val = split(source, cfg.val_fraction, cfg.seed)
    epsilon = epsilon_from_pretrained(pretrained, source_val, target, cfg)

    streams = RngStreams(cfg.seed).child(label)
    candidate = Player(h, ConstraintKind.NONE, math.inf, [], None, "candidate")
    check_model = pretrained.copy()
    check = make_player(check_model, ConstraintKind.DIR, epsilon, check_model.parameters(), cfg, streams, "check")
    game = DisagreementGame(candidate, check, difference=False, cfg=cfg, streams=streams)
    result = game.play(source_train, source_val, target, target, target, cfg.epochs_t2, label)

    if not result.trace[0].feasible:
        raise InternalError(
            f"pretrained check model infeasible: objective {result.trace[0].objective:.6f} > epsilon {epsilon:.6f}"
        )
    assert result.best_pair is not None and result.best_epoch is not None
    logger.info(
        f"[{label}] proxy risk {result.best_value:.4f} (epoch {result.best_epoch}, "
        f"{result.feasible_epochs}/{len(result.trace)} feasible, epsilon {epsilon:.4f})"
    )
    return ProxyResult(
        max_risk=result.best_value,
        best_check_model=result.best_pair[1],
        pretrained_check_model=pretrained,
        epsilon_used=epsilon,
        feasible_epochs=result.feasible_epochs,
        best_epoch=result.best_epoch,
        trace=result.trace,
    )


# ============================================================================
# Worst in-class proxy risk and division selection
# ============================================================================


@dataclass
class SweepTask:
    """One (division, second-level division, seed) cell of a division sweep."""

    division_index: int
    second_level_division: int
    seed: int
    template: MlpSpec
    source: Dataset
    target: Dataset
    cfg: DirConfig


@dataclass
class SweepRow:
    """
    Result of one sweep cell.

    ``model`` is the first-level DIR model trained at ``division_index``;
    the harness scores it on hidden labels to fill ``true_target_risk``.
    """

    division_index: int
    second_level_division: int
    seed: int
    worst_in_class_proxy_risk: float
    model: Optional[Hypothesis] = field(default=None, repr=False)
    true_target_risk: Optional[float] = None

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.division_index, self.second_level_division, self.seed)

    def to_row(self) -> List[Any]:
        return [
            self.division_index,
            self.second_level_division,
            self.seed,
            self.worst_in_class_proxy_risk,
            "" if self.true_target_risk is None else self.true_target_risk,
        ]


@dataclass
class DivisionReport:
    """Worst in-class proxy risk of one division, aggregated over seeds."""

    division_index: int
    worst_in_class_proxy_risk: float
    second_level_division: int
    seeds: List[int]
    per_seed: List[float]
    models: List[Hypothesis] = field(default_factory=list, repr=False)


def worst_in_class_value(
    division_i: int,
    family_spec: MlpSpec,
    second_level_spec: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
) -> Tuple[float, Hypothesis]:
    """
    Single-seed worst in-class proxy risk of division ``division_i``.

    Two players are pretrained independently: h in P^eps over the family
    divided at ``division_i`` and h' in P^eps over the second-level class.
    Each gets epsilon from its own pretrained objective. The game then
    maximises their target disagreement under both penalties.

    Returns:
        (best feasible target disagreement, h after pretraining)
    """
    first = HypothesisClass(family_spec.with_division(division_i), ConstraintKind.DIR)
    second = HypothesisClass(second_level_spec, ConstraintKind.DIR)
    label = f"wic/{division_i}/{second_level_spec.division_index}"
    source_train, source_val = split(source, cfg.val_fraction, cfg.seed)
    h = pretrain_member(first, source, target, cfg, f"{label}/a")
    h2 = pretrain_member(second, source, target, cfg, f"{label}/b")
    streams = RngStreams(cfg.seed).child(label)
    a_model, b_model = h.copy(), h2.copy()
    a = make_player(
        a_model, ConstraintKind.DIR, class_epsilon(first, h, source_val, target, cfg),
        a_model.parameters(), cfg, streams, "a",
    )
    b = make_player(
        b_model, ConstraintKind.DIR, class_epsilon(second, h2, source_val, target, cfg),
        b_model.parameters(), cfg, streams, "b",
    )
    game = DisagreementGame(a, b, difference=False, cfg=cfg, streams=streams)
    result = game.play(source_train, source_val, target, target, target, cfg.epochs_t2, label)
    if result.best_epoch is None:
        raise InternalError(f"[{label}] pretrained pair infeasible")
    return result.best_value, h


def run_sweep_task(task: SweepTask) -> SweepRow:
    """Worker entry point; module-level so process pools can pickle it."""
    cfg = task.cfg.with_overrides(seed=task.seed)
    value, model = worst_in_class_value(
        task.division_index,
        task.template,
        task.template.with_division(task.second_level_division),
        task.source,
        task.target,
        cfg,
    )
    return SweepRow(task.division_index, task.second_level_division, task.seed, value, model)


def worst_in_class_proxy_risk(
    division_i: int,
    second_level_spec: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    family_spec: Optional[MlpSpec] = None,
) -> DivisionReport:
    """
    Worst in-class proxy risk of a division, median over ``seeds``.

    ``family_spec`` defaults to the second-level spec's network; only its
    division differs between the two classes.

    Raises:
        InvalidInputError: if the division is not in [1, N-1] or seeds is empty
    """
    family = family_spec or second_level_spec
    if not 1 <= division_i <= family.total_layers - 1:
        raise InvalidInputError(f"division {division_i} outside [1, {family.total_layers - 1}]")
    if not seeds:
        raise InvalidInputError("worst in-class proxy risk needs at least one seed")
    values, models = [], []
    for seed in seeds:
        value, model = worst_in_class_value(
            division_i, family, second_level_spec, source, target, cfg.with_overrides(seed=seed)
        )
        values.append(value)
        models.append(model)
    return DivisionReport(
        division_index=division_i,
        worst_in_class_proxy_risk=float(statistics.median(values)),
        second_level_division=second_level_spec.division_index,
        seeds=list(seeds),
        per_seed=values,
        models=models,
    )


@dataclass
class DivisionSelection:
    """Chosen division plus the full sweep table, ordered by key."""

    chosen_division: int
    medians: Dict[int, float]
    rows: List[SweepRow]

    def to_rows(self) -> Tuple[List[str], List[List[Any]]]:
        return list(DIVISION_SWEEP_COLUMNS), [r.to_row() for r in self.rows]


TaskRunner = Callable[[List[SweepTask]], List[SweepRow]]


def _run_sequential(tasks: List[SweepTask]) -> List[SweepRow]:
    return [run_sweep_task(t) for t in tasks]


def choose_division(rows: Sequence[SweepRow]) -> Tuple[int, Dict[int, float]]:
    """argmin over divisions of the median sweep value; ties go to the shallower encoder."""
    if not rows:
        raise InvalidInputError("cannot choose a division from an empty sweep")
    by_division: Dict[int, List[float]] = {}
    for row in rows:
        by_division.setdefault(row.division_index, []).append(row.worst_in_class_proxy_risk)
    medians = {d: float(statistics.median(v)) for d, v in sorted(by_division.items())}
    chosen = min(medians, key=lambda d: (medians[d], d))
    return chosen, medians


def select_division(
    total_layers: int,
    candidate_divisions: Sequence[int],
    second_level_divisions: Sequence[int],
    template: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    runner: Optional[TaskRunner] = None,
) -> DivisionSelection:
    """
    Sweep (division, second-level division, seed) and pick the division with
    the smallest median worst in-class proxy risk.

    Args:
        runner: Executes the task list (e.g. on a process pool); results
            are re-ordered by key, so any completion order is fine

    Raises:
        InvalidInputError: on an empty candidate list or a division outside
            [1, total_layers - 1]
    """
    if not candidate_divisions:
        raise InvalidInputError("select_division needs at least one candidate division")
    if template.total_layers != total_layers:
        raise InvalidInputError(f"template has {template.total_layers} layers, expected {total_layers}")
    for d in [*candidate_divisions, *second_level_divisions]:
        if not 1 <= d <= total_layers - 1:
            raise InvalidInputError(f"division {d} outside [1, {total_layers - 1}]")
    if not second_level_divisions or not seeds:
        raise InvalidInputError("select_division needs second-level divisions and seeds")

    tasks = [
        SweepTask(d, s2, seed, template, source, target, cfg)
        for d in candidate_divisions
        for s2 in second_level_divisions
        for seed in seeds
    ]
    rows = sorted((runner or _run_sequential)(tasks), key=lambda r: r.key)
    chosen, medians = choose_division(rows)
    logger.info(f"Division medians {medians}; chosen division {chosen}")
    return DivisionSelection(chosen, medians, rows)


# ============================================================================
# Early stopping
# ============================================================================


@dataclass
class EarlyStopPoint:
    """Proxy risk of one training checkpoint."""

    epoch: int
    src_risk: float
    proxy_risk: float
    true_target_risk: Optional[float] = None

    def to_row(self) -> List[Any]:
        return [
            self.epoch,
            self.src_risk,
            self.proxy_risk,
            "" if self.true_target_risk is None else self.true_target_risk,
        ]


def early_stopping_trace(
    checkpoints: Sequence[Hypothesis],
    check_spec: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    epochs: Optional[Sequence[int]] = None,
) -> List[EarlyStopPoint]:
    """
    Proxy risk at each training checkpoint.

    The first checkpoint gets a full estimation; each later one warm-starts
    its check model from the previous maximiser with
    ``cfg.warm_start_epochs`` pretraining epochs.

    Args:
        checkpoints: Hypotheses ordered by training epoch
        epochs: Epoch number of each checkpoint (defaults to 1, 2, ...)
    """
    epochs = list(epochs) if epochs is not None else list(range(1, len(checkpoints) + 1))
    if len(epochs) != len(checkpoints):
        raise InvalidInputError(f"{len(checkpoints)} checkpoints but {len(epochs)} epoch numbers")
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise InvalidInputError("checkpoints must be ordered by epoch")
    _, source_val = split(source, cfg.val_fraction, cfg.seed)
    points: List[EarlyStopPoint] = []
    previous: Optional[Hypothesis] = None
    for k, (epoch, h) in enumerate(zip(epochs, checkpoints)):
        result = compute_proxy_risk(
            h,
            check_spec,
            source,
            target,
            cfg,
            init=previous,
            pretrain_epochs=cfg.warm_start_epochs if previous is not None else None,
            label=f"earlystop/{k}",
        )
        previous = result.best_check_model
        points.append(EarlyStopPoint(epoch, zero_one_risk(h, source_val), result.max_risk))
    return points


def earlystop_rows(points: Sequence[EarlyStopPoint]) -> Tuple[List[str], List[List[Any]]]:
    return list(EARLYSTOP_COLUMNS), [p.to_row() for p in points]


# ============================================================================
# Error detection
# ============================================================================


@dataclass
class DetectionScore:
    """Confusion counts and derived scores; errors are the positive class."""

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_row(self) -> List[Any]:
        return [self.precision, self.recall, self.f1, self.tp, self.fp, self.fn]


def detect_errors(h: Hypothesis, proxy: ProxyResult, x_star: Any) -> np.ndarray:
    """Flag each point where the best check model disagrees with h."""
    features = getattr(x_star, "features", x_star)
    return h.predict(features) != proxy.best_check_model.predict(features)


def score_error_detection(flags: Any, true_errors: Any) -> DetectionScore:
    """
    Precision, recall and F1 of error flags.

    With no flagged and no true errors the detection is perfect (all
    scores 1.0); with true errors but no flags every score is 0.0.
    """
    flags = np.asarray(flags, dtype=bool)
    true_errors = np.asarray(true_errors, dtype=bool)
    if flags.shape != true_errors.shape:
        raise ShapeError(f"flags {list(flags.shape)} vs true errors {list(true_errors.shape)}")
    tp = int(np.count_nonzero(flags & true_errors))
    fp = int(np.count_nonzero(flags & ~true_errors))
    fn = int(np.count_nonzero(~flags & true_errors))
    if tp + fp + fn == 0:
        return DetectionScore(1.0, 1.0, 1.0, tp, fp, fn)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn)
    return DetectionScore(precision, recall, f1, tp, fp, fn)
