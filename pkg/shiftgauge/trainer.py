"""
Domain-invariant representation (DIR) training.

Minimises source cross-entropy plus alpha(p) times an alignment term on
the encoder output, where alpha follows the progressive schedule
alpha_max * (2 / (1 + exp(-10 p)) - 1). The alignment term is either a
domain discriminator played through a gradient-reversal layer or a
differentiable RBF MMD between the embedded batches.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from shiftgauge.constants import (
    ALPHA_SCHEDULE_GAMMA,
    DEFAULT_ALPHA_MAX,
    DEFAULT_AUDIT_EPOCHS,
    DEFAULT_AUDIT_HOLDOUT,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DISCRIMINATOR_WIDTHS,
    DEFAULT_EPOCHS_T1,
    DEFAULT_EPOCHS_T2,
    DEFAULT_EPSILON_SLACK,
    DEFAULT_LAMBDA_PENALTY,
    DEFAULT_LEARNING_RATE,
    DEFAULT_VAL_FRACTION,
    DEFAULT_WARM_START_EPOCHS,
    LN2,
    TRACE_COLUMNS,
    DivergenceMethod,
)
from shiftgauge.datasets import Dataset, split
from shiftgauge.divergence import estimate_divergence, median_heuristic
from shiftgauge.exceptions import InternalError, InvalidInputError, TrainingError
from shiftgauge.models import Discriminator, Hypothesis, MlpSpec, zero_one_risk
from shiftgauge.rng import RngStreams
from shiftgauge.tensor import (
    Adam,
    Tensor,
    add,
    backward,
    cross_entropy,
    gradient_reversal,
    rbf_mmd2,
    scale,
)

logger = logging.getLogger("shiftgauge")

EpochCallback = Callable[[int, Hypothesis], None]


def alpha_schedule(progress: float, alpha_max: float) -> float:
    """
    Progressive weight of the alignment term.

    Args:
        progress: Training progress p in [0, 1]
        alpha_max: Scale of the schedule

    Returns:
        alpha_max * (2 / (1 + exp(-10 p)) - 1)

    Raises:
        InvalidInputError: if progress is outside [0, 1]

    Examples:
        >>> alpha_schedule(0.0, 1.0)
        0.0
        >>> round(alpha_schedule(1.0, 1.0), 6)
        0.999909
    """
    if not 0.0 <= progress <= 1.0:
        raise InvalidInputError(f"progress must be in [0, 1], got {progress}")
    return alpha_max * (2.0 / (1.0 + math.exp(-ALPHA_SCHEDULE_GAMMA * progress)) - 1.0)


@dataclass(frozen=True)
class DirConfig:
    """
    Hyperparameters shared by DIR training, constraint audits and the
    disagreement games.

    Attributes:
        alpha_max: Final weight of the alignment term (before the schedule's
            saturation factor)
        lr: Adam learning rate
        epochs_t1: Pretraining epochs of a check model
        epochs_t2: Disagreement-maximisation epochs
        lambda_penalty: Lagrangian weight of constraint penalties
        epsilon_slack: delta in epsilon = (1 + delta) * pretrained objective
        batch_size: Minibatch size (source and target batches match)
        seed: Root seed of every random stream
        divergence_method: js_discriminator or mmd_rbf
        grl: Use a gradient-reversal layer for the discriminator game;
            False alternates discriminator and encoder updates instead
        val_fraction: Share of the source held out for validation
        audit_epochs: Epochs of the fresh audit discriminator
        audit_holdout: Held-out share of the audit sample
        discriminator_widths: Hidden widths of every discriminator
        dropout_rate: Encoder dropout during training
        warm_start_epochs: Pretraining epochs when a check model is
            warm-started from a previous maximiser
    """

    alpha_max: float = DEFAULT_ALPHA_MAX
    lr: float = DEFAULT_LEARNING_RATE
    epochs_t1: int = DEFAULT_EPOCHS_T1
    epochs_t2: int = DEFAULT_EPOCHS_T2
    lambda_penalty: float = DEFAULT_LAMBDA_PENALTY
    epsilon_slack: float = DEFAULT_EPSILON_SLACK
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    divergence_method: DivergenceMethod = DivergenceMethod.JS_DISCRIMINATOR
    grl: bool = True
    val_fraction: float = DEFAULT_VAL_FRACTION
    audit_epochs: int = DEFAULT_AUDIT_EPOCHS
    audit_holdout: float = DEFAULT_AUDIT_HOLDOUT
    discriminator_widths: Tuple[int, ...] = DEFAULT_DISCRIMINATOR_WIDTHS
    dropout_rate: float = 0.0
    warm_start_epochs: int = DEFAULT_WARM_START_EPOCHS

    def __post_init__(self) -> None:
        object.__setattr__(self, "divergence_method", DivergenceMethod(self.divergence_method))
        object.__setattr__(self, "discriminator_widths", tuple(int(w) for w in self.discriminator_widths))
        checks = [
            (self.alpha_max >= 0, "alpha_max must be >= 0"),
            (self.lr > 0, "lr must be > 0"),
            (self.epochs_t1 >= 1, "epochs_t1 must be >= 1"),
            (self.epochs_t2 >= 0, "epochs_t2 must be >= 0"),
            (self.lambda_penalty > 0, "lambda_penalty must be > 0"),
            (self.epsilon_slack >= 0, "epsilon_slack must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (0.0 < self.val_fraction < 1.0, "val_fraction must be in (0, 1)"),
            (self.audit_epochs >= 1, "audit_epochs must be >= 1"),
            (0.0 < self.audit_holdout < 1.0, "audit_holdout must be in (0, 1)"),
            (all(w >= 1 for w in self.discriminator_widths), "discriminator widths must be >= 1"),
            (0.0 <= self.dropout_rate < 1.0, "dropout_rate must be in [0, 1)"),
            (self.warm_start_epochs >= 1, "warm_start_epochs must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidInputError(f"DirConfig: {message}")

    @property
    def alpha_final(self) -> float:
        """alpha reached at the end of the schedule; used for membership checks."""
        return alpha_schedule(1.0, self.alpha_max)

    def with_overrides(self, **changes: Any) -> "DirConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["divergence_method"] = self.divergence_method.value
        data["discriminator_widths"] = list(self.discriminator_widths)
        return data


@dataclass
class TraceRecord:
    """One epoch of a training run."""

    epoch: int
    src_train_risk: float
    src_val_risk: float
    divergence: float
    objective: float

    def to_row(self) -> List[Any]:
        return [self.epoch, self.src_train_risk, self.src_val_risk, self.divergence, self.objective]


@dataclass
class TrainTrace:
    """Per-epoch records of a training run; epochs run 1, 2, 3, ..."""

    records: List[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise InternalError(f"trace epoch {record.epoch} out of order (expected {expected})")
        if not math.isfinite(record.objective):
            raise TrainingError(f"non-finite objective at epoch {record.epoch}", epoch=record.epoch)
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None

    def to_rows(self) -> Tuple[List[str], List[List[Any]]]:
        return list(TRACE_COLUMNS), [r.to_row() for r in self.records]


# ============================================================================
# Alignment term
# ============================================================================


def _domain_labels(n: int, value: int) -> np.ndarray:
    return np.full(n, value, dtype=np.int64)


class Aligner:
    """
    The divergence term between embedded source and target batches.

    For js_discriminator the aligner owns a discriminator. With ``grl`` the
    discriminator is trained jointly with the encoder through a
    gradient-reversal layer (its parameters join the main optimiser);
    without it the discriminator takes its own step on detached embeddings
    and the encoder minimises a label-flipped confusion loss.
    """

    def __init__(self, method: DivergenceMethod, latent_dim: int, streams: RngStreams, cfg: DirConfig):
        self.method = DivergenceMethod(method)
        self.grl = cfg.grl
        self.discriminator: Optional[Discriminator] = None
        self._disc_opt: Optional[Adam] = None
        if self.method is DivergenceMethod.JS_DISCRIMINATOR:
            self.discriminator = Discriminator.initialize(
                latent_dim, streams.stream("discriminator"), cfg.discriminator_widths
            )
            if not self.grl:
                self._disc_opt = Adam(self.discriminator.parameters(), cfg.lr)

    def parameters(self) -> List[Tensor]:
        """Parameters stepped together with the hypothesis."""
        if self.discriminator is not None and self.grl:
            return self.discriminator.parameters()
        return []

    def _domain_bce(self, zs: Tensor, zt: Tensor, flip: bool = False) -> Tensor:
        assert self.discriminator is not None
        s_label, t_label = (1, 0) if flip else (0, 1)
        ls = cross_entropy(self.discriminator.logits(zs), _domain_labels(zs.shape[0], s_label))
        lt = cross_entropy(self.discriminator.logits(zt), _domain_labels(zt.shape[0], t_label))
        return scale(add(ls, lt), 0.5)

    def term(self, zs: Tensor, zt: Tensor, alpha: float) -> Tuple[Tensor, float]:
        """
        Build the alignment loss for one step.

        Returns:
            (loss tensor to add to the objective, batch divergence estimate)
        """
        if self.method is DivergenceMethod.MMD_RBF:
            sigma = median_heuristic(np.vstack([zs.data, zt.data])) or 1.0
            mmd = rbf_mmd2(zs, zt, sigma)
            return scale(mmd, alpha), max(mmd.item(), 0.0)
        if self.grl:
            bce = self._domain_bce(gradient_reversal(zs, alpha), gradient_reversal(zt, alpha))
            return bce, max(LN2 - bce.item(), 0.0)
        assert self._disc_opt is not None
        disc_loss = self._domain_bce(zs.detach(), zt.detach())
        self._disc_opt.zero_grad()
        backward(disc_loss)
        self._disc_opt.step()
        confusion = self._domain_bce(zs, zt, flip=True)
        return scale(confusion, alpha), max(LN2 - disc_loss.item(), 0.0)


# ============================================================================
# Training loops
# ============================================================================


def paired_batches(
    n_source: int,
    n_target: int,
    batch_size: int,
    source_rng: np.random.Generator,
    target_rng: np.random.Generator,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    One epoch of (source indices, target indices) minibatches.

    The source sample is permuted and cut into batches; target batches of
    the same length are drawn by cycling through a target permutation.
    """
    source_order = source_rng.permutation(n_source)
    target_order = target_rng.permutation(n_target)
    cursor = 0
    for start in range(0, n_source, batch_size):
        src = source_order[start:start + batch_size]
        take = np.arange(cursor, cursor + len(src)) % n_target
        cursor = int((cursor + len(src)) % n_target)
        yield src, target_order[take]


def steps_per_epoch(n_source: int, batch_size: int) -> int:
    return max(1, math.ceil(n_source / batch_size))


def _check_inputs(spec: MlpSpec, source: Dataset, target: Optional[Dataset]) -> None:
    labels = source.require_labels()
    if np.unique(labels).size < 2:
        raise InvalidInputError(f"source '{source.name}' needs at least 2 classes present")
    if spec.input_dim != source.dim:
        raise InvalidInputError(f"spec input_dim {spec.input_dim} does not match source width {source.dim}")
    if target is not None and target.dim != source.dim:
        raise InvalidInputError(f"target width {target.dim} does not match source width {source.dim}")
    if spec.num_classes < source.num_classes:
        raise InvalidInputError(
            f"spec has {spec.num_classes} classes but source uses {source.num_classes}"
        )


def _fit(
    spec: MlpSpec,
    source: Dataset,
    target: Optional[Dataset],
    cfg: DirConfig,
    init: Optional[Hypothesis],
    epochs: Optional[int],
    callback: Optional[EpochCallback],
    label: str,
) -> Tuple[Hypothesis, TrainTrace]:
    _check_inputs(spec, source, target)
    if init is not None and init.spec != spec:
        raise InvalidInputError(f"initial hypothesis {init.spec} does not match {spec}")
    epochs = cfg.epochs_t1 if epochs is None else epochs
    if epochs < 1:
        raise InvalidInputError(f"epochs must be >= 1, got {epochs}")

    source_train, source_val = split(source, cfg.val_fraction, cfg.seed)
    streams = RngStreams(cfg.seed).child(label)
    h = init.copy() if init is not None else Hypothesis.initialize(spec, streams.stream("init"), cfg.dropout_rate)
    aligner = None
    if target is not None:
        aligner = Aligner(cfg.divergence_method, spec.latent_dim, streams, cfg)
    optimizer = Adam(h.parameters() + (aligner.parameters() if aligner else []), cfg.lr)

    source_batches = streams.stream("batches/source")
    target_batches = streams.stream("batches/target")
    source_dropout = streams.stream("dropout/source")
    target_dropout = streams.stream("dropout/target")
    n_target = len(target) if target is not None else 1
    total_steps = epochs * steps_per_epoch(len(source_train), cfg.batch_size)
    labels = source_train.require_labels()

    trace = TrainTrace()
    step = 0
    alpha = 0.0
    for epoch in range(1, epochs + 1):
        stats: List[float] = []
        for src_idx, tgt_idx in paired_batches(
            len(source_train), n_target, cfg.batch_size, source_batches, target_batches
        ):
            alpha = alpha_schedule(min(step / total_steps, 1.0), cfg.alpha_max)
            zs = h.encode(Tensor(source_train.features[src_idx]), source_dropout)
            loss = cross_entropy(h.head(zs), labels[src_idx])
            if aligner is not None and target is not None:
                zt = h.encode(Tensor(target.features[tgt_idx]), target_dropout)
                term, stat = aligner.term(zs, zt, alpha)
                loss = add(loss, term)
                stats.append(stat)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch, step=step + 1)
            optimizer.zero_grad()
            backward(loss)
            try:
                optimizer.step()
            except TrainingError as e:
                raise TrainingError(f"{e} (epoch {epoch})", epoch=epoch, step=e.step) from e
            step += 1

        divergence = float(np.mean(stats)) if stats else 0.0
        val_risk = zero_one_risk(h, source_val)
        record = TraceRecord(
            epoch=epoch,
            src_train_risk=zero_one_risk(h, source_train),
            src_val_risk=val_risk,
            divergence=divergence,
            objective=val_risk + alpha * divergence,
        )
        trace.append(record)
        logger.debug(
            f"[{label}] epoch {epoch}/{epochs}: train {record.src_train_risk:.4f} "
            f"val {val_risk:.4f} div {divergence:.4f} alpha {alpha:.4f}"
        )
        if callback is not None:
            callback(epoch, h)

    last = trace.last
    assert last is not None
    logger.info(
        f"[{label}] finished {epochs} epochs on '{source.name}': "
        f"source val risk {last.src_val_risk:.4f}, objective {last.objective:.4f}"
    )
    return h, trace


def train_dir(
    spec: MlpSpec,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    init: Optional[Hypothesis] = None,
    epochs: Optional[int] = None,
    callback: Optional[EpochCallback] = None,
    label: str = "train",
) -> Tuple[Hypothesis, TrainTrace]:
    """
    Train a domain-invariant classifier.

    Args:
        spec: Network shape; the alignment term acts on layer ``division_index``
        source: Labeled source data (split internally into train/validation)
        target: Unlabeled target data
        cfg: Hyperparameters
        init: Start from a copy of this hypothesis instead of a fresh init
        epochs: Overrides ``cfg.epochs_t1``
        callback: Called as ``callback(epoch, h)`` after every epoch
        label: Namespace of the run's random streams

    Returns:
        (trained hypothesis, per-epoch trace)

    Raises:
        InvalidInputError: on inconsistent shapes or a single-class source
        TrainingError: on a non-finite loss or gradient (carries the epoch)
    """
    return _fit(spec, source, target, cfg, init, epochs, callback, label)


def train_supervised(
    spec: MlpSpec,
    source: Dataset,
    cfg: DirConfig,
    init: Optional[Hypothesis] = None,
    epochs: Optional[int] = None,
    callback: Optional[EpochCallback] = None,
    label: str = "train",
) -> Tuple[Hypothesis, TrainTrace]:
    """Plain source cross-entropy training; same streams as ``train_dir``."""
    return _fit(spec, source, None, cfg, init, epochs, callback, label)


def dir_objective(
    h: Hypothesis,
    source: Dataset,
    target: Dataset,
    alpha: float,
    method: DivergenceMethod,
    cfg: Optional[DirConfig] = None,
) -> float:
    """
    Membership score of the check-model set: R_S(h) + alpha * d(g).

    R_S is the zero-one risk on ``source`` and d the audited divergence of
    h's encoder between ``source`` and ``target``. With alpha == 0 no audit
    runs and the source risk is returned unchanged.
    """
    risk = zero_one_risk(h, source)
    if alpha == 0:
        return risk
    estimate = estimate_divergence(h, source, target, method, cfg or DirConfig())
    return risk + alpha * estimate.value


def epsilon_from_pretrained(h0: Hypothesis, source_val: Dataset, target: Dataset, cfg: DirConfig) -> float:
    """epsilon = (1 + cfg.epsilon_slack) * dir_objective(h0) with the final alpha."""
    objective = dir_objective(h0, source_val, target, cfg.alpha_final, cfg.divergence_method, cfg)
    epsilon = (1.0 + cfg.epsilon_slack) * objective
    logger.info(f"epsilon = {epsilon:.6f} (pretrained objective {objective:.6f}, slack {cfg.epsilon_slack})")
    js = cfg.divergence_method is DivergenceMethod.JS_DISCRIMINATOR
    if js and cfg.alpha_final > 0 and epsilon >= cfg.alpha_final * LN2:
        logger.warning(
            f"epsilon {epsilon:.4f} >= alpha * ln 2: the pretrained check model did not align the domains "
            f"and the divergence constraint is vacuous"
        )
    return epsilon
