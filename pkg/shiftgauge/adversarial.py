"""
Two-player disagreement games over constrained hypothesis classes.

Both class divergences and the worst in-class proxy risk are suprema of a
disagreement statistic over pairs (h, h') drawn from constrained classes.
They are estimated by the same game: pretrain both players, then descend a
surrogate loss of the statistic plus a lambda-weighted penalty on each
player's constraint while it exceeds epsilon, checking feasibility on held-out
splits after every epoch and keeping the best feasible zero-one value.
Difference statistics are played once per sign and the larger feasible
value is kept.

- HdH: two independent hypotheses of one class, statistic
  |R_S(h, h') - R_T(h, h')|.
- F_GdG: one shared predictor, two encoders.
- latent FdF: one fixed encoder, two predictors.
- worst in-class: two independently constrained classes, statistic
  R_T(h, h').

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from shiftgauge.constants import ClassDivergenceKind, ConstraintKind
from shiftgauge.datasets import Dataset, split
from shiftgauge.exceptions import EstimationError, InvalidInputError, TrainingError
from shiftgauge.models import Hypothesis, Linear, MlpSpec, disagreement, zero_one_risk
from shiftgauge.rng import RngStreams
from shiftgauge.tensor import Adam, Tensor, add, backward, cross_entropy, disagreement_loss, scale, total
from shiftgauge.trainer import (
    Aligner,
    DirConfig,
    dir_objective,
    paired_batches,
    train_dir,
    train_supervised,
)

logger = logging.getLogger("shiftgauge")

# Scale of the seeded perturbation that separates players started from
# the same weights
SYMMETRY_JITTER = 0.01


@dataclass(frozen=True)
class HypothesisClass:
    """
    A hypothesis class for divergence estimation.

    Attributes:
        spec: Network family (shape and division)
        constraint: none, source_risk ({h : R_S(h) <= eps}) or dir (P^eps)
        epsilon: Explicit threshold; derived from a pretrained member as
            (1 + slack) * its score when omitted
        singleton: The class holds a single hypothesis
    """

    spec: MlpSpec
    constraint: ConstraintKind = ConstraintKind.NONE
    epsilon: Optional[float] = None
    singleton: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraint", ConstraintKind(self.constraint))
        if self.epsilon is not None and self.epsilon < 0:
            raise InvalidInputError(f"epsilon must be >= 0, got {self.epsilon}")

    def with_division(self, division_index: int) -> "HypothesisClass":
        return replace(self, spec=self.spec.with_division(division_index))


@dataclass
class GameEpoch:
    """
    Held-out evaluation after one game epoch (epoch 0 is the pretrained pair).

    Attributes:
        value: Zero-one statistic of the pair
        objective: Largest membership score among constrained players
        feasible: Every constrained player satisfies its threshold
        scores: Membership score of each player
        loss: Mean minibatch game loss (NaN for epoch 0)
    """

    epoch: int
    value: float
    objective: float
    feasible: bool
    scores: Tuple[float, float]
    loss: float = math.nan

    def to_row(self) -> List[Any]:
        return [self.epoch, self.value, self.objective, int(self.feasible)]


@dataclass
class ClassDivergenceEstimate:
    """
    Best feasible zero-one value of a class divergence.

    Attributes:
        kind: hdh, fgg or latent_fdf
        value: In [0, 1]
        pair: Snapshot of the maximising pair (None for singleton classes)
        trace: Per-epoch evaluations of the game
        epsilon: Threshold of the constrained class, if any
        feasible_epochs: Number of epochs where the pair was feasible
        source_heavier: The maximum came from the game ascending
            R_S - R_T rather than R_T - R_S
    """

    kind: ClassDivergenceKind
    value: float
    pair: Optional[Tuple[Hypothesis, Hypothesis]] = None
    trace: List[GameEpoch] = field(default_factory=list)
    epsilon: Optional[float] = None
    feasible_epochs: int = 0
    source_heavier: bool = False


# ============================================================================
# Class membership
# ============================================================================


def membership_score(
    h: Hypothesis, constraint: ConstraintKind, source_val: Dataset, target: Dataset, cfg: DirConfig
) -> float:
    """The quantity compared against epsilon for a given constraint."""
    constraint = ConstraintKind(constraint)
    if constraint is ConstraintKind.NONE:
        return 0.0
    if constraint is ConstraintKind.SOURCE_RISK:
        return zero_one_risk(h, source_val)
    return dir_objective(h, source_val, target, cfg.alpha_final, cfg.divergence_method, cfg)


def class_epsilon(
    cls: HypothesisClass, pretrained: Hypothesis, source_val: Dataset, target: Dataset, cfg: DirConfig
) -> float:
    """Explicit epsilon, or (1 + slack) times the pretrained member's score."""
    if cls.constraint is ConstraintKind.NONE:
        return math.inf
    if cls.epsilon is not None:
        return float(cls.epsilon)
    score = membership_score(pretrained, cls.constraint, source_val, target, cfg)
    return (1.0 + cfg.epsilon_slack) * score


def pretrain_member(
    cls: HypothesisClass,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    label: str,
    init: Optional[Hypothesis] = None,
    epochs: Optional[int] = None,
) -> Hypothesis:
    """DIR training for P^eps classes, plain source training otherwise."""
    if cls.constraint is ConstraintKind.DIR:
        h, _ = train_dir(cls.spec, source, target, cfg, init=init, epochs=epochs, label=label)
    else:
        h, _ = train_supervised(cls.spec, source, cfg, init=init, epochs=epochs, label=label)
    return h


# ============================================================================
# Game engine
# ============================================================================


@dataclass
class Player:
    """One side of a disagreement game."""

    model: Hypothesis
    constraint: ConstraintKind
    epsilon: float
    trainable: List[Tensor]
    aligner: Optional[Aligner] = None
    name: str = "h"

    def score(self, source_val: Dataset, target: Dataset, cfg: DirConfig) -> float:
        return membership_score(self.model, self.constraint, source_val, target, cfg)


def make_player(
    model: Hypothesis,
    constraint: ConstraintKind,
    epsilon: float,
    trainable: List[Tensor],
    cfg: DirConfig,
    streams: RngStreams,
    name: str,
) -> Player:
    """
    Wrap a model as a game player.

    A DIR-constrained player gets its own aligner only when some of its
    encoder parameters are trainable; a frozen encoder keeps a constant
    divergence that the held-out membership check already accounts for.
    """
    constraint = ConstraintKind(constraint)
    encoder_ids = {id(p) for p in model.encoder_parameters()}
    aligner = None
    if constraint is ConstraintKind.DIR and any(id(p) in encoder_ids for p in trainable):
        aligner = Aligner(cfg.divergence_method, model.spec.latent_dim, streams.child(name), cfg)
    return Player(model, constraint, epsilon, trainable, aligner, name)


@dataclass
class GameResult:
    best_value: float
    best_epoch: Optional[int]
    best_pair: Optional[Tuple[Hypothesis, Hypothesis]]
    trace: List[GameEpoch]
    best_infeasible: Optional[float]
    reverse: bool = False

    @property
    def feasible_epochs(self) -> int:
        return sum(1 for e in self.trace if e.feasible)


@dataclass
class ConstraintTerms:
    """Minibatch surrogate of one player's constraint."""

    source_loss: Tensor
    alignment: Optional[Tensor]
    value: float


def _constraint_terms(
    player: Player, zs: Tensor, ys: np.ndarray, zt: Tensor, alpha: float
) -> Optional[ConstraintTerms]:
    if player.constraint is ConstraintKind.NONE or not player.trainable:
        return None
    source_loss = cross_entropy(player.model.head(zs), ys)
    value = source_loss.item()
    alignment = None
    if player.constraint is ConstraintKind.DIR and player.aligner is not None:
        alignment, divergence = player.aligner.term(zs, zt, alpha)
        value += alpha * divergence
    return ConstraintTerms(source_loss, alignment, value)


class DisagreementGame:
    """
    Maximise a zero-one disagreement statistic between two players.

    Each trainable player minimises a disagreement loss against the
    other's predictions on the side that should disagree and a
    cross-entropy against them on the side that should agree. A player's
    constraint is penalised with weight lambda only while its minibatch
    surrogate (source cross-entropy plus alpha times the batch divergence)
    exceeds its epsilon; below it only the alignment term stays on, so the
    player keeps its divergence in check while the disagreement moves.

    Args:
        a, b: The players; a player with no trainable tensors stays fixed
        difference: True for |R_S(a, b) - R_T(a, b)| (class divergences),
            False for R_T(a, b) (proxy risks)
        cfg: Hyperparameters (epochs_t2, lambda_penalty, lr, batch_size)
        streams: Random streams of this game
        reverse: With ``difference``, ascend R_S - R_T instead of R_T - R_S
    """

    def __init__(
        self,
        a: Player,
        b: Player,
        difference: bool,
        cfg: DirConfig,
        streams: RngStreams,
        reverse: bool = False,
    ):
        self.a = a
        self.b = b
        self.difference = difference
        self.reverse = reverse and difference
        self.cfg = cfg
        self.streams = streams
        self.penalised_steps = 0

    def _value(self, source_val: Dataset, target_eval: Dataset) -> float:
        d_target = disagreement(self.a.model, self.b.model, target_eval)
        if not self.difference:
            return d_target
        return abs(disagreement(self.a.model, self.b.model, source_val) - d_target)

    def _evaluate(
        self, epoch: int, source_val: Dataset, target_eval: Dataset, target_audit: Dataset, loss: float
    ) -> GameEpoch:
        scores = (
            self.a.score(source_val, target_audit, self.cfg),
            self.b.score(source_val, target_audit, self.cfg),
        )
        feasible = all(s <= p.epsilon for s, p in zip(scores, (self.a, self.b)))
        constrained = [s for s, p in zip(scores, (self.a, self.b)) if p.constraint is not ConstraintKind.NONE]
        return GameEpoch(
            epoch=epoch,
            value=self._value(source_val, target_eval),
            objective=max(constrained) if constrained else 0.0,
            feasible=feasible,
            scores=scores,
            loss=loss,
        )

    def _gain(self, pred: Hypothesis, z_t: Tensor, z_s: Tensor, other_t: np.ndarray, other_s: np.ndarray) -> Tensor:
        """Loss whose minimum is the statistic's maximum for one player."""
        if not self.difference:
            return disagreement_loss(pred.head(z_t), other_t)
        if self.reverse:
            return add(disagreement_loss(pred.head(z_s), other_s), cross_entropy(pred.head(z_t), other_t))
        return add(disagreement_loss(pred.head(z_t), other_t), cross_entropy(pred.head(z_s), other_s))

    def _step_loss(
        self,
        xs: np.ndarray,
        ys: np.ndarray,
        xt: np.ndarray,
        rng_a: Optional[np.random.Generator],
        rng_b: Optional[np.random.Generator],
    ) -> Tensor:
        alpha = self.cfg.alpha_final
        # fixed players are evaluated in inference mode
        rng_a = rng_a if self.a.trainable else None
        rng_b = rng_b if self.b.trainable else None
        za_s, za_t = self.a.model.encode(Tensor(xs), rng_a), self.a.model.encode(Tensor(xt), rng_a)
        zb_s, zb_t = self.b.model.encode(Tensor(xs), rng_b), self.b.model.encode(Tensor(xt), rng_b)
        labels_a_t = np.argmax(self.a.model.head(za_t).data, axis=1)
        labels_b_t = np.argmax(self.b.model.head(zb_t).data, axis=1)
        labels_a_s = np.argmax(self.a.model.head(za_s).data, axis=1)
        labels_b_s = np.argmax(self.b.model.head(zb_s).data, axis=1)

        parts: List[Tensor] = []
        for pred, z_t, z_s, other_t, other_s in (
            (self.b, zb_t, zb_s, labels_a_t, labels_a_s),
            (self.a, za_t, za_s, labels_b_t, labels_b_s),
        ):
            if pred.trainable:
                parts.append(self._gain(pred.model, z_t, z_s, other_t, other_s))

        for player, z_s, z_t in ((self.a, za_s, za_t), (self.b, zb_s, zb_t)):
            terms = _constraint_terms(player, z_s, ys, z_t, alpha)
            if terms is None:
                continue
            if terms.value > player.epsilon:
                self.penalised_steps += 1
                penalty = terms.source_loss if terms.alignment is None else add(terms.source_loss, terms.alignment)
                parts.append(scale(penalty, self.cfg.lambda_penalty))
            elif terms.alignment is not None:
                parts.append(terms.alignment)
        return total(parts)

    def play(
        self,
        source_train: Dataset,
        source_val: Dataset,
        target_train: Dataset,
        target_eval: Dataset,
        target_audit: Dataset,
        epochs: int,
        name: str = "game",
    ) -> GameResult:
        """
        Run ``epochs`` ascent epochs; epoch 0 evaluates the starting pair.

        Returns:
            GameResult with the best feasible value, its epoch and a
            snapshot of the maximising pair
        """
        trace: List[GameEpoch] = []
        best_value, best_epoch, best_pair = 0.0, None, None
        best_infeasible: Optional[float] = None

        def record(entry: GameEpoch) -> None:
            nonlocal best_value, best_epoch, best_pair, best_infeasible
            trace.append(entry)
            if entry.feasible:
                if best_epoch is None or entry.value > best_value:
                    best_value, best_epoch = entry.value, entry.epoch
                    best_pair = (self.a.model.copy(), self.b.model.copy())
                    logger.info(f"[{name}] epoch {entry.epoch}: feasible maximum {entry.value:.4f}")
            elif best_infeasible is None or entry.value > best_infeasible:
                best_infeasible = entry.value

        def result() -> GameResult:
            return GameResult(best_value, best_epoch, best_pair, trace, best_infeasible, self.reverse)

        record(self._evaluate(0, source_val, target_eval, target_audit, math.nan))
        params = self.a.trainable + self.b.trainable
        for player in (self.a, self.b):
            if player.aligner is not None:
                params += player.aligner.parameters()
        if epochs == 0 or not params:
            return result()

        optimizer = Adam(params, self.cfg.lr)
        labels = source_train.require_labels()
        batch_s = self.streams.stream("batches/source")
        batch_t = self.streams.stream("batches/target")
        rng_a = self.streams.stream(f"dropout/{self.a.name}")
        rng_b = self.streams.stream(f"dropout/{self.b.name}")
        for epoch in range(1, epochs + 1):
            losses: List[float] = []
            self.penalised_steps = 0
            for src_idx, tgt_idx in paired_batches(
                len(source_train), len(target_train), self.cfg.batch_size, batch_s, batch_t
            ):
                loss = self._step_loss(
                    source_train.features[src_idx],
                    labels[src_idx],
                    target_train.features[tgt_idx],
                    rng_a,
                    rng_b,
                )
                if not math.isfinite(loss.item()):
                    raise TrainingError(f"[{name}] non-finite game loss at epoch {epoch}", epoch=epoch)
                optimizer.zero_grad()
                backward(loss)
                try:
                    optimizer.step()
                except TrainingError as e:
                    raise TrainingError(f"[{name}] {e} (epoch {epoch})", epoch=epoch, step=e.step) from e
                losses.append(loss.item())
            entry = self._evaluate(epoch, source_val, target_eval, target_audit, float(np.mean(losses)))
            logger.debug(
                f"[{name}] epoch {epoch}/{epochs}: value {entry.value:.4f} "
                f"objective {entry.objective:.4f} feasible {entry.feasible} "
                f"penalty active in {self.penalised_steps} player-steps of {len(losses)}"
            )
            record(entry)
        return result()


# ============================================================================
# Class divergences
# ============================================================================


def _jitter(layers: List[Linear], rng: np.random.Generator) -> None:
    for layer in layers:
        layer.weight.data += rng.normal(0.0, SYMMETRY_JITTER, layer.weight.shape)


def _trivial(kind: ClassDivergenceKind) -> ClassDivergenceEstimate:
    logger.info(f"{kind.value}: singleton class, divergence is 0")
    return ClassDivergenceEstimate(kind=kind, value=0.0)


def _check_data(source: Dataset, target: Dataset, spec: MlpSpec) -> None:
    source.require_labels()
    if source.dim != spec.input_dim or target.dim != spec.input_dim:
        raise InvalidInputError(
            f"data widths {source.dim}/{target.dim} do not match input_dim {spec.input_dim}"
        )


PairFactory = Callable[[], Tuple[Player, Player]]


def _finish(
    kind: ClassDivergenceKind, result: GameResult, epsilon: Optional[float]
) -> ClassDivergenceEstimate:
    if result.best_epoch is None:
        best = result.best_infeasible
        raise EstimationError(
            f"{kind.value}: no feasible pair in {len(result.trace)} epochs "
            f"(best infeasible value {best if best is not None else float('nan'):.4f})",
            best_infeasible=best,
        )
    value = min(max(result.best_value, 0.0), 1.0)
    logger.info(
        f"{kind.value} estimate {value:.4f} at epoch {result.best_epoch} "
        f"({'source' if result.reverse else 'target'} disagreement larger)"
    )
    return ClassDivergenceEstimate(
        kind=kind,
        value=value,
        pair=result.best_pair,
        trace=result.trace,
        epsilon=None if epsilon is None or math.isinf(epsilon) else epsilon,
        feasible_epochs=result.feasible_epochs,
        source_heavier=result.reverse,
    )


def _larger(first: GameResult, second: GameResult) -> GameResult:
    """The game with the larger feasible value; infeasible games lose."""
    if first.best_epoch is None and second.best_epoch is None:
        infeasible = [r.best_infeasible for r in (first, second) if r.best_infeasible is not None]
        return replace(first, best_infeasible=max(infeasible) if infeasible else None)
    if second.best_epoch is None:
        return first
    if first.best_epoch is None:
        return second
    return second if second.best_value > first.best_value else first


def _play_difference(
    make_pair: PairFactory,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    streams: RngStreams,
    name: str,
) -> GameResult:
    """
    Play |R_S - R_T| once per sign, each from a fresh copy of the
    starting pair; the larger best feasible value wins.
    """
    source_train, source_val = split(source, cfg.val_fraction, cfg.seed)
    target_train, target_val = split(target, cfg.val_fraction, cfg.seed)
    results = []
    for reverse in (False, True):
        a, b = make_pair()
        label = f"{name}/{'source' if reverse else 'target'}"
        game = DisagreementGame(a, b, difference=True, cfg=cfg, streams=streams.child(label), reverse=reverse)
        results.append(game.play(source_train, source_val, target_train, target_val, target, cfg.epochs_t2, label))
    return _larger(*results)


def estimate_hdh(
    class_cfg: HypothesisClass, source: Dataset, target: Dataset, cfg: DirConfig
) -> ClassDivergenceEstimate:
    """
    sup over h, h' in the class of |R_S(h, h') - R_T(h, h')|.

    Both players are pretrained independently from the class's objective;
    epsilon comes from the first player unless the class fixes it.

    Raises:
        EstimationError: if no epoch had a feasible pair (carries the best
            infeasible value)
    """
    if class_cfg.singleton:
        return _trivial(ClassDivergenceKind.HDH)
    _check_data(source, target, class_cfg.spec)
    streams = RngStreams(cfg.seed).child("hdh")
    _, source_val = split(source, cfg.val_fraction, cfg.seed)
    h = pretrain_member(class_cfg, source, target, cfg, "hdh/a")
    h2 = pretrain_member(class_cfg, source, target, cfg, "hdh/b")
    epsilon = class_epsilon(class_cfg, h, source_val, target, cfg)

    def make_pair() -> Tuple[Player, Player]:
        ha, hb = h.copy(), h2.copy()
        return (
            make_player(ha, class_cfg.constraint, epsilon, ha.parameters(), cfg, streams, "a"),
            make_player(hb, class_cfg.constraint, epsilon, hb.parameters(), cfg, streams, "b"),
        )

    return _finish(ClassDivergenceKind.HDH, _play_difference(make_pair, source, target, cfg, streams, "hdh"), epsilon)


def estimate_fgg(
    f_class: HypothesisClass,
    g_class: HypothesisClass,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
) -> ClassDivergenceEstimate:
    """
    sup over f and g, g' of |R_S(fg, fg') - R_T(fg, fg')|.

    ``f_class`` and ``g_class`` describe the predictor and encoder halves
    of one network family: they must share the spec, and the constraint of
    ``f_class`` applies to the composed hypotheses.
    """
    if f_class.spec != g_class.spec:
        raise InvalidInputError(f"f and g classes must share a spec: {f_class.spec} vs {g_class.spec}")
    if g_class.singleton:
        return _trivial(ClassDivergenceKind.FGG)
    spec = f_class.spec
    _check_data(source, target, spec)
    streams = RngStreams(cfg.seed).child("fgg")
    _, source_val = split(source, cfg.val_fraction, cfg.seed)
    h = pretrain_member(f_class, source, target, cfg, "fgg/a")
    encoder_b = [layer.copy() for layer in h.encoder_layers]
    _jitter(encoder_b, streams.stream("jitter"))
    epsilon = class_epsilon(f_class, h, source_val, target, cfg)

    def make_pair() -> Tuple[Player, Player]:
        ha = h.copy()
        # both players hold the same predictor layer objects
        hb = Hypothesis(spec, [layer.copy() for layer in encoder_b] + ha.predictor_layers, h.dropout_rate)
        shared_f = [] if f_class.singleton else ha.predictor_parameters()
        return (
            make_player(ha, f_class.constraint, epsilon, ha.encoder_parameters() + shared_f, cfg, streams, "a"),
            make_player(hb, f_class.constraint, epsilon, hb.encoder_parameters() + shared_f, cfg, streams, "b"),
        )

    return _finish(ClassDivergenceKind.FGG, _play_difference(make_pair, source, target, cfg, streams, "fgg"), epsilon)


def estimate_latent_fdf(
    g: Hypothesis,
    f_class: HypothesisClass,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
) -> ClassDivergenceEstimate:
    """
    sup over f, f' of |R_S(fg, f'g) - R_T(fg, f'g)| for the fixed encoder of ``g``.

    Both predictors start from g's own predictor (the second one slightly
    perturbed); the encoder never receives updates, so neither player
    trains a discriminator.
    """
    if f_class.spec.layer_dims != g.spec.layer_dims or f_class.spec.division_index != g.spec.division_index:
        raise InvalidInputError(f"f class {f_class.spec} does not fit encoder of {g.spec}")
    if f_class.singleton:
        return _trivial(ClassDivergenceKind.LATENT_FDF)
    _check_data(source, target, g.spec)
    streams = RngStreams(cfg.seed).child("latent_fdf")
    _, source_val = split(source, cfg.val_fraction, cfg.seed)
    predictor_b = [layer.copy() for layer in g.predictor_layers]
    _jitter(predictor_b, streams.stream("jitter"))
    epsilon = class_epsilon(f_class, g, source_val, target, cfg)

    def make_pair() -> Tuple[Player, Player]:
        encoder = [layer.copy() for layer in g.encoder_layers]
        h = Hypothesis(g.spec, encoder + [layer.copy() for layer in g.predictor_layers], g.dropout_rate)
        h2 = Hypothesis(g.spec, encoder + [layer.copy() for layer in predictor_b], g.dropout_rate)
        return (
            make_player(h, f_class.constraint, epsilon, h.predictor_parameters(), cfg, streams, "a"),
            make_player(h2, f_class.constraint, epsilon, h2.predictor_parameters(), cfg, streams, "b"),
        )

    return _finish(
        ClassDivergenceKind.LATENT_FDF,
        _play_difference(make_pair, source, target, cfg, streams, "latent_fdf"),
        epsilon,
    )
