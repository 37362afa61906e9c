"""
Comparison estimators of target risk and the metrics used to rank methods.

- ben_david_estimate: source risk plus an adversarial HdH estimate over a
  source-risk-constrained class or the check-model set P^eps. The joint
  best-in-class risk term of the bound cannot be observed and is omitted.
- conf_score_estimate: source risk plus the drop in mean maximum softmax
  probability from source to target.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from shiftgauge.adversarial import HypothesisClass, estimate_hdh
from shiftgauge.constants import ConstraintKind
from shiftgauge.datasets import Dataset, split
from shiftgauge.exceptions import InvalidInputError, MetricError
from shiftgauge.models import Hypothesis, MlpSpec, confidence, zero_one_risk
from shiftgauge.trainer import DirConfig

logger = logging.getLogger("shiftgauge")

BEN_DAVID = "ben_david"
CONF_SCORE = "conf_score"
PROXY_RISK = "proxy_risk"

LAMBDA_H_NOTE = "omitted (unobservable)"

CLASS_MODES = {
    "source_constrained": ConstraintKind.SOURCE_RISK,
    "dir_constrained": ConstraintKind.DIR,
}


@dataclass
class BaselineEstimate:
    """
    A baseline prediction of target risk.

    Attributes:
        method: ben_david or conf_score
        predicted_risk: Unclamped prediction
        components: The additive parts (src_risk, hdh_estimate or conf)
            plus notes such as the omitted lambda_H term
    """

    method: str
    predicted_risk: float
    components: Dict[str, Any] = field(default_factory=dict)

    @property
    def predicted_risk_clamped(self) -> float:
        return min(max(self.predicted_risk, 0.0), 1.0)


def ben_david_estimate(
    h: Hypothesis,
    class_mode: str,
    source: Dataset,
    target: Dataset,
    cfg: DirConfig,
    class_spec: Optional[MlpSpec] = None,
) -> BaselineEstimate:
    """
    R_S(h) on the source validation split plus HdH over the selected class.

    Args:
        class_mode: "source_constrained" ({h : R_S(h) <= eps}, for
            supervised candidates) or "dir_constrained" (P^eps, for
            adaptive candidates)
        class_spec: Network family of the class; defaults to h's spec

    Raises:
        InvalidInputError: on an unknown class mode
        EstimationError: propagated from the HdH estimate
    """
    if class_mode not in CLASS_MODES:
        raise InvalidInputError(f"class_mode must be one of {sorted(CLASS_MODES)}, got '{class_mode}'")
    _, source_val = split(source, cfg.val_fraction, cfg.seed)
    src_risk = zero_one_risk(h, source_val)
    hdh = estimate_hdh(HypothesisClass(class_spec or h.spec, CLASS_MODES[class_mode]), source, target, cfg)
    logger.info(f"Ben-David estimate ({class_mode}): src {src_risk:.4f} + hdh {hdh.value:.4f}")
    return BaselineEstimate(
        method=BEN_DAVID,
        predicted_risk=src_risk + hdh.value,
        components={
            "src_risk": src_risk,
            "hdh_estimate": hdh.value,
            "class_mode": class_mode,
            "lambda_h": LAMBDA_H_NOTE,
        },
    )


def conf_score_from_scores(
    source_scores: Sequence[float], target_scores: Sequence[float], src_risk: float
) -> BaselineEstimate:
    """
    CONF arithmetic on raw max-probability scores.

    Examples:
        >>> est = conf_score_from_scores([0.9, 0.8], [0.6, 0.7], 0.1)
        >>> round(est.components["conf"], 12)
        0.2
    """
    source_scores = np.asarray(source_scores, dtype=np.float64)
    target_scores = np.asarray(target_scores, dtype=np.float64)
    if source_scores.size == 0 or target_scores.size == 0:
        raise InvalidInputError("confidence scores need non-empty source and target sets")
    source_mean = float(source_scores.mean())
    target_mean = float(target_scores.mean())
    conf = source_mean - target_mean
    return BaselineEstimate(
        method=CONF_SCORE,
        predicted_risk=src_risk + conf,
        components={
            "src_risk": src_risk,
            "conf": conf,
            "source_mean_q": source_mean,
            "target_mean_q": target_mean,
        },
    )


def conf_score_estimate(h: Hypothesis, source: Dataset, target: Dataset) -> BaselineEstimate:
    """
    R_S(h) + E_S[q_h] - E_T[q_h], with q_h the largest softmax entry.

    ``source`` must be labeled; the harness passes the source validation
    split so the source risk matches the other methods.
    """
    estimate = conf_score_from_scores(
        confidence(h, source.features), confidence(h, target.features), zero_one_risk(h, source)
    )
    logger.info(
        f"Confidence-score estimate: src {estimate.components['src_risk']:.4f} "
        f"+ conf {estimate.components['conf']:.4f}"
    )
    return estimate


@dataclass
class MethodScore:
    """Mean absolute error and Pearson correlation of predictions."""

    mean_abs_err: float
    pearson: float
    n: int


def score_methods(reports: Sequence[Tuple[float, float]]) -> MethodScore:
    """
    Score (predicted, true) risk pairs.

    Raises:
        MetricError: with fewer than 2 pairs, or when either series is
            constant (Pearson undefined)

    Examples:
        >>> score = score_methods([(0.1, 0.2), (0.3, 0.1)])
        >>> round(score.mean_abs_err, 12)
        0.15
    """
    if len(reports) < 2:
        raise MetricError(f"need at least 2 (predicted, true) pairs, got {len(reports)}")
    pairs = np.asarray(reports, dtype=np.float64)
    predicted, true = pairs[:, 0], pairs[:, 1]
    for name, series in (("predicted", predicted), ("true", true)):
        if np.all(series == series[0]):
            raise MetricError(f"Pearson correlation undefined: {name} series is constant ({series[0]})")
    pc, tc = predicted - predicted.mean(), true - true.mean()
    r = float((pc * tc).sum() / np.sqrt((pc * pc).sum() * (tc * tc).sum()))
    return MethodScore(
        mean_abs_err=float(np.abs(predicted - true).mean()),
        pearson=min(max(r, -1.0), 1.0),
        n=len(reports),
    )
