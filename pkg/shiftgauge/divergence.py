"""
Distribution divergence estimates between embedded source and target samples.

Two estimators of d(p_S^g(Z), p_T^g(Z)):
- ``estimate_js``: Jensen-Shannon proxy from a freshly trained audit
  discriminator, max(0, ln 2 - best held-out BCE).
- ``estimate_mmd``: biased RBF-kernel MMD^2 with the median heuristic.

Class-level adversarial divergences (HdH, F_GdG, latent FdF) live in
``shiftgauge.adversarial``.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Optional, Protocol

import numpy as np

from shiftgauge.constants import LN2, DivergenceMethod
from shiftgauge.exceptions import EstimationError, InvalidInputError, ShapeError
from shiftgauge.models import Discriminator
from shiftgauge.rng import RngStreams
from shiftgauge.tensor import Adam, Tensor, backward, cross_entropy, rbf_mmd2

if TYPE_CHECKING:
    from shiftgauge.trainer import DirConfig

logger = logging.getLogger("shiftgauge")

# Cap on pooled points used for the median-distance bandwidth
MEDIAN_HEURISTIC_MAX_POINTS = 1000


class Encoder(Protocol):
    """Anything that maps a feature matrix to latent points."""

    def embed(self, x: Any) -> np.ndarray: ...


class IdentityEncoder:
    """g(x) = x; used to measure divergence in input space."""

    def embed(self, x: Any) -> np.ndarray:
        arr = np.asarray(getattr(x, "features", x), dtype=np.float64)
        return arr.reshape(-1, 1) if arr.ndim == 1 else arr


@dataclass
class DivergenceEstimate:
    """
    A scalar divergence estimate.

    Attributes:
        method: js_discriminator or mmd_rbf
        value: js in [0, ln 2]; mmd >= 0
        audit_epochs: Epochs used to train the audit discriminator (0 for MMD)
        details: Diagnostic scalars (best/final BCE, bandwidth, fallbacks)
    """

    method: DivergenceMethod
    value: float
    audit_epochs: int = 0
    details: Dict[str, float] = field(default_factory=dict)


def _embed_pair(g: Encoder, source: Any, target: Any) -> tuple:
    xs = getattr(source, "features", source)
    xt = getattr(target, "features", target)
    if len(xs) == 0 or len(xt) == 0:
        raise InvalidInputError("divergence needs non-empty source and target sets")
    zs, zt = np.asarray(g.embed(xs)), np.asarray(g.embed(xt))
    if zs.shape[1] != zt.shape[1]:
        raise ShapeError(f"latent dimension mismatch: {list(zs.shape)} vs {list(zt.shape)}")
    return zs, zt


def estimate_js(g: Encoder, source: Any, target: Any, cfg: "DirConfig") -> DivergenceEstimate:
    """
    Jensen-Shannon proxy of the embedded distributions.

    Trains a fresh discriminator on a balanced sample of g-embeddings for
    ``cfg.audit_epochs`` and returns max(0, ln 2 - L), where L is the best
    mean binary cross-entropy reached on a held-out audit split.

    Raises:
        InvalidInputError: if either set is empty
        EstimationError: if audit training produces a non-finite loss
    """
    zs, zt = _embed_pair(g, source, target)
    streams = RngStreams(cfg.seed).child("audit")
    rng = streams.stream("sample")
    n = min(len(zs), len(zt))
    zs = zs[np.sort(rng.choice(len(zs), n, replace=False))] if len(zs) > n else zs
    zt = zt[np.sort(rng.choice(len(zt), n, replace=False))] if len(zt) > n else zt
    pooled = np.vstack([zs, zt])
    domains = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    order = rng.permutation(2 * n)
    n_hold = min(max(int(round(2 * n * cfg.audit_holdout)), 1), 2 * n - 1)
    hold, train = order[:n_hold], order[n_hold:]

    disc = Discriminator.initialize(pooled.shape[1], streams.stream("init"), cfg.discriminator_widths)
    opt = Adam(disc.parameters(), cfg.lr)
    batch_rng = streams.stream("batches")
    best = math.inf
    last_train = math.nan
    for epoch in range(1, cfg.audit_epochs + 1):
        perm = train[batch_rng.permutation(len(train))]
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss = cross_entropy(disc.logits(Tensor(pooled[idx])), domains[idx])
            if not math.isfinite(loss.item()):
                raise EstimationError(f"audit discriminator diverged at epoch {epoch}")
            opt.zero_grad()
            backward(loss)
            opt.step()
            last_train = loss.item()
        held = cross_entropy(disc.logits(Tensor(pooled[hold])), domains[hold]).item()
        if not math.isfinite(held):
            raise EstimationError(f"audit discriminator diverged at epoch {epoch}")
        best = min(best, held)

    value = min(max(LN2 - best, 0.0), LN2)
    return DivergenceEstimate(
        method=DivergenceMethod.JS_DISCRIMINATOR,
        value=value,
        audit_epochs=cfg.audit_epochs,
        details={"best_heldout_bce": best, "final_train_bce": last_train, "n_per_domain": float(n)},
    )


def median_heuristic(pooled: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the pooled sample (i < j)."""
    if len(pooled) > MEDIAN_HEURISTIC_MAX_POINTS:
        pick = np.linspace(0, len(pooled) - 1, MEDIAN_HEURISTIC_MAX_POINTS).astype(int)
        pooled = pooled[pick]
    diffs = pooled[:, None, :] - pooled[None, :, :]
    dists = np.sqrt((diffs * diffs).sum(axis=-1))
    upper = dists[np.triu_indices(len(pooled), k=1)]
    return float(np.median(upper)) if upper.size else 0.0


def estimate_mmd(
    g: Encoder, source: Any, target: Any, bandwidth: Optional[float] = None
) -> DivergenceEstimate:
    """
    Biased V-statistic MMD^2 with kernel exp(-|x-y|^2 / (2 sigma^2)).

    sigma defaults to the median pairwise distance of the pooled embedded
    sample; when that median is 0 (all points identical) sigma falls back
    to 1 and ``details["bandwidth_fallback"]`` is set.
    """
    zs, zt = _embed_pair(g, source, target)
    details: Dict[str, float] = {}
    sigma = bandwidth
    if sigma is None:
        sigma = median_heuristic(np.vstack([zs, zt]))
        if sigma <= 0.0:
            sigma = 1.0
            details["bandwidth_fallback"] = 1.0
            logger.debug("MMD median heuristic is 0; using sigma = 1")
    details["bandwidth"] = float(sigma)
    value = max(rbf_mmd2(Tensor(zs), Tensor(zt), float(sigma)).item(), 0.0)
    return DivergenceEstimate(DivergenceMethod.MMD_RBF, value, 0, details)


def estimate_divergence(
    g: Encoder, source: Any, target: Any, method: DivergenceMethod, cfg: "DirConfig"
) -> DivergenceEstimate:
    """Dispatch to the configured divergence estimator."""
    if DivergenceMethod(method) is DivergenceMethod.JS_DISCRIMINATOR:
        return estimate_js(g, source, target, cfg)
    return estimate_mmd(g, source, target)
