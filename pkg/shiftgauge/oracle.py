"""
Exact enumeration over tiny finite hypothesis classes.

All quantities are ratios of integer counts returned as ``Fraction``; no
floating point enters a comparison. Classes are explicit lists of 1D
classifiers:

- threshold classifiers h_{t,s}(x) = 1[s (x - t) > 0];
- layered families: monotone piecewise-linear 1D maps stacked under a
  threshold predictor, so every division i of the stack gives an encoder
  set G_i and a predictor set F_i whose compositions are the same class.

Constraints bind their own data: ``SourceRiskConstraint`` is
{h : R_S(h) <= eps}; ``DirConstraint`` is R_S(h) + alpha * TV <= eps with
TV the total-variation distance between the binned source and target
embeddings.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import bisect
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from shiftgauge.exceptions import InvalidInputError, OracleError

Number = Any  # int, float, str or Fraction; converted exactly


def exact(value: Number) -> Fraction:
    """Convert to a Fraction without rounding (floats keep their binary value)."""
    return value if isinstance(value, Fraction) else Fraction(value)


@dataclass(frozen=True)
class Sample:
    """1D points with optional binary labels."""

    points: Tuple[Fraction, ...]
    labels: Optional[Tuple[int, ...]] = None

    @classmethod
    def of(cls, points: Iterable[Number], labels: Optional[Iterable[int]] = None) -> "Sample":
        pts = tuple(exact(p) for p in points)
        if not pts:
            raise InvalidInputError("an oracle sample needs at least one point")
        labs = None if labels is None else tuple(int(y) for y in labels)
        if labs is not None and (len(labs) != len(pts) or any(y not in (0, 1) for y in labs)):
            raise InvalidInputError("oracle labels must be 0/1, one per point")
        return cls(pts, labs)

    def __len__(self) -> int:
        return len(self.points)

    def require_labels(self) -> Tuple[int, ...]:
        if self.labels is None:
            raise InvalidInputError("oracle sample has no labels")
        return self.labels


# ============================================================================
# Maps and classifiers
# ============================================================================


class Member(Protocol):
    """A classifier of the finite class."""

    name: str

    def predict_point(self, x: Fraction) -> int: ...

    def embed_point(self, x: Fraction) -> Fraction: ...


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """
    Monotone piecewise-linear map through knots (xs[k], ys[k]), constant
    beyond the end knots.
    """

    xs: Tuple[Fraction, ...]
    ys: Tuple[Fraction, ...]
    name: str = "map"

    def __post_init__(self) -> None:
        object.__setattr__(self, "xs", tuple(exact(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(exact(v) for v in self.ys))
        if len(self.xs) < 2 or len(self.xs) != len(self.ys):
            raise InvalidInputError("a piecewise-linear map needs >= 2 knots with matching ys")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise InvalidInputError("map knots must be strictly increasing")
        rising = all(b >= a for a, b in zip(self.ys, self.ys[1:]))
        falling = all(b <= a for a, b in zip(self.ys, self.ys[1:]))
        if not (rising or falling):
            raise InvalidInputError(f"map '{self.name}' is not monotone")

    def __call__(self, z: Fraction) -> Fraction:
        if z <= self.xs[0]:
            return self.ys[0]
        if z >= self.xs[-1]:
            return self.ys[-1]
        k = bisect.bisect_right(self.xs, z) - 1
        x0, x1, y0, y1 = self.xs[k], self.xs[k + 1], self.ys[k], self.ys[k + 1]
        return y0 + (y1 - y0) * (z - x0) / (x1 - x0)


def identity_map(lo: Number = -2, hi: Number = 2) -> PiecewiseLinearMap:
    return PiecewiseLinearMap((exact(lo), exact(hi)), (exact(lo), exact(hi)), "id")


@dataclass(frozen=True)
class ThresholdClassifier:
    """h_{t,s}(x) = 1[s (x - t) > 0] on the identity embedding."""

    t: Fraction
    s: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", exact(self.t))
        if self.s not in (1, -1):
            raise InvalidInputError(f"threshold sign must be +1 or -1, got {self.s}")

    @property
    def name(self) -> str:
        return f"thr({self.t},{'+' if self.s > 0 else '-'})"

    def predict_point(self, x: Fraction) -> int:
        return 1 if self.s * (x - self.t) > 0 else 0

    def embed_point(self, x: Fraction) -> Fraction:
        return x


@dataclass(frozen=True)
class ConstantClassifier:
    """Always predicts ``label``."""

    label: int

    @property
    def name(self) -> str:
        return f"const({self.label})"

    def predict_point(self, x: Fraction) -> int:
        return self.label

    def embed_point(self, x: Fraction) -> Fraction:
        return x


@dataclass(frozen=True)
class Head:
    """A predictor f: maps (layers i+1..N-1) followed by a threshold."""

    maps: Tuple[PiecewiseLinearMap, ...]
    threshold: ThresholdClassifier

    @property
    def name(self) -> str:
        return "".join(f"{m.name}>" for m in self.maps) + self.threshold.name

    def predict_point(self, z: Fraction) -> int:
        for m in self.maps:
            z = m(z)
        return self.threshold.predict_point(z)


@dataclass(frozen=True)
class Encoder:
    """An encoder g: maps of layers 1..i applied in order."""

    maps: Tuple[PiecewiseLinearMap, ...]

    @property
    def name(self) -> str:
        return ">".join(m.name for m in self.maps) or "id"

    def __call__(self, x: Fraction) -> Fraction:
        for m in self.maps:
            x = m(x)
        return x


@dataclass(frozen=True)
class Composed:
    """h = f o g; ``embed_point`` exposes g."""

    head: Head
    encoder: Encoder

    @property
    def name(self) -> str:
        return f"{self.head.name}o{self.encoder.name}"

    def predict_point(self, x: Fraction) -> int:
        return self.head.predict_point(self.encoder(x))

    def embed_point(self, x: Fraction) -> Fraction:
        return self.encoder(x)


def complement(h: ThresholdClassifier) -> ThresholdClassifier:
    """Label complement of a threshold classifier away from its threshold point."""
    return ThresholdClassifier(h.t, -h.s)


# ============================================================================
# Finite classes
# ============================================================================


@dataclass(frozen=True)
class FiniteClass:
    """
    An explicit, ordered list of classifiers. Ties in every argmax/argmin
    are broken by this order.

    Attributes:
        members: The hypotheses
        encoders, heads: Optional factorisation; members are then all
            compositions head o encoder
    """

    members: Tuple[Member, ...]
    encoders: Optional[Tuple[Encoder, ...]] = None
    heads: Optional[Tuple[Head, ...]] = None

    def __post_init__(self) -> None:
        if not self.members:
            raise OracleError("a finite class needs at least one member")

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def of(cls, members: Iterable[Member]) -> "FiniteClass":
        return cls(tuple(members))

    @classmethod
    def factored(cls, encoders: Sequence[Encoder], heads: Sequence[Head]) -> "FiniteClass":
        encoders, heads = tuple(encoders), tuple(heads)
        return cls(tuple(Composed(f, g) for g in encoders for f in heads), encoders, heads)


def threshold_grid(lo: Number = -1, hi: Number = 1, count: int = 41) -> List[Fraction]:
    """``count`` evenly spaced thresholds from lo to hi inclusive."""
    if count < 2:
        raise InvalidInputError(f"threshold grid needs >= 2 points, got {count}")
    lo, hi = exact(lo), exact(hi)
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def threshold_class(lo: Number = -1, hi: Number = 1, count: int = 41) -> FiniteClass:
    """The default 1D family: ``count`` thresholds times both signs."""
    return FiniteClass.of(ThresholdClassifier(t, s) for t in threshold_grid(lo, hi, count) for s in (1, -1))


@dataclass(frozen=True)
class LayeredFamily:
    """
    Networks of N layers: hidden layers are 1D maps chosen independently
    from ``layers[k]``, the output layer is a threshold from ``thresholds``.

    For every division i in [1, N-1] the composed class is the same set of
    networks; only the encoder/predictor split moves.
    """

    layers: Tuple[Tuple[PiecewiseLinearMap, ...], ...]
    thresholds: Tuple[ThresholdClassifier, ...]

    def __post_init__(self) -> None:
        if not self.layers or any(not options for options in self.layers) or not self.thresholds:
            raise InvalidInputError("a layered family needs non-empty map and threshold sets")

    @property
    def total_layers(self) -> int:
        return len(self.layers) + 1

    def _check_division(self, i: int) -> None:
        if not 1 <= i <= self.total_layers - 1:
            raise InvalidInputError(f"division {i} outside [1, {self.total_layers - 1}]")

    def encoders(self, i: int) -> Tuple[Encoder, ...]:
        self._check_division(i)
        return tuple(Encoder(maps) for maps in itertools.product(*self.layers[:i]))

    def heads(self, i: int) -> Tuple[Head, ...]:
        self._check_division(i)
        return tuple(
            Head(maps, thr)
            for maps in itertools.product(*self.layers[i:])
            for thr in self.thresholds
        )

    def composed_class(self, i: int) -> FiniteClass:
        return FiniteClass.factored(self.encoders(i), self.heads(i))

    def network(self, maps: Sequence[PiecewiseLinearMap], threshold: ThresholdClassifier, i: int) -> Composed:
        """One network split at division i."""
        self._check_division(i)
        return Composed(Head(tuple(maps[i:]), threshold), Encoder(tuple(maps[:i])))


# ============================================================================
# Predictions and counts
# ============================================================================


def prediction_matrix(members: Sequence[Member], sample: Sample) -> np.ndarray:
    """0/1 predictions, one row per member (int64 so counts stay exact)."""
    return np.array(
        [[m.predict_point(x) for x in sample.points] for m in members], dtype=np.int64
    ).reshape(len(members), len(sample))


def _disagreement_counts(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """counts[i, j] = number of points where row i of pa and row j of pb differ."""
    return pa.sum(axis=1)[:, None] + pb.sum(axis=1)[None, :] - 2 * (pa @ pb.T)


def risk(h: Member, labeled: Sample) -> Fraction:
    labels = labeled.require_labels()
    wrong = sum(1 for x, y in zip(labeled.points, labels) if h.predict_point(x) != y)
    return Fraction(wrong, len(labeled))


def disagreement(h: Member, h2: Member, sample: Sample) -> Fraction:
    diff = sum(1 for x in sample.points if h.predict_point(x) != h2.predict_point(x))
    return Fraction(diff, len(sample))


# ============================================================================
# Constraints
# ============================================================================


class Constraint(Protocol):
    def admits(self, h: Member) -> bool: ...


@dataclass(frozen=True)
class NoConstraint:
    def admits(self, h: Member) -> bool:
        return True


@dataclass(frozen=True)
class SourceRiskConstraint:
    """{h : R_S(h) <= epsilon} on a labeled source sample."""

    epsilon: Fraction
    source: Sample

    def admits(self, h: Member) -> bool:
        return risk(h, self.source) <= exact(self.epsilon)


@dataclass(frozen=True)
class Binning:
    """Uniform bins [lo + k w, lo + (k+1) w); values outside go to the end bins."""

    lo: Fraction = Fraction(-2)
    width: Fraction = Fraction(1, 2)
    count: int = 8

    def index(self, z: Fraction) -> int:
        k = math.floor((exact(z) - exact(self.lo)) / exact(self.width))
        return min(max(k, 0), self.count - 1)


def total_variation(a: Sequence[Fraction], b: Sequence[Fraction], binning: Binning) -> Fraction:
    """TV distance between the binned empirical distributions of a and b."""
    ca = np.bincount([binning.index(z) for z in a], minlength=binning.count)
    cb = np.bincount([binning.index(z) for z in b], minlength=binning.count)
    na, nb = len(a), len(b)
    return Fraction(int(np.abs(ca * nb - cb * na).sum()), 2 * na * nb)


@dataclass(frozen=True)
class DirConstraint:
    """
    Exact check-model set: R_S(h) + alpha * TV(g(X_S), g(X_T)) <= epsilon,
    where g is the member's embedding.
    """

    epsilon: Fraction
    alpha: Fraction
    source: Sample
    target: Sample
    binning: Binning = field(default_factory=Binning)

    def objective(self, h: Member) -> Fraction:
        zs = [h.embed_point(x) for x in self.source.points]
        zt = [h.embed_point(x) for x in self.target.points]
        return risk(h, self.source) + exact(self.alpha) * total_variation(zs, zt, self.binning)

    def admits(self, h: Member) -> bool:
        return self.objective(h) <= exact(self.epsilon)


def feasible_members(cls: FiniteClass, constraint: Optional[Constraint]) -> List[Member]:
    if constraint is None:
        return list(cls.members)
    return [m for m in cls.members if constraint.admits(m)]


def _require_feasible(members: List[Member]) -> List[Member]:
    if not members:
        raise OracleError("no hypothesis of the class satisfies the constraint")
    return members


# ============================================================================
# Exact quantities
# ============================================================================


def exact_proxy_risk(
    h: Member, cls: FiniteClass, constraint: Optional[Constraint], target: Sample
) -> Tuple[Fraction, Member]:
    """
    max over feasible h' of R_T(h, h'), first maximiser in class order.

    Raises:
        OracleError: if no member is feasible
    """
    feasible = _require_feasible(feasible_members(cls, constraint))
    best_value, best = Fraction(-1), feasible[0]
    for m in feasible:
        value = disagreement(h, m, target)
        if value > best_value:
            best_value, best = value, m
    return best_value, best


def exact_bias(cls: FiniteClass, constraint: Optional[Constraint], labeled_target: Sample) -> Fraction:
    """min over feasible h' of R_T(h')."""
    feasible = _require_feasible(feasible_members(cls, constraint))
    return min(risk(m, labeled_target) for m in feasible)


def max_feasible_risk(cls: FiniteClass, constraint: Optional[Constraint], labeled_target: Sample) -> Fraction:
    """max over feasible h' of R_T(h')."""
    feasible = _require_feasible(feasible_members(cls, constraint))
    return max(risk(m, labeled_target) for m in feasible)


def _max_abs_gap(ps_a: np.ndarray, ps_b: np.ndarray, pt_a: np.ndarray, pt_b: np.ndarray, ns: int, nt: int) -> int:
    """max over (i, j) of |d_S(i, j) * nt - d_T(i, j) * ns| as an integer."""
    gap = _disagreement_counts(ps_a, ps_b) * nt - _disagreement_counts(pt_a, pt_b) * ns
    return int(np.abs(gap).max()) if gap.size else 0


def exact_hdh(
    cls: FiniteClass, source: Sample, target: Sample, constraint: Optional[Constraint] = None
) -> Fraction:
    """sup over h, h' in the (feasible) class of |R_S(h, h') - R_T(h, h')|."""
    members = _require_feasible(feasible_members(cls, constraint))
    ps, pt = prediction_matrix(members, source), prediction_matrix(members, target)
    ns, nt = len(source), len(target)
    return Fraction(_max_abs_gap(ps, ps, pt, pt, ns, nt), ns * nt)


def exact_fgg(
    encoders: Sequence[Encoder],
    heads: Sequence[Head],
    source: Sample,
    target: Sample,
    constraint: Optional[Constraint] = None,
) -> Fraction:
    """
    sup over f and g, g' of |R_S(fg, fg') - R_T(fg, fg')|; with a constraint,
    both compositions must be feasible.
    """
    if not encoders or not heads:
        raise OracleError("F_G-divergence needs non-empty encoder and predictor sets")
    ns, nt = len(source), len(target)
    best = 0
    found = False
    for f in heads:
        members = [Composed(f, g) for g in encoders]
        if constraint is not None:
            members = [m for m in members if constraint.admits(m)]
        if not members:
            continue
        found = True
        ps, pt = prediction_matrix(members, source), prediction_matrix(members, target)
        best = max(best, _max_abs_gap(ps, ps, pt, pt, ns, nt))
    if not found:
        raise OracleError("no feasible composition in the F_G class")
    return Fraction(best, ns * nt)


def exact_latent_fdf(
    g: Encoder,
    heads: Sequence[Head],
    source: Sample,
    target: Sample,
    constraint: Optional[Constraint] = None,
) -> Fraction:
    """sup over f, f' of |R_S(fg, f'g) - R_T(fg, f'g)| for the fixed encoder g."""
    return exact_hdh(FiniteClass.of(Composed(f, g) for f in heads), source, target, constraint)


def exact_worst_in_class(
    cls_a: FiniteClass,
    constraint_a: Optional[Constraint],
    cls_b: FiniteClass,
    constraint_b: Optional[Constraint],
    target: Sample,
) -> Fraction:
    """sup over feasible h in class a and h' in class b of R_T(h, h')."""
    a = _require_feasible(feasible_members(cls_a, constraint_a))
    b = _require_feasible(feasible_members(cls_b, constraint_b))
    counts = _disagreement_counts(prediction_matrix(a, target), prediction_matrix(b, target))
    return Fraction(int(counts.max()), len(target))


# ============================================================================
# Bound checks
# ============================================================================


@dataclass(frozen=True)
class ProxyBoundCheck:
    """R_T(h) <= proxy risk + bias."""

    holds: bool
    true_risk: Fraction
    proxy_risk: Fraction
    bias: Fraction


@dataclass(frozen=True)
class EstimationErrorCheck:
    """|proxy risk - R_T(h)| <= max feasible R_T(h')."""

    holds: bool
    proxy_risk: Fraction
    true_risk: Fraction
    max_check_risk: Fraction


def verify_proxy_bound(h: Member, cls: FiniteClass, constraint: Optional[Constraint], labeled_target: Sample) -> ProxyBoundCheck:
    true_risk = risk(h, labeled_target)
    proxy, _ = exact_proxy_risk(h, cls, constraint, labeled_target)
    bias = exact_bias(cls, constraint, labeled_target)
    return ProxyBoundCheck(true_risk <= proxy + bias, true_risk, proxy, bias)


def verify_estimation_error(h: Member, cls: FiniteClass, constraint: Optional[Constraint], labeled_target: Sample) -> EstimationErrorCheck:
    """
    Check the estimation-error bound exactly and return its three numbers.

    Raises:
        OracleError: if no member is feasible
    """
    proxy, _ = exact_proxy_risk(h, cls, constraint, labeled_target)
    true_risk = risk(h, labeled_target)
    worst = max_feasible_risk(cls, constraint, labeled_target)
    return EstimationErrorCheck(abs(proxy - true_risk) <= worst, proxy, true_risk, worst)


@dataclass(frozen=True)
class DivisionCheck:
    """F_GdG and latent FdF of one network at every division."""

    fgg: Tuple[Fraction, ...]
    latent_fdf: Tuple[Fraction, ...]

    @property
    def fgg_non_decreasing(self) -> bool:
        return all(b >= a for a, b in zip(self.fgg, self.fgg[1:]))

    @property
    def latent_non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.latent_fdf, self.latent_fdf[1:]))


def verify_division_monotonicity(
    family: LayeredFamily,
    maps: Sequence[PiecewiseLinearMap],
    source: Sample,
    target: Sample,
) -> DivisionCheck:
    """
    Evaluate F_GdG over (F_i, G_i) and latent FdF under the encoder of the
    fixed network ``maps`` for i = 1..N-1.
    """
    if len(maps) != len(family.layers):
        raise InvalidInputError(f"network needs {len(family.layers)} maps, got {len(maps)}")
    divisions = range(1, family.total_layers)
    fgg = tuple(exact_fgg(family.encoders(i), family.heads(i), source, target) for i in divisions)
    latent = tuple(
        exact_latent_fdf(Encoder(tuple(maps[:i])), family.heads(i), source, target) for i in divisions
    )
    return DivisionCheck(fgg, latent)


def default_layered_family(threshold_count: int = 9) -> LayeredFamily:
    """Two hidden 1D layers with three monotone maps each, thresholds on [-2, 2]."""
    h = Fraction(1, 2)
    maps = (
        identity_map(),
        PiecewiseLinearMap((-2, 0, 2), (-2, -h, 2), "bend"),
        PiecewiseLinearMap((-2, 2), (2, -2), "flip"),
    )
    return LayeredFamily(
        layers=(maps, maps),
        thresholds=tuple(ThresholdClassifier(t, s) for t in threshold_grid(-2, 2, threshold_count) for s in (1, -1)),
    )
