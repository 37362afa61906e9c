"""
Multilayer-perceptron hypotheses split into encoder and predictor.

A hypothesis h = f o g is a stack of dense layers with a declared division
index i: layers 1..i form the encoder g, layers i+1..N the predictor f.
The split is bookkeeping only; moving it does not change predictions.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from shiftgauge.constants import DEFAULT_DISCRIMINATOR_WIDTHS
from shiftgauge.exceptions import InvalidInputError, ShapeError
from shiftgauge.tensor import (
    Tensor,
    add_bias,
    dropout,
    he_uniform,
    matmul,
    relu,
    softmax_values,
)


@dataclass(frozen=True)
class MlpSpec:
    """
    Shape of an MLP hypothesis and where it is divided.

    Attributes:
        input_dim: Feature width d
        widths: Hidden widths; the network has N = len(widths) + 1 layers
        num_classes: Number of classes K (>= 2)
        division_index: i in [1, N-1]; layers 1..i form the encoder
        latent_relu: Apply ReLU after layer i. False makes the last encoder
            layer linear (a purely linear encoder when i == 1)
    """

    input_dim: int
    widths: Tuple[int, ...]
    num_classes: int = 2
    division_index: int = 1
    latent_relu: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.input_dim < 1:
            raise InvalidInputError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.widths:
            raise InvalidInputError("an MlpSpec needs at least one hidden layer")
        if any(w < 1 for w in self.widths):
            raise InvalidInputError(f"all widths must be >= 1, got {list(self.widths)}")
        if self.num_classes < 2:
            raise InvalidInputError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 1 <= self.division_index <= len(self.widths):
            raise InvalidInputError(
                f"division_index must be in [1, {len(self.widths)}], got {self.division_index}"
            )

    @property
    def total_layers(self) -> int:
        return len(self.widths) + 1

    @property
    def latent_dim(self) -> int:
        return self.widths[self.division_index - 1]

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        dims = [self.input_dim, *self.widths, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    def with_division(self, division_index: int) -> "MlpSpec":
        return replace(self, division_index=division_index)

    @classmethod
    def from_depth(
        cls,
        input_dim: int,
        encoder_depth: int,
        predictor_depth: int,
        width: int,
        num_classes: int = 2,
    ) -> "MlpSpec":
        """
        Build a uniform-width spec with ``encoder_depth`` encoder layers and
        ``predictor_depth`` hidden predictor layers (plus the output layer).
        """
        if encoder_depth < 1 or predictor_depth < 0:
            raise InvalidInputError(
                f"need encoder_depth >= 1 and predictor_depth >= 0, "
                f"got {encoder_depth}, {predictor_depth}"
            )
        return cls(
            input_dim=input_dim,
            widths=(width,) * (encoder_depth + predictor_depth),
            num_classes=num_classes,
            division_index=encoder_depth,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "widths": list(self.widths),
            "num_classes": self.num_classes,
            "division_index": self.division_index,
            "latent_relu": self.latent_relu,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MlpSpec":
        return cls(
            input_dim=int(data["input_dim"]),
            widths=tuple(data["widths"]),
            num_classes=int(data["num_classes"]),
            division_index=int(data["division_index"]),
            latent_relu=bool(data.get("latent_relu", True)),
        )


@dataclass
class Linear:
    """Dense layer: x @ weight + bias."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def initialize(cls, rng: np.random.Generator, fan_in: int, fan_out: int) -> "Linear":
        return cls(Tensor(he_uniform(rng, fan_in, fan_out)), Tensor(np.zeros(fan_out)))

    def __call__(self, x: Tensor) -> Tensor:
        return add_bias(matmul(x, self.weight), self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]

    def copy(self) -> "Linear":
        return Linear(Tensor(self.weight.data.copy()), Tensor(self.bias.data.copy()))


def _as_batch(x: Any, input_dim: int) -> np.ndarray:
    arr = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if input_dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ShapeError(f"input width mismatch: expected [n, {input_dim}], got {list(arr.shape)}")
    return arr


class Hypothesis:
    """
    An MLP classifier h = f o g with a declared division.

    Treat instances as immutable once trained; training routines work on
    ``copy()`` results.

    Attributes:
        spec: Shape and division of the network
        layers: All N dense layers in order
        dropout_rate: Dropout inside the encoder, active only when a
            random generator is passed to ``encode``
    """

    def __init__(self, spec: MlpSpec, layers: List[Linear], dropout_rate: float = 0.0):
        if len(layers) != spec.total_layers:
            raise ShapeError(f"expected {spec.total_layers} layers for {spec}, got {len(layers)}")
        for layer, (fan_in, fan_out) in zip(layers, spec.layer_dims):
            if layer.weight.shape != (fan_in, fan_out) or layer.bias.shape != (fan_out,):
                raise ShapeError(
                    f"layer shape mismatch: weight {list(layer.weight.shape)}, "
                    f"bias {list(layer.bias.shape)}, expected [{fan_in}, {fan_out}]"
                )
        if not 0.0 <= dropout_rate < 1.0:
            raise InvalidInputError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.spec = spec
        self.layers = layers
        self.dropout_rate = float(dropout_rate)

    @classmethod
    def initialize(
        cls, spec: MlpSpec, rng: np.random.Generator, dropout_rate: float = 0.0
    ) -> "Hypothesis":
        layers = [Linear.initialize(rng, fan_in, fan_out) for fan_in, fan_out in spec.layer_dims]
        return cls(spec, layers, dropout_rate)

    def __repr__(self) -> str:
        return f"Hypothesis(widths={list(self.spec.widths)}, division={self.spec.division_index})"

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def encoder_layers(self) -> List[Linear]:
        return self.layers[: self.spec.division_index]

    @property
    def predictor_layers(self) -> List[Linear]:
        return self.layers[self.spec.division_index:]

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def encoder_parameters(self) -> List[Tensor]:
        return [p for layer in self.encoder_layers for p in layer.parameters()]

    def predictor_parameters(self) -> List[Tensor]:
        return [p for layer in self.predictor_layers for p in layer.parameters()]

    def copy(self) -> "Hypothesis":
        return Hypothesis(self.spec, [layer.copy() for layer in self.layers], self.dropout_rate)

    def with_division(self, division_index: int) -> "Hypothesis":
        """Same weights, different encoder/predictor split."""
        return Hypothesis(
            self.spec.with_division(division_index),
            [layer.copy() for layer in self.layers],
            self.dropout_rate,
        )

    # ------------------------------------------------------------------
    # Forward passes
    # ------------------------------------------------------------------

    def encode(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """g(x). Dropout is applied after each encoder layer when rng is given."""
        z = x
        last = self.spec.division_index - 1
        for idx, layer in enumerate(self.encoder_layers):
            z = layer(z)
            if idx < last or self.spec.latent_relu:
                z = relu(z)
            if rng is not None and self.dropout_rate > 0.0:
                z = dropout(z, self.dropout_rate, rng)
        return z

    def head(self, z: Tensor) -> Tensor:
        """f(z): logits of the predictor applied to latent points."""
        out = z
        layers = self.predictor_layers
        for idx, layer in enumerate(layers):
            out = layer(out)
            if idx < len(layers) - 1:
                out = relu(out)
        return out

    def logits(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        return self.head(self.encode(x, rng))

    def embed(self, x: Any) -> np.ndarray:
        """Latent representation g(x) as a plain array (inference mode)."""
        return self.encode(Tensor(_as_batch(x, self.input_dim))).data

    def predict_proba(self, x: Any) -> np.ndarray:
        return softmax_values(self.logits(Tensor(_as_batch(x, self.input_dim))).data)

    def predict(self, x: Any) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


class Classifier(Protocol):
    """Anything that labels points: hypotheses, replayed labels, oracle members."""

    num_classes: int

    def predict(self, x: Any) -> np.ndarray: ...


@dataclass
class Discriminator:
    """
    Domain discriminator mapping latent points to two logits
    (0 = source, 1 = target). Never stored inside a hypothesis checkpoint.
    """

    layers: List[Linear] = field(default_factory=list)

    @classmethod
    def initialize(
        cls,
        latent_dim: int,
        rng: np.random.Generator,
        widths: Sequence[int] = DEFAULT_DISCRIMINATOR_WIDTHS,
    ) -> "Discriminator":
        dims = [latent_dim, *widths, 2]
        return cls([Linear.initialize(rng, a, b) for a, b in zip(dims[:-1], dims[1:])])

    def logits(self, z: Tensor) -> Tensor:
        out = z
        for idx, layer in enumerate(self.layers):
            out = layer(out)
            if idx < len(self.layers) - 1:
                out = relu(out)
        return out

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


# ============================================================================
# Predictions and zero-one quantities
# ============================================================================


def predict(h: Classifier, x: Any) -> np.ndarray:
    """Class labels (argmax of the softmax, ties toward the smaller index)."""
    return h.predict(x)


def predict_proba(h: Hypothesis, x: Any) -> np.ndarray:
    """Softmax rows of h on x."""
    return h.predict_proba(x)


def confidence(h: Hypothesis, x: Any) -> np.ndarray:
    """q_h(x): the largest softmax entry per point, in [1/K, 1]."""
    return h.predict_proba(x).max(axis=1)


def error_rate(predicted: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of positions where the two label vectors differ."""
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ShapeError(f"label vectors differ in shape: {list(predicted.shape)} vs {list(labels.shape)}")
    if predicted.size == 0:
        raise InvalidInputError("cannot compute a risk on an empty set")
    return int(np.count_nonzero(predicted != labels)) / predicted.size


def zero_one_risk(h: Classifier, data: Any) -> float:
    """
    Fraction of misclassified points of a labeled dataset.

    Raises:
        InvalidInputError: if the dataset is empty or unlabeled
    """
    if data.labels is None:
        raise InvalidInputError(f"dataset '{data.name}' has no labels")
    if len(data) == 0:
        raise InvalidInputError("cannot compute a risk on an empty set")
    return error_rate(h.predict(data.features), data.labels)


def disagreement(h: Classifier, h2: Classifier, x: Any) -> float:
    """
    Fraction of points where h and h2 predict different labels.

    Raises:
        InvalidInputError: on class-count mismatch or an empty set
    """
    if h.num_classes != h2.num_classes:
        raise InvalidInputError(
            f"class-count mismatch: {h.num_classes} vs {h2.num_classes}"
        )
    features = getattr(x, "features", x)
    return error_rate(h.predict(features), h2.predict(features))


class ReplayLabeler:
    """
    A classifier that replays the stored labels of known points.

    Used to express a labeled risk as a disagreement with the labeler.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, num_classes: int):
        self.num_classes = num_classes
        self._table = {
            row.tobytes(): int(label)
            for row, label in zip(np.ascontiguousarray(features, dtype=np.float64), labels)
        }

    def predict(self, x: Any) -> np.ndarray:
        rows = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        try:
            return np.array([self._table[row.tobytes()] for row in rows], dtype=np.int64)
        except KeyError as e:
            raise InvalidInputError("replay labeler asked about an unseen point") from e
