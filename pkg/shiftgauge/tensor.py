"""
Minimal dense-tensor engine with reverse-mode differentiation.

Just enough for multilayer perceptrons: matrix products, bias addition,
ReLU, dropout, softmax/cross-entropy, gradient reversal and a fused RBF
MMD node. Data is float64 numpy storage; there is no broadcasting beyond
adding a bias row to a matrix.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np

from shiftgauge.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from shiftgauge.exceptions import InvalidInputError, ShapeError, TrainingError

ArrayLike = Union[np.ndarray, Sequence[float], float, int]


def _noop() -> None:
    return None


class Tensor:
    """
    A float64 array that remembers how it was computed.

    Attributes:
        data: Row-major numpy storage (always float64)
        grad: Gradient of the last backward pass, same shape as data (None
            until a backward pass reaches this tensor)
        op: Tag of the operation that produced the tensor ("leaf" for inputs
            and parameters)
    """

    def __init__(
        self,
        data: ArrayLike,
        _parents: Iterable["Tensor"] = (),
        _op: str = "leaf",
    ):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.op = _op
        self._parents = tuple(_parents)
        self._backward: Callable[[], None] = _noop

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the value of a one-element tensor as a Python float."""
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Return a leaf sharing this tensor's values but no history."""
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ------------------------------------------------------------------
    # Operators (same-shape arithmetic and scalar scaling only)
    # ------------------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, factor: float) -> "Tensor":
        return scale(self, factor)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def backward(self) -> None:
        """Back-propagate from this scalar tensor."""
        backward(self)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ============================================================================
# Graph traversal
# ============================================================================


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents-before-children order of every tensor reachable from root."""
    order: List[Tensor] = []
    visited: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Populate ``grad`` on every tensor reachable from a scalar loss.

    Gradients accumulate into existing ``grad`` arrays, so parameters must
    be zeroed between steps (the optimiser does this).
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
    loss.grad += 1.0
    for node in reversed(order):
        node._backward()


# ============================================================================
# Primitive operations
# ============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an m x k and a k x n tensor.

    Raises:
        ShapeError: if either operand is not 2-D or inner dimensions differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {list(a.shape)} @ {list(b.shape)}")
    out = Tensor(a.data @ b.data, (a, b), "matmul")

    def _backward() -> None:
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = _backward
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias to every row of an m x n tensor."""
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"bias shape mismatch: {list(x.shape)} + {list(bias.shape)}")
    out = Tensor(x.data + bias.data, (x, bias), "add_bias")

    def _backward() -> None:
        x._accumulate(out.grad)
        bias._accumulate(out.grad.sum(axis=0))

    out._backward = _backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise sum of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {list(a.shape)} + {list(b.shape)}")
    out = Tensor(a.data + b.data, (a, b), "add")

    def _backward() -> None:
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _backward
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar."""
    factor = float(factor)
    out = Tensor(x.data * factor, (x,), "scale")

    def _backward() -> None:
        x._accumulate(out.grad * factor)

    out._backward = _backward
    return out


def total(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a non-empty list of same-shape tensors."""
    if not tensors:
        raise InvalidInputError("total() of an empty list")
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return acc


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), (x,), "relu")

    def _backward() -> None:
        x._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero entries with probability ``rate``, rescale the rest."""
    if not 0.0 <= rate < 1.0:
        raise InvalidInputError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * keep, (x,), "dropout")

    def _backward() -> None:
        x._accumulate(out.grad * keep)

    out._backward = _backward
    return out


def gradient_reversal(x: Tensor, lambda_grl: float) -> Tensor:
    """
    Identity on the forward pass; multiplies the upstream gradient by
    ``-lambda_grl`` on the backward pass.
    """
    if lambda_grl < 0:
        raise InvalidInputError(f"lambda_grl must be >= 0, got {lambda_grl}")
    x = as_tensor(x)
    out = Tensor(x.data, (x,), "gradient_reversal")
    factor = -float(lambda_grl)

    def _backward() -> None:
        x._accumulate(out.grad * factor)

    out._backward = _backward
    return out


def _log_softmax_values(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_values(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array (no graph)."""
    return np.exp(_log_softmax_values(np.asarray(z, dtype=np.float64)))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last dimension."""
    x = as_tensor(x)
    s = softmax_values(x.data)
    out = Tensor(s, (x,), "softmax")

    def _backward() -> None:
        g = out.grad
        x._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    out._backward = _backward
    return out


def log_softmax(x: Tensor) -> Tensor:
    x = as_tensor(x)
    logp = _log_softmax_values(x.data)
    out = Tensor(logp, (x,), "log_softmax")

    def _backward() -> None:
        g = out.grad
        x._accumulate(g - np.exp(logp) * g.sum(axis=-1, keepdims=True))

    out._backward = _backward
    return out


def check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Validate a vector of class indices in [0, num_classes)."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be a vector, got shape {list(labels.shape)}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidInputError(
            f"label index out of range [0, {num_classes}): "
            f"min={labels.min()}, max={labels.max()}"
        )
    return labels.astype(np.int64)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean negative log-likelihood of integer labels under softmax(logits).

    Raises:
        InvalidInputError: if a label is outside [0, K)
        ShapeError: if logits and labels disagree on the batch size
    """
    logits = as_tensor(logits)
    n, k = logits.shape
    labels = check_labels(labels, k)
    if labels.shape[0] != n:
        raise ShapeError(
            f"cross_entropy batch mismatch: logits {list(logits.shape)} vs labels {list(labels.shape)}"
        )
    logp = _log_softmax_values(logits.data)
    rows = np.arange(n)
    out = Tensor(-logp[rows, labels].mean(), (logits,), "cross_entropy")

    def _backward() -> None:
        g = np.exp(logp)
        g[rows, labels] -= 1.0
        logits._accumulate(g * (out.grad / n))

    out._backward = _backward
    return out


# Largest p_y kept in -log(1 - p_y)
_AGREEMENT_CEILING = 1.0 - 1e-12


def disagreement_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean -log(1 - p_y) of integer labels under softmax(logits).

    Minimising it moves probability away from ``labels``. The gradient
    with respect to the labelled logit tends to 1 (not 0) as p_y -> 1,
    so a model that confidently agrees with the labels still gets pushed.

    Raises:
        InvalidInputError: if a label is outside [0, K)
        ShapeError: if logits and labels disagree on the batch size
    """
    logits = as_tensor(logits)
    n, k = logits.shape
    labels = check_labels(labels, k)
    if labels.shape[0] != n:
        raise ShapeError(
            f"disagreement_loss batch mismatch: logits {list(logits.shape)} vs labels {list(labels.shape)}"
        )
    p = np.exp(_log_softmax_values(logits.data))
    rows = np.arange(n)
    p_y = np.minimum(p[rows, labels], _AGREEMENT_CEILING)
    out = Tensor(-np.log1p(-p_y).mean(), (logits,), "disagreement_loss")

    def _backward() -> None:
        g = -p * (p_y / (1.0 - p_y))[:, None]
        g[rows, labels] = p_y
        logits._accumulate(g * (out.grad / n))

    out._backward = _backward
    return out


# ============================================================================
# Kernel two-sample statistic
# ============================================================================


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of a and b."""
    d = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def rbf_mmd2(x: Tensor, y: Tensor, sigma: float) -> Tensor:
    """
    Biased (V-statistic) squared MMD with kernel exp(-|a-b|^2 / (2 sigma^2)).

    The bandwidth is treated as a constant.
    """
    x, y = as_tensor(x), as_tensor(y)
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"rbf_mmd2 shape mismatch: {list(x.shape)} vs {list(y.shape)}")
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    X, Y = x.data, y.data
    n, m = X.shape[0], Y.shape[0]
    two_s2 = 2.0 * sigma * sigma
    kxx = np.exp(-squared_distances(X, X) / two_s2)
    kyy = np.exp(-squared_distances(Y, Y) / two_s2)
    kxy = np.exp(-squared_distances(X, Y) / two_s2)
    value = kxx.mean() + kyy.mean() - 2.0 * kxy.mean()
    out = Tensor(value, (x, y), "rbf_mmd2")

    def _backward() -> None:
        g = float(out.grad)
        s2 = sigma * sigma
        gx = (-2.0 / (n * n * s2)) * (X * kxx.sum(axis=1)[:, None] - kxx @ X)
        gx += (2.0 / (n * m * s2)) * (X * kxy.sum(axis=1)[:, None] - kxy @ Y)
        gy = (-2.0 / (m * m * s2)) * (Y * kyy.sum(axis=1)[:, None] - kyy @ Y)
        gy += (2.0 / (n * m * s2)) * (Y * kxy.sum(axis=0)[:, None] - kxy.T @ X)
        x._accumulate(g * gx)
        y._accumulate(g * gy)

    out._backward = _backward
    return out


# ============================================================================
# Initialisation and optimisation
# ============================================================================


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform He-style init: U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class AdamState:
    """First/second moment estimates and step counter for Adam."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **kwargs,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """
    Apply one bias-corrected Adam update in place.

    Raises:
        TrainingError: if any gradient is non-finite (carries the step index)
    """
    step = state.step + 1
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at optimiser step {step}", step=step)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.step = step
    return state


@dataclass
class Adam:
    """Adam optimiser over a de-duplicated list of parameter tensors."""

    params: List[Tensor]
    lr: float
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        unique: List[Tensor] = []
        seen: set = set()
        for p in self.params:
            if id(p) not in seen:
                seen.add(id(p))
                unique.append(p)
        self.params = unique
        self.state = AdamState.zeros(unique)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state, self.lr)
