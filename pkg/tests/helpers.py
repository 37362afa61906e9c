"""
Helpers shared by several test modules: hand-built networks and
Hypothesis settings profiles.

Import these instead of using inline @settings(max_examples=...).

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

from typing import Callable, Sequence

import numpy as np
from hypothesis import HealthCheck, settings

from shiftgauge.models import Hypothesis, Linear, MlpSpec
from shiftgauge.tensor import Tensor, backward

# Exhaustive oracle properties enumerate whole classes per example
ORACLE_SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

# Gradient fuzzing builds a small graph per example
GRADIENT_SETTINGS = settings(max_examples=30, deadline=None)


def fixed_hypothesis(spec: MlpSpec, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> Hypothesis:
    """Build a hypothesis from explicit per-layer weights and biases."""
    layers = [Linear(Tensor(np.asarray(w, dtype=float)), Tensor(np.asarray(b, dtype=float))) for w, b in zip(weights, biases)]
    return Hypothesis(spec, layers)


def threshold_network(threshold: float = 0.0) -> Hypothesis:
    """
    A 1D network predicting 1 exactly when x > threshold.

    Layer 1 computes relu(x - t) and relu(t - x); the output layer swaps
    them into logits [relu(t - x), relu(x - t)].
    """
    spec = MlpSpec(input_dim=1, widths=(2,), num_classes=2, division_index=1)
    return fixed_hypothesis(
        spec,
        [np.array([[1.0, -1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]])],
        [np.array([-threshold, threshold]), np.zeros(2)],
    )


def numeric_gradient(loss_fn: Callable[[], float], array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``loss_fn`` w.r.t. every entry of ``array`` (edited in place)."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        saved = array[idx]
        array[idx] = saved + h
        up = loss_fn()
        array[idx] = saved - h
        down = loss_fn()
        array[idx] = saved
        grad[idx] = (up - down) / (2 * h)
    return grad


def analytic_gradient(build: Callable[[], Tensor], leaf: Tensor) -> np.ndarray:
    """Run one backward pass from ``build()`` and return ``leaf.grad``."""
    leaf.grad = None
    backward(build())
    return leaf.grad.copy()
