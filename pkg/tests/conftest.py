"""
Test configuration and shared fixtures.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from shiftgauge.constants import DivergenceMethod  # noqa: E402
from shiftgauge.datasets import Dataset, make_toy2d  # noqa: E402
from shiftgauge.models import MlpSpec  # noqa: E402
from shiftgauge.trainer import DirConfig  # noqa: E402


@pytest.fixture
def fast_cfg():
    """A DirConfig small enough for unit tests (a few epochs, tiny discriminator)."""
    return DirConfig(
        epochs_t1=3,
        epochs_t2=3,
        audit_epochs=3,
        batch_size=32,
        discriminator_widths=(8,),
        warm_start_epochs=1,
        seed=0,
    )


@pytest.fixture
def mmd_cfg(fast_cfg):
    return fast_cfg.with_overrides(divergence_method=DivergenceMethod.MMD_RBF)


@pytest.fixture
def toy_pair():
    """Toy two-band shift pair with 80 points per domain."""
    return make_toy2d(0.05, 80, seed=0)


@pytest.fixture
def tiny_spec():
    """2 -> 4 -> 4 -> 2 network divided after the first layer."""
    return MlpSpec(input_dim=2, widths=(4, 4), num_classes=2, division_index=1)


@pytest.fixture
def labeled_line():
    """Eight labeled 1D points; a threshold at 0 misclassifies three of them."""
    x = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    y = np.array([0, 0, 1, 1, 1, 0, 1, 1])
    return Dataset(x.reshape(-1, 1), y, name="line")


@pytest.fixture
def noise_pair():
    """Labels independent of the features, so every model has source risk near 0.5."""
    rng = np.random.default_rng(11)
    source = Dataset(rng.normal(size=(120, 2)), rng.integers(0, 2, 120), name="noise")
    target = Dataset(rng.normal(1.5, 1.0, size=(120, 2)), name="noise-target")
    return source, target
