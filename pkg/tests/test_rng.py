"""
Tests for labelled random streams.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import numpy as np

from shiftgauge.rng import RngStreams


class TestRngStreams:
    """Tests for RngStreams."""

    def test_same_label_same_numbers(self):
        a = RngStreams(3).stream("init").random(5)
        b = RngStreams(3).stream("init").random(5)
        np.testing.assert_array_equal(a, b)

    def test_labels_independent(self):
        streams = RngStreams(3)
        assert not np.array_equal(streams.stream("init").random(5), streams.stream("dropout").random(5))

    def test_seed_changes_numbers(self):
        assert RngStreams(3).stream("x").random() != RngStreams(4).stream("x").random()

    def test_drawing_elsewhere_does_not_shift(self):
        """Test an extra draw on one stream leaves other streams unchanged."""
        first = RngStreams(1)
        first.stream("batches").random(100)
        np.testing.assert_array_equal(first.stream("init").random(3), RngStreams(1).stream("init").random(3))

    def test_child_prefixes_labels(self):
        child = RngStreams(5).child("train")
        assert child.prefix == "train"
        np.testing.assert_array_equal(child.stream("init").random(3), RngStreams(5).stream("train/init").random(3))
        assert child.child("dropout").prefix == "train/dropout"

    def test_derive_seed_range(self):
        seed = RngStreams(9).derive_seed("moons")
        assert 0 <= seed < 2**31 - 1
        assert seed == RngStreams(9).derive_seed("moons")
