"""
Tests for the Ben-David and confidence-score baselines and method scoring.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import pytest

from shiftgauge.baselines import (
    BaselineEstimate,
    ben_david_estimate,
    conf_score_estimate,
    conf_score_from_scores,
    score_methods,
)
from shiftgauge.datasets import split
from shiftgauge.exceptions import InvalidInputError, MetricError
from shiftgauge.models import zero_one_risk
from shiftgauge.trainer import train_dir, train_supervised


class TestConfScore:
    """Tests for the confidence-score baseline."""

    def test_worked_example(self):
        """Test source scores {0.9, 0.8}, target {0.6, 0.7} and R_S = 0.1 predict 0.3."""
        estimate = conf_score_from_scores([0.9, 0.8], [0.6, 0.7], 0.1)
        assert estimate.components["conf"] == pytest.approx(0.2, abs=1e-12)
        assert estimate.predicted_risk == pytest.approx(0.3, abs=1e-12)
        assert estimate.method == "conf_score"

    def test_empty_scores(self):
        with pytest.raises(InvalidInputError):
            conf_score_from_scores([], [0.5], 0.1)

    def test_from_model(self, toy_pair, tiny_spec, fast_cfg):
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        _, source_val = split(toy_pair.source, fast_cfg.val_fraction, fast_cfg.seed)
        estimate = conf_score_estimate(h, source_val, toy_pair.target)
        assert estimate.components["src_risk"] == zero_one_risk(h, source_val)
        assert estimate.predicted_risk == pytest.approx(
            estimate.components["src_risk"] + estimate.components["conf"]
        )

    def test_same_data_gives_source_risk(self, toy_pair, tiny_spec, fast_cfg):
        """Test the confidence gap vanishes when target and source coincide."""
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        estimate = conf_score_estimate(h, toy_pair.source, toy_pair.source.without_labels())
        assert estimate.components["conf"] == pytest.approx(0.0, abs=1e-12)


class TestClamping:
    @pytest.mark.parametrize("raw,clamped", [(-0.2, 0.0), (0.4, 0.4), (1.3, 1.0)])
    def test_predicted_risk_clamped(self, raw, clamped):
        assert BaselineEstimate("conf_score", raw).predicted_risk_clamped == clamped


class TestBenDavid:
    """Tests for the source-risk-plus-HdH baseline."""

    def test_unknown_class_mode(self, toy_pair, tiny_spec, fast_cfg):
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        with pytest.raises(InvalidInputError, match="class_mode"):
            ben_david_estimate(h, "unconstrained", toy_pair.source, toy_pair.target, fast_cfg)

    def test_sum_of_parts(self, noise_pair, tiny_spec, fast_cfg):
        """Test the prediction is R_S plus the HdH estimate, lambda left out."""
        source, target = noise_pair
        cfg = fast_cfg.with_overrides(epsilon_slack=3.0)
        h, _ = train_supervised(tiny_spec, source, cfg)
        estimate = ben_david_estimate(h, "source_constrained", source, target, cfg)
        parts = estimate.components
        assert estimate.method == "ben_david"
        assert estimate.predicted_risk == pytest.approx(parts["src_risk"] + parts["hdh_estimate"])
        assert 0.0 <= parts["hdh_estimate"] <= 1.0
        assert parts["class_mode"] == "source_constrained"
        assert "omitted" in parts["lambda_h"]

    @pytest.mark.slow
    def test_dir_class_no_looser(self, toy_pair, tiny_spec, fast_cfg):
        """Test restricting the class to aligned members does not widen the bound."""
        cfg = fast_cfg.with_overrides(lr=0.01, epochs_t1=30, epochs_t2=20)
        h, _ = train_dir(tiny_spec, toy_pair.source, toy_pair.target, cfg)
        source_bound = ben_david_estimate(h, "source_constrained", toy_pair.source, toy_pair.target, cfg)
        dir_bound = ben_david_estimate(h, "dir_constrained", toy_pair.source, toy_pair.target, cfg)
        assert dir_bound.predicted_risk <= source_bound.predicted_risk + 0.05


class TestScoreMethods:
    """Tests for MAE and Pearson scoring."""

    def test_two_pairs(self):
        score = score_methods([(0.1, 0.2), (0.3, 0.1)])
        assert score.mean_abs_err == pytest.approx(0.15)
        assert score.pearson == pytest.approx(-1.0)
        assert score.n == 2

    def test_perfect_correlation(self):
        score = score_methods([(0.1, 0.2), (0.2, 0.3), (0.4, 0.5)])
        assert score.pearson == pytest.approx(1.0)
        assert score.mean_abs_err == pytest.approx(0.1)

    def test_too_few_pairs(self):
        with pytest.raises(MetricError):
            score_methods([(0.1, 0.2)])

    def test_constant_series(self):
        with pytest.raises(MetricError, match="constant"):
            score_methods([(0.2, 0.1), (0.2, 0.3)])
