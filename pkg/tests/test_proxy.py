"""
Tests for proxy risk, division selection, early stopping and error detection.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import numpy as np
import pytest

from helpers import threshold_network
from shiftgauge.datasets import Dataset, split
from shiftgauge.exceptions import InvalidInputError, ShapeError
from shiftgauge.models import Hypothesis, MlpSpec, ReplayLabeler, disagreement, zero_one_risk
from shiftgauge.oracle import Sample, SourceRiskConstraint, ThresholdClassifier, exact_proxy_risk, threshold_class
from shiftgauge.proxy import (
    SweepRow,
    choose_division,
    compute_proxy_risk,
    detect_errors,
    early_stopping_trace,
    score_error_detection,
    select_division,
    worst_in_class_proxy_risk,
)
from shiftgauge.trainer import train_supervised


@pytest.fixture
def candidate(toy_pair, tiny_spec, fast_cfg):
    h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg, label="candidate")
    return h


class TestComputeProxyRisk:
    """Tests for compute_proxy_risk."""

    def test_pretrained_check_model_is_feasible(self, candidate, toy_pair, tiny_spec, fast_cfg):
        result = compute_proxy_risk(candidate, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        assert result.trace[0].epoch == 0
        assert result.trace[0].feasible
        assert 0.0 <= result.max_risk <= 1.0
        assert 1 <= result.feasible_epochs <= len(result.trace) == fast_cfg.epochs_t2 + 1
        assert result.trace[result.best_epoch].value == result.max_risk
        assert result.epsilon_used >= 0.0

    def test_candidate_untouched(self, candidate, toy_pair, tiny_spec, fast_cfg):
        before = [p.data.copy() for p in candidate.parameters()]
        compute_proxy_risk(candidate, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        for b, p in zip(before, candidate.parameters()):
            np.testing.assert_array_equal(b, p.data)

    def test_triangle_bound_holds(self, candidate, toy_pair, tiny_spec, fast_cfg):
        """Test R_T(h) <= d_T(h, h') + R_T(h') with the best check model."""
        result = compute_proxy_risk(candidate, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        hidden = toy_pair.hidden_target("triangle test")
        labeler = ReplayLabeler(hidden.features, hidden.labels, hidden.num_classes)
        check = result.best_check_model
        bound = disagreement(candidate, check, hidden.features) + disagreement(check, labeler, hidden.features)
        assert zero_one_risk(candidate, hidden) <= bound + 1e-12

    def test_error_flags_match_proxy_risk(self, candidate, toy_pair, tiny_spec, fast_cfg):
        """Test the share of flagged target points equals the reported maximum."""
        result = compute_proxy_risk(candidate, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        flags = detect_errors(candidate, result, toy_pair.target)
        assert flags.dtype == bool
        assert flags.mean() == pytest.approx(result.max_risk)

    def test_mmd_check_models(self, candidate, toy_pair, tiny_spec, mmd_cfg):
        result = compute_proxy_risk(candidate, tiny_spec, toy_pair.source, toy_pair.target, mmd_cfg)
        assert result.trace[0].feasible

    def test_width_mismatch(self, candidate, toy_pair, fast_cfg):
        with pytest.raises(ShapeError):
            compute_proxy_risk(candidate, MlpSpec(3, (4, 4)), toy_pair.source, toy_pair.target, fast_cfg)

    def test_class_count_mismatch(self, candidate, toy_pair, fast_cfg):
        with pytest.raises(InvalidInputError, match="class-count mismatch"):
            compute_proxy_risk(candidate, MlpSpec(2, (4, 4), 3), toy_pair.source, toy_pair.target, fast_cfg)


class TestDivisionChoice:
    """Tests for picking a division from sweep rows."""

    def test_median_per_division(self):
        rows = [
            SweepRow(1, 1, 0, 0.2),
            SweepRow(1, 1, 1, 0.4),
            SweepRow(1, 1, 2, 0.3),
            SweepRow(2, 1, 0, 0.1),
            SweepRow(2, 1, 1, 0.25),
        ]
        chosen, medians = choose_division(rows)
        assert medians == pytest.approx({1: 0.3, 2: 0.175})
        assert chosen == 2

    def test_tie_goes_to_shallower_encoder(self):
        rows = [SweepRow(2, 1, 0, 0.3), SweepRow(1, 1, 0, 0.3)]
        assert choose_division(rows)[0] == 1

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            choose_division([])


class TestSelectDivision:
    """Tests for the sweep driver, with a runner that skips training."""

    @staticmethod
    def fake_runner(tasks):
        values = {1: 0.4, 2: 0.2, 3: 0.3}
        return [
            SweepRow(t.division_index, t.second_level_division, t.seed, values[t.division_index] + 0.01 * t.seed)
            for t in reversed(tasks)
        ]

    def test_rows_ordered_and_chosen(self, toy_pair, fast_cfg):
        template = MlpSpec(2, (4, 4, 4))
        selection = select_division(
            4, [1, 2, 3], [1, 2], template, toy_pair.source, toy_pair.target, fast_cfg,
            seeds=[0, 1], runner=self.fake_runner,
        )
        assert selection.chosen_division == 2
        assert [r.key for r in selection.rows] == sorted(r.key for r in selection.rows)
        assert len(selection.rows) == 3 * 2 * 2
        header, table = selection.to_rows()
        assert len(table) == 12 and len(header) == len(table[0])

    @pytest.mark.parametrize(
        "candidates,second",
        [([], [1]), ([0], [1]), ([4], [1]), ([1], [4]), ([1], [])],
    )
    def test_invalid_divisions(self, toy_pair, fast_cfg, candidates, second):
        with pytest.raises(InvalidInputError):
            select_division(
                4, candidates, second, MlpSpec(2, (4, 4, 4)), toy_pair.source, toy_pair.target, fast_cfg,
                runner=self.fake_runner,
            )

    def test_template_depth_checked(self, toy_pair, fast_cfg):
        with pytest.raises(InvalidInputError, match="layers"):
            select_division(
                5, [1], [1], MlpSpec(2, (4, 4, 4)), toy_pair.source, toy_pair.target, fast_cfg,
                runner=self.fake_runner,
            )

    @pytest.mark.slow
    def test_sequential_runner(self, toy_pair, fast_cfg):
        """Test the default runner trains every cell and reports values in [0, 1]."""
        selection = select_division(
            3, [1, 2], [1], MlpSpec(2, (4, 4)), toy_pair.source, toy_pair.target, fast_cfg, seeds=[0]
        )
        assert selection.chosen_division in (1, 2)
        assert all(0.0 <= r.worst_in_class_proxy_risk <= 1.0 for r in selection.rows)
        assert all(r.model is not None for r in selection.rows)


class TestWorstInClass:
    def test_division_range(self, toy_pair, tiny_spec, fast_cfg):
        with pytest.raises(InvalidInputError):
            worst_in_class_proxy_risk(3, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, seeds=[0])

    def test_needs_seeds(self, toy_pair, tiny_spec, fast_cfg):
        with pytest.raises(InvalidInputError):
            worst_in_class_proxy_risk(1, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, seeds=[])

    @pytest.mark.slow
    def test_median_over_seeds(self, toy_pair, tiny_spec, fast_cfg):
        report = worst_in_class_proxy_risk(2, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, seeds=[0, 1, 2])
        assert len(report.per_seed) == 3
        assert report.worst_in_class_proxy_risk == sorted(report.per_seed)[1]
        assert report.second_level_division == tiny_spec.division_index


class TestEarlyStopping:
    """Tests for early_stopping_trace."""

    def test_epoch_count_mismatch(self, candidate, toy_pair, tiny_spec, fast_cfg):
        with pytest.raises(InvalidInputError):
            early_stopping_trace([candidate], tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, epochs=[1, 2])

    def test_epochs_must_increase(self, candidate, toy_pair, tiny_spec, fast_cfg):
        with pytest.raises(InvalidInputError, match="ordered"):
            early_stopping_trace(
                [candidate, candidate], tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, epochs=[2, 2]
            )

    def test_warm_started_points(self, toy_pair, tiny_spec, fast_cfg):
        """Test one point per checkpoint, in order, with target truth left empty."""
        snapshots = []
        train_supervised(
            tiny_spec, toy_pair.source, fast_cfg, callback=lambda epoch, h: snapshots.append(h.copy())
        )
        points = early_stopping_trace(snapshots, tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        assert [p.epoch for p in points] == [1, 2, 3]
        assert all(0.0 <= p.proxy_risk <= 1.0 for p in points)
        assert all(p.true_target_risk is None for p in points)


class TestScoreErrorDetection:
    """Tests for precision/recall/F1 of error flags."""

    def test_confusion_counts(self):
        score = score_error_detection([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
        assert (score.tp, score.fp, score.fn) == (2, 1, 1)
        assert score.precision == pytest.approx(2 / 3)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f1 == pytest.approx(2 / 3)

    def test_nothing_to_find(self):
        score = score_error_detection([0, 0], [0, 0])
        assert (score.precision, score.recall, score.f1) == (1.0, 1.0, 1.0)

    def test_missed_everything(self):
        score = score_error_detection([0, 0, 0], [1, 0, 1])
        assert (score.precision, score.recall, score.f1) == (0.0, 0.0, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            score_error_detection([1, 0], [1, 0, 1])

    def test_flags_from_identical_models(self, toy_pair):
        """Test a check model equal to the candidate flags nothing."""
        h = Hypothesis.initialize(MlpSpec(2, (4, 4)), np.random.default_rng(0))

        class _Result:
            best_check_model = h

        assert not detect_errors(h, _Result(), toy_pair.target).any()


@pytest.mark.slow
class TestProxyAgainstOracle:
    """Proxy risk on a 1D miniature against exhaustive threshold enumeration."""

    def test_unshifted_line(self, fast_cfg):
        """Test a target drawn from the source validation points leaves no room to disagree."""
        cfg = fast_cfg.with_overrides(lr=0.05, epochs_t1=40, epochs_t2=40)
        x = np.linspace(-1.0, 1.0, 500)
        source = Dataset(x, (x > 0).astype(int), name="line")
        _, source_val = split(source, cfg.val_fraction, cfg.seed)
        target = source_val.without_labels()
        h = threshold_network(0.0)

        val = Sample.of(source_val.features[:, 0], source_val.labels)
        exact, _ = exact_proxy_risk(
            ThresholdClassifier(0, 1), threshold_class(), SourceRiskConstraint(0, val), Sample.of(target.features[:, 0])
        )
        result = compute_proxy_risk(h, MlpSpec(1, (4,), 2, 1), source, target, cfg)
        assert result.max_risk == pytest.approx(float(exact), abs=0.02)
