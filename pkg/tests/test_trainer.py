"""
Tests for the alpha schedule, training loops and the DIR objective.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import statistics
from pathlib import Path

import numpy as np
import pytest

from shiftgauge.config import load_config
from shiftgauge.constants import DivergenceMethod
from shiftgauge.datasets import Dataset, split
from shiftgauge.exceptions import InternalError, InvalidInputError, TrainingError
from shiftgauge.models import MlpSpec, zero_one_risk
from shiftgauge.trainer import (
    DirConfig,
    TraceRecord,
    TrainTrace,
    alpha_schedule,
    dir_objective,
    epsilon_from_pretrained,
    paired_batches,
    steps_per_epoch,
    train_dir,
    train_supervised,
)


class TestAlphaSchedule:
    """Tests for the progressive alignment weight."""

    def test_endpoints(self):
        assert alpha_schedule(0.0, 1.0) == 0.0
        assert alpha_schedule(1.0, 1.0) == pytest.approx(0.999909, abs=1e-6)

    def test_midpoint(self):
        assert alpha_schedule(0.5, 0.1) == pytest.approx(0.098661, abs=1e-6)

    def test_monotone(self):
        values = [alpha_schedule(p / 10, 1.0) for p in range(11)]
        assert values == sorted(values)

    @pytest.mark.parametrize("progress", [-0.01, 1.01])
    def test_progress_range(self, progress):
        with pytest.raises(InvalidInputError):
            alpha_schedule(progress, 1.0)


class TestDirConfig:
    """Tests for DirConfig validation."""

    @pytest.mark.parametrize(
        "field,value",
        [("lr", 0.0), ("alpha_max", -1.0), ("batch_size", 0), ("val_fraction", 1.0), ("lambda_penalty", 0.0)],
    )
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(InvalidInputError, match="DirConfig"):
            DirConfig(**{field: value})

    def test_method_coerced_from_string(self):
        cfg = DirConfig(divergence_method="mmd_rbf", discriminator_widths=[4, 2])
        assert cfg.divergence_method is DivergenceMethod.MMD_RBF
        assert cfg.discriminator_widths == (4, 2)
        assert cfg.to_dict()["divergence_method"] == "mmd_rbf"

    def test_alpha_final(self):
        assert DirConfig(alpha_max=0.1).alpha_final == pytest.approx(0.1 * 0.999909, abs=1e-7)
        assert DirConfig(alpha_max=0.0).alpha_final == 0.0

    def test_overrides_validate(self):
        with pytest.raises(InvalidInputError):
            DirConfig().with_overrides(epochs_t1=0)


class TestTrace:
    def test_epochs_must_be_sequential(self):
        trace = TrainTrace()
        trace.append(TraceRecord(1, 0.1, 0.1, 0.0, 0.1))
        with pytest.raises(InternalError):
            trace.append(TraceRecord(3, 0.1, 0.1, 0.0, 0.1))

    def test_non_finite_objective(self):
        with pytest.raises(TrainingError) as exc_info:
            TrainTrace().append(TraceRecord(1, 0.1, 0.1, 0.0, float("nan")))
        assert exc_info.value.epoch == 1


class TestBatches:
    """Tests for paired minibatches."""

    def test_each_source_index_once(self):
        batches = list(paired_batches(70, 25, 32, np.random.default_rng(0), np.random.default_rng(1)))
        assert len(batches) == steps_per_epoch(70, 32) == 3
        seen = np.sort(np.concatenate([src for src, _ in batches]))
        np.testing.assert_array_equal(seen, np.arange(70))
        for src, tgt in batches:
            assert len(src) == len(tgt)
            assert tgt.max() < 25

    def test_target_cycles(self):
        """Test a small target sample is reused rather than exhausted."""
        batches = list(paired_batches(10, 3, 10, np.random.default_rng(0), np.random.default_rng(1)))
        assert sorted(set(batches[0][1].tolist())) == [0, 1, 2]


class TestTraining:
    """Tests for train_dir and train_supervised."""

    def test_trace_and_callback(self, toy_pair, tiny_spec, fast_cfg):
        calls = []
        h, trace = train_dir(
            tiny_spec, toy_pair.source, toy_pair.target, fast_cfg, callback=lambda e, _: calls.append(e)
        )
        assert calls == [1, 2, 3]
        assert [r.epoch for r in trace.records] == [1, 2, 3]
        header, rows = trace.to_rows()
        assert header[0] == "epoch" and len(rows) == 3
        assert h.spec == tiny_spec

    def test_zero_alpha_matches_supervised(self, toy_pair, tiny_spec, fast_cfg):
        """Test DIR with alpha_max = 0 trains exactly like plain source training."""
        cfg = fast_cfg.with_overrides(alpha_max=0.0)
        aligned, aligned_trace = train_dir(tiny_spec, toy_pair.source, toy_pair.target, cfg)
        plain, plain_trace = train_supervised(tiny_spec, toy_pair.source, cfg)
        for a, b in zip(aligned.parameters(), plain.parameters()):
            np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-12)
        x = toy_pair.target.features
        np.testing.assert_array_equal(aligned.predict(x), plain.predict(x))
        assert [r.objective for r in aligned_trace.records] == [r.src_val_risk for r in plain_trace.records]
        assert all(r.divergence == 0.0 for r in plain_trace.records)

    def test_zero_alpha_matches_supervised_with_mmd(self, toy_pair, tiny_spec, mmd_cfg):
        cfg = mmd_cfg.with_overrides(alpha_max=0.0)
        aligned, _ = train_dir(tiny_spec, toy_pair.source, toy_pair.target, cfg)
        plain, _ = train_supervised(tiny_spec, toy_pair.source, cfg)
        for a, b in zip(aligned.parameters(), plain.parameters()):
            np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-12)

    def test_deterministic(self, toy_pair, tiny_spec, fast_cfg):
        first, _ = train_dir(tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        second, _ = train_dir(tiny_spec, toy_pair.source, toy_pair.target, fast_cfg)
        for a, b in zip(first.parameters(), second.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_alternating_discriminator(self, toy_pair, tiny_spec, fast_cfg):
        """Test the non-GRL path trains and records a divergence."""
        _, trace = train_dir(tiny_spec, toy_pair.source, toy_pair.target, fast_cfg.with_overrides(grl=False))
        assert len(trace) == 3
        assert all(0.0 <= r.divergence for r in trace.records)

    def test_mmd_path(self, toy_pair, tiny_spec, mmd_cfg):
        _, trace = train_dir(tiny_spec, toy_pair.source, toy_pair.target, mmd_cfg)
        assert all(r.divergence >= 0.0 for r in trace.records)

    @pytest.mark.slow
    def test_learns_separable_source(self, toy_pair, tiny_spec, fast_cfg):
        """Test source training drives validation risk down on the toy task."""
        cfg = fast_cfg.with_overrides(lr=0.02)
        _, trace = train_supervised(tiny_spec, toy_pair.source, cfg, epochs=100)
        assert trace.last.src_val_risk <= 0.1

    def test_warm_start_must_match_spec(self, toy_pair, tiny_spec, fast_cfg):
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        other = MlpSpec(2, (4, 4), 2, 2)
        with pytest.raises(InvalidInputError):
            train_supervised(other, toy_pair.source, fast_cfg, init=h)

    def test_single_class_source(self, tiny_spec, fast_cfg):
        source = Dataset(np.random.default_rng(0).normal(size=(20, 2)), np.zeros(20, dtype=int))
        with pytest.raises(InvalidInputError, match="2 classes"):
            train_supervised(tiny_spec, source, fast_cfg)

    def test_non_finite_loss_carries_epoch(self, tiny_spec, fast_cfg):
        source = Dataset(np.full((20, 2), np.nan), np.arange(20) % 2)
        with pytest.raises(TrainingError) as exc_info:
            train_supervised(tiny_spec, source, fast_cfg)
        assert exc_info.value.epoch == 1
        assert exc_info.value.step == 1


class TestObjective:
    """Tests for dir_objective and epsilon_from_pretrained."""

    def test_zero_alpha_is_source_risk(self, toy_pair, tiny_spec, fast_cfg):
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        value = dir_objective(h, toy_pair.source, toy_pair.target, 0.0, DivergenceMethod.JS_DISCRIMINATOR)
        assert value == zero_one_risk(h, toy_pair.source)

    def test_positive_alpha_adds_divergence(self, toy_pair, tiny_spec, mmd_cfg):
        h, _ = train_supervised(tiny_spec, toy_pair.source, mmd_cfg)
        risk = zero_one_risk(h, toy_pair.source)
        value = dir_objective(h, toy_pair.source, toy_pair.target, 0.5, DivergenceMethod.MMD_RBF, mmd_cfg)
        assert value >= risk

    def test_epsilon_slack(self, toy_pair, tiny_spec, fast_cfg):
        """Test epsilon = (1 + slack) * objective of the pretrained model."""
        cfg = fast_cfg.with_overrides(alpha_max=0.0, epsilon_slack=0.1)
        h, _ = train_supervised(tiny_spec, toy_pair.source, cfg)
        _, source_val = split(toy_pair.source, cfg.val_fraction, cfg.seed)
        epsilon = epsilon_from_pretrained(h, source_val, toy_pair.target, cfg)
        assert epsilon == pytest.approx(1.1 * zero_one_risk(h, source_val))

    def test_vacuous_epsilon_warns(self, toy_pair, tiny_spec, fast_cfg, monkeypatch, caplog):
        """Test an unaligned pretrained model (divergence near ln 2) is reported."""
        monkeypatch.setattr("shiftgauge.trainer.dir_objective", lambda *args, **kwargs: 0.69)
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        with caplog.at_level("WARNING", logger="shiftgauge"):
            epsilon = epsilon_from_pretrained(h, toy_pair.source, toy_pair.target, fast_cfg)
        assert epsilon == pytest.approx(1.1 * 0.69)
        assert "divergence constraint is vacuous" in caplog.text

    def test_aligned_epsilon_is_quiet(self, toy_pair, tiny_spec, fast_cfg, monkeypatch, caplog):
        monkeypatch.setattr("shiftgauge.trainer.dir_objective", lambda *args, **kwargs: 0.02)
        h, _ = train_supervised(tiny_spec, toy_pair.source, fast_cfg)
        with caplog.at_level("WARNING", logger="shiftgauge"):
            epsilon_from_pretrained(h, toy_pair.source, toy_pair.target, fast_cfg)
        assert "vacuous" not in caplog.text


@pytest.mark.slow
class TestToyReplication:
    """DIR on the shipped two-band toy config, over its five seeds."""

    CONFIG = Path(__file__).parent.parent / "experiments" / "toy2d.json"

    @staticmethod
    def median_target_risk(config) -> float:
        risks = []
        for seed in config.model.seeds:
            pair = config.build_pair(seed)
            spec = config.model_spec(pair.source.dim, pair.source.num_classes)
            h, _ = train_dir(spec, pair.source, pair.target, config.dir_config(seed), epochs=config.model.epochs)
            risks.append(zero_one_risk(h, pair.hidden_target("toy replication")))
        return statistics.median(risks)

    def test_linear_encoder_adapts(self):
        assert self.median_target_risk(load_config(self.CONFIG)) <= 0.10

    def test_deep_encoder_no_better(self):
        config = load_config(self.CONFIG)
        deep = config.model_copy(update={"model": config.model.model_copy(update={"division_index": 6})})
        assert self.median_target_risk(deep) >= self.median_target_risk(config)
