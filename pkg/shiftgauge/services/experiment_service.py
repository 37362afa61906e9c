"""
Experiment orchestration service.

One method per CLI subcommand. Each builds the shift pair of every seed,
runs the library operations, fills true-risk columns from hidden target
labels (the only place they are read, always through
``ShiftPair.hidden_target``) and hands the results to ReportService and
PlotService. A JSON manifest is written at the end of every run.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shiftgauge.baselines import BEN_DAVID, CONF_SCORE, PROXY_RISK, ben_david_estimate, conf_score_estimate, score_methods
from shiftgauge.config import ExperimentConfig
from shiftgauge.constants import (
    CHECKPOINT_EXTENSION,
    CHECKPOINTS_DIR_NAME,
    CSV_FILE_EXTENSION,
    DATA_DIR_NAME,
    DETECTION_COLUMNS,
    DETECTION_SCORE_COLUMNS,
    METHODS_COLUMNS,
    PLOTS_DIR_NAME,
    SVG_FILE_EXTENSION,
    PlotKind,
)
from shiftgauge.datasets import ShiftPair, split
from shiftgauge.exceptions import InternalError, MetricError
from shiftgauge.models import Hypothesis, ReplayLabeler, disagreement, zero_one_risk
from shiftgauge.proxy import (
    SweepRow,
    SweepTask,
    compute_proxy_risk,
    detect_errors,
    early_stopping_trace,
    earlystop_rows,
    run_sweep_task,
    score_error_detection,
    select_division,
)
from shiftgauge.trainer import TrainTrace, train_dir, train_supervised

from .plot_service import PlotService
from .report_service import ReportService, RiskReport, artifact_stem, pairs_by_method, read_methods_report

logger = logging.getLogger("shiftgauge")

EVAL_COLUMNS = ["method", "n", "mean_abs_err", "pearson"]
SWEEP_SUMMARY_COLUMNS = ["division_index", "median_worst_in_class_proxy_risk", "median_true_target_risk", "chosen"]
TRIANGLE_TOLERANCE = 1e-12

ProgressCallback = Callable[[str, int, int], None]


@dataclass
class CommandResult:
    """What a subcommand reports back to the CLI: a summary table and its files."""

    subcommand: str
    header: List[str]
    rows: List[List[Any]] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)


def seed_token(seeds: Sequence[int]) -> str:
    """
    Seed part of a filename covering several seeds.

    Examples:
        >>> seed_token([3])
        '3'
        >>> seed_token([0, 1, 2])
        '0-1-2'
    """
    return "-".join(str(s) for s in seeds)


def process_runner(workers: int) -> Callable[[List[SweepTask]], List[SweepRow]]:
    """Run sweep tasks on a process pool of ``workers`` processes."""

    def run(tasks: List[SweepTask]) -> List[SweepRow]:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_sweep_task, tasks))

    return run


class ExperimentService:
    """
    Service running the experiment subcommands.

    Attributes:
        config: Validated experiment configuration
        reports: Writes CSVs, checkpoints and manifests under the output dir
        plots: Renders SVG plots (only when ``output.emit_plots`` is set)
        workers: Process count for the division sweep (1 runs in-process)
    """

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: Optional[Union[str, Path]] = None,
        workers: int = 1,
        progress: Optional[ProgressCallback] = None,
    ):
        self.config = config
        self.out_dir = Path(out_dir or config.output.directory)
        self.reports = ReportService(self.out_dir)
        self.plots = PlotService()
        self.workers = max(1, workers)
        self.progress = progress
        self._pairs: Dict[int, ShiftPair] = {}
        self._wall_times: Dict[str, float] = {}

    # ------------------------------------------------------------------
    # Shared plumbing
    # ------------------------------------------------------------------

    @property
    def task(self) -> str:
        return self.config.task

    @property
    def seeds(self) -> List[int]:
        return list(self.config.model.seeds)

    def pair(self, seed: int) -> ShiftPair:
        if seed not in self._pairs:
            self._pairs[seed] = self.config.build_pair(seed)
        return self._pairs[seed]

    def _tick(self, subcommand: str, done: int, total: int) -> None:
        if self.progress is not None:
            self.progress(subcommand, done, total)

    def _true_risk(self, h: Hypothesis, pair: ShiftPair, purpose: str) -> Optional[float]:
        if not pair.has_hidden_labels:
            return None
        return zero_one_risk(h, pair.hidden_target(purpose))

    def _plot(self, series: Dict[str, List[Tuple[float, float]]], kind: PlotKind, stem: str, title: str) -> None:
        if not self.config.output.emit_plots:
            return
        path = self.reports.path_for(stem, SVG_FILE_EXTENSION, PLOTS_DIR_NAME)
        self.reports.written.append(self.plots.emit_plot(series, kind, path, title))

    def _finish(self, result: CommandResult, seeds: Sequence[int]) -> CommandResult:
        manifest = self.reports.start_manifest(
            result.subcommand, self.config.model_dump(mode="json"), seeds
        )
        for seed, pair in sorted(self._pairs.items()):
            manifest.hidden_label_access.extend(f"seed {seed}: {purpose}" for purpose in pair.access_log)
        manifest.wall_times = dict(self._wall_times)
        self.reports.write_manifest(manifest)
        result.outputs = list(self.reports.written)
        return result

    def _timed(self, key: str, fn: Callable[[], Any]) -> Any:
        start = time.perf_counter()
        value = fn()
        self._wall_times[key] = round(time.perf_counter() - start, 3)
        return value

    def train_candidate(
        self, seed: int, callback: Optional[Callable[[int, Hypothesis], None]] = None
    ) -> Tuple[Hypothesis, TrainTrace]:
        """Train the configured candidate (DIR or supervised) for one seed."""
        pair = self.pair(seed)
        spec = self.config.model_spec(pair.source.dim, pair.source.num_classes)
        cfg = self.config.dir_config(seed)
        epochs = self.config.model.epochs
        if self.config.model.trainer == "dir":
            return train_dir(spec, pair.source, pair.target, cfg, epochs=epochs, callback=callback, label="candidate")
        return train_supervised(spec, pair.source, cfg, epochs=epochs, callback=callback, label="candidate")

    def candidate(self, seed: int) -> Hypothesis:
        """The seed's candidate: its checkpoint under the output dir, else a fresh training run."""
        stem = artifact_stem(self.task, self.config.model.trainer, seed)
        path = self.reports.path_for(stem, CHECKPOINT_EXTENSION, CHECKPOINTS_DIR_NAME)
        if path.exists():
            logger.info(f"Reusing candidate checkpoint {path}")
            return self.reports.load_model(stem)
        h, _ = self.train_candidate(seed)
        self.reports.save_model(h, stem)
        return h

    def _methods_row(self, method: str, seed: int, estimate: float, true_risk: Optional[float]) -> RiskReport:
        report = RiskReport(self.task, method, seed, estimate, true_risk, self._wall_times.get(f"{method}/{seed}", 0.0))
        self.reports.write_methods_report(artifact_stem(self.task, method, seed), [report])
        return report

    # ------------------------------------------------------------------
    # Subcommands
    # ------------------------------------------------------------------

    def gen_data(self) -> CommandResult:
        """Write source (labeled) and target (unlabeled) features per seed."""
        result = CommandResult("gen-data", ["seed", "source_points", "target_points", "dim"])
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            for role, dataset in (("source", pair.source), ("target", pair.target)):
                header, rows = dataset.to_rows(include_labels=dataset.is_labeled)
                self.reports.write_csv(artifact_stem(self.task, role, seed), header, rows, subdir=DATA_DIR_NAME)
            result.rows.append([seed, len(pair.source), len(pair.target), pair.source.dim])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def train(self) -> CommandResult:
        """Train the candidate per seed; write its trace, checkpoint and risk curve."""
        method = self.config.model.trainer
        result = CommandResult("train", ["seed", "epochs", "src_val_risk", "objective"])
        for k, seed in enumerate(self.seeds, 1):
            h, trace = self._timed(f"{method}/{seed}", lambda: self.train_candidate(seed))
            stem = artifact_stem(self.task, method, seed)
            self.reports.save_model(h, stem)
            header, rows = trace.to_rows()
            self.reports.write_csv(artifact_stem(self.task, f"{method}-trace", seed), header, rows)
            self._plot(
                {
                    "source train risk": [(r.epoch, r.src_train_risk) for r in trace.records],
                    "source val risk": [(r.epoch, r.src_val_risk) for r in trace.records],
                    "objective": [(r.epoch, r.objective) for r in trace.records],
                },
                PlotKind.RISK_CURVE,
                artifact_stem(self.task, f"{method}-trace", seed),
                f"{self.task}: {method} training (seed {seed})",
            )
            last = trace.last
            result.rows.append([seed, len(trace), last.src_val_risk, last.objective])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def proxy_risk(self) -> CommandResult:
        """Proxy risk of each seed's candidate, with the triangle-bound audit on hidden labels."""
        result = CommandResult("proxy-risk", ["seed"] + METHODS_COLUMNS + ["epsilon"])
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            h = self.candidate(seed)
            check_spec = self.config.check_spec(pair.source.dim, pair.source.num_classes)
            proxy = self._timed(
                f"{PROXY_RISK}/{seed}",
                lambda: compute_proxy_risk(h, check_spec, pair.source, pair.target, self.config.dir_config(seed)),
            )
            header, rows = proxy.to_rows()
            self.reports.write_csv(artifact_stem(self.task, f"{PROXY_RISK}-trace", seed), header, rows)
            self.reports.save_model(proxy.best_check_model, artifact_stem(self.task, "check", seed))
            true_risk = self._true_risk(h, pair, "proxy-risk true_risk column")
            if true_risk is not None:
                self._audit_triangle(h, proxy.best_check_model, pair, true_risk)
            report = self._methods_row(PROXY_RISK, seed, proxy.max_risk, true_risk)
            result.rows.append([seed] + report.to_row() + [proxy.epsilon_used])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def _audit_triangle(self, h: Hypothesis, check: Hypothesis, pair: ShiftPair, true_risk: float) -> None:
        hidden = pair.hidden_target("triangle-bound audit")
        labeler = ReplayLabeler(hidden.features, hidden.labels, hidden.num_classes)
        bound = disagreement(h, check, hidden.features) + disagreement(check, labeler, hidden.features)
        if true_risk > bound + TRIANGLE_TOLERANCE:
            raise InternalError(f"triangle bound violated: R_T(h)={true_risk} > {bound}")
        logger.info(f"Triangle bound holds: R_T(h) {true_risk:.4f} <= {bound:.4f}")

    def sweep_division(self) -> CommandResult:
        """
        Worst in-class proxy risk of every candidate division.

        All (division, second-level division, seed) cells share the data of
        the first seed (or dataset.seed); the seeds vary the training runs.
        """
        seeds = self.seeds
        pair = self.pair(seeds[0])
        template = self.config.model_spec(pair.source.dim, pair.source.num_classes)
        check = self.config.check_spec(pair.source.dim, pair.source.num_classes)
        if check.widths != template.widths:
            logger.warning("sweep uses the model network for both levels; proxy.check_spec widths are ignored")
        runner = process_runner(self.workers) if self.workers > 1 else None
        selection = self._timed(
            "sweep-division",
            lambda: select_division(
                template.total_layers,
                self.config.candidate_divisions,
                self.config.proxy.second_level_divisions,
                template,
                pair.source,
                pair.target,
                self.config.dir_config(seeds[0]),
                seeds,
                runner,
            ),
        )
        if pair.has_hidden_labels:
            hidden = pair.hidden_target("sweep-division true_target_risk column")
            for row in selection.rows:
                row.true_target_risk = zero_one_risk(row.model, hidden)
        header, rows = selection.to_rows()
        stem = artifact_stem(self.task, "division-sweep", seed_token(seeds))
        self.reports.write_csv(stem, header, rows)

        result = CommandResult("sweep-division", SWEEP_SUMMARY_COLUMNS)
        true_by_division: Dict[int, List[float]] = {}
        for row in selection.rows:
            if row.true_target_risk is not None:
                true_by_division.setdefault(row.division_index, []).append(row.true_target_risk)
        for d, median in selection.medians.items():
            true_median = statistics.median(true_by_division[d]) if d in true_by_division else None
            result.rows.append([d, median, true_median, int(d == selection.chosen_division)])
        self.reports.write_csv(artifact_stem(self.task, "division-summary", seed_token(seeds)), SWEEP_SUMMARY_COLUMNS, result.rows)
        result.notes.append(f"chosen division: {selection.chosen_division}")

        series = {"worst in-class proxy risk": [(r.division_index, r.worst_in_class_proxy_risk) for r in selection.rows]}
        if true_by_division:
            series["true target risk"] = [(r.division_index, r.true_target_risk) for r in selection.rows]
        self._plot(series, PlotKind.DIVISION_UCURVE, stem, f"{self.task}: division sweep")
        return self._finish(result, seeds)

    def bd_bound(self) -> CommandResult:
        """Ben-David estimate per seed; the class follows the candidate's trainer."""
        mode = "dir_constrained" if self.config.model.trainer == "dir" else "source_constrained"
        result = CommandResult("bd-bound", ["seed"] + METHODS_COLUMNS + ["hdh_estimate"])
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            h = self.candidate(seed)
            check_spec = self.config.check_spec(pair.source.dim, pair.source.num_classes)
            estimate = self._timed(
                f"{BEN_DAVID}/{seed}",
                lambda: ben_david_estimate(h, mode, pair.source, pair.target, self.config.dir_config(seed), check_spec),
            )
            report = self._methods_row(
                BEN_DAVID, seed, estimate.predicted_risk, self._true_risk(h, pair, "bd-bound true_risk column")
            )
            result.rows.append([seed] + report.to_row() + [estimate.components["hdh_estimate"]])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def conf_score(self) -> CommandResult:
        """Confidence-score estimate per seed, on the source validation split."""
        result = CommandResult("conf-score", ["seed"] + METHODS_COLUMNS + ["predicted_risk_clamped"])
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            h = self.candidate(seed)
            cfg = self.config.dir_config(seed)
            _, source_val = split(pair.source, cfg.val_fraction, cfg.seed)
            estimate = self._timed(f"{CONF_SCORE}/{seed}", lambda: conf_score_estimate(h, source_val, pair.target))
            report = self._methods_row(
                CONF_SCORE, seed, estimate.predicted_risk, self._true_risk(h, pair, "conf-score true_risk column")
            )
            result.rows.append([seed] + report.to_row() + [estimate.predicted_risk_clamped])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def early_stop(self) -> CommandResult:
        """Proxy risk along the candidate's training run, one point per kept checkpoint."""
        every = self.config.proxy.early_stop_every
        result = CommandResult("early-stop", ["seed", "checkpoints", "pearson_proxy_vs_true"])
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            kept: List[Tuple[int, Hypothesis]] = []

            def keep(epoch: int, h: Hypothesis) -> None:
                if epoch % every == 0:
                    kept.append((epoch, h.copy()))

            self.train_candidate(seed, callback=keep)
            check_spec = self.config.check_spec(pair.source.dim, pair.source.num_classes)
            points = self._timed(
                f"early-stop/{seed}",
                lambda: early_stopping_trace(
                    [h for _, h in kept], check_spec, pair.source, pair.target,
                    self.config.dir_config(seed), [e for e, _ in kept],
                ),
            )
            if pair.has_hidden_labels:
                hidden = pair.hidden_target("early-stop true_target_risk column")
                for point, (_, h) in zip(points, kept):
                    point.true_target_risk = zero_one_risk(h, hidden)
            header, rows = earlystop_rows(points)
            stem = artifact_stem(self.task, "early-stop", seed)
            self.reports.write_csv(stem, header, rows)

            series = {
                "source risk": [(p.epoch, p.src_risk) for p in points],
                "proxy risk": [(p.epoch, p.proxy_risk) for p in points],
            }
            pearson = None
            if pair.has_hidden_labels:
                series["true target risk"] = [(p.epoch, p.true_target_risk) for p in points]
                try:
                    pearson = score_methods([(p.proxy_risk, p.true_target_risk) for p in points]).pearson
                except MetricError as e:
                    logger.warning(f"early-stop seed {seed}: {e}")
            self._plot(series, PlotKind.RISK_CURVE, stem, f"{self.task}: early stopping (seed {seed})")
            result.rows.append([seed, len(points), pearson])
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def detect_errors(self) -> CommandResult:
        """Flag target points where the proxy maximiser disagrees with the candidate."""
        result = CommandResult("detect-errors", ["seed", "flagged"] + DETECTION_SCORE_COLUMNS)
        for k, seed in enumerate(self.seeds, 1):
            pair = self.pair(seed)
            h = self.candidate(seed)
            check_spec = self.config.check_spec(pair.source.dim, pair.source.num_classes)
            proxy = compute_proxy_risk(h, check_spec, pair.source, pair.target, self.config.dir_config(seed))
            flags = detect_errors(h, proxy, pair.target)
            true_errors: Optional[np.ndarray] = None
            if pair.has_hidden_labels:
                hidden = pair.hidden_target("detect-errors true_error column")
                true_errors = h.predict(hidden.features) != hidden.labels
            rows = [
                [i, int(flag), "" if true_errors is None else int(true_errors[i])]
                for i, flag in enumerate(flags)
            ]
            self.reports.write_csv(artifact_stem(self.task, "detect-errors", seed), DETECTION_COLUMNS, rows)
            score_row: List[Any] = [None] * len(DETECTION_SCORE_COLUMNS)
            if true_errors is not None:
                score = score_error_detection(flags, true_errors)
                score_row = score.to_row()
                self.reports.write_csv(
                    artifact_stem(self.task, "detect-errors-score", seed), DETECTION_SCORE_COLUMNS, [score_row]
                )
            result.rows.append([seed, int(flags.sum())] + score_row)
            self._tick(result.subcommand, k, len(self.seeds))
        return self._finish(result, self.seeds)

    def evaluate(self, report_paths: Optional[Sequence[Union[str, Path]]] = None) -> CommandResult:
        """
        Mean absolute error and Pearson correlation per method.

        Reads the given methods reports, or every CSV under the output
        directory whose header is the methods-report header.
        """
        paths = [Path(p) for p in report_paths] if report_paths else self._discover_reports()
        reports: List[RiskReport] = []
        for path in paths:
            reports.extend(read_methods_report(path))
        grouped = pairs_by_method(reports)
        if not grouped:
            raise MetricError(f"no methods-report rows with a true risk in {len(paths)} file(s)")
        result = CommandResult("eval", EVAL_COLUMNS)
        for method, pairs in sorted(grouped.items()):
            try:
                score = score_methods(pairs)
            except MetricError as e:
                logger.warning(f"eval: {method}: {e}")
                result.notes.append(f"{method}: {e}")
                result.rows.append([method, len(pairs), None, None])
                continue
            result.rows.append([method, score.n, score.mean_abs_err, score.pearson])
        if all(row[2] is None for row in result.rows):
            raise MetricError("; ".join(result.notes))
        self.reports.write_csv(artifact_stem(self.task, "eval", "all"), EVAL_COLUMNS, result.rows)
        self._plot(grouped, PlotKind.SCATTER, artifact_stem(self.task, "eval", "all"), f"{self.task}: predicted vs true")
        return self._finish(result, sorted({r.seed for r in reports if r.seed is not None}))

    def _discover_reports(self) -> List[Path]:
        found = []
        for path in sorted(self.out_dir.glob(f"*{CSV_FILE_EXTENSION}")):
            with open(path, "r", encoding="utf-8", newline="") as f:
                first = f.readline().strip()
            if first.split(",") == METHODS_COLUMNS:
                found.append(path)
        logger.info(f"eval: found {len(found)} methods report(s) under {self.out_dir}")
        return found

    def run(self, subcommand: str, **kwargs: Any) -> CommandResult:
        handlers: Dict[str, Callable[..., CommandResult]] = {
            "gen-data": self.gen_data,
            "train": self.train,
            "proxy-risk": self.proxy_risk,
            "sweep-division": self.sweep_division,
            "bd-bound": self.bd_bound,
            "conf-score": self.conf_score,
            "early-stop": self.early_stop,
            "detect-errors": self.detect_errors,
            "eval": self.evaluate,
        }
        if subcommand not in handlers:
            raise InternalError(f"no handler for subcommand '{subcommand}'")
        logger.info(f"Running {subcommand} on '{self.task}' (seeds {self.seeds}) -> {self.out_dir}")
        return handlers[subcommand](**kwargs)
