"""
Result persistence service.

This module writes everything a run leaves behind under the output
directory: RFC-4180 CSV tables, hypothesis checkpoints and one JSON
manifest per run (config snapshot, seeds, package versions, hidden-label
access log and wall times).

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from shiftgauge.checkpoint import load_checkpoint, save_checkpoint
from shiftgauge.constants import (
    CHECKPOINT_EXTENSION,
    CHECKPOINTS_DIR_NAME,
    CSV_FILE_EXTENSION,
    MANIFEST_PREFIX,
    METHODS_COLUMNS,
)
from shiftgauge.exceptions import FormatError, InternalError
from shiftgauge.models import Hypothesis

logger = logging.getLogger("shiftgauge")

TRACKED_PACKAGES = ("numpy", "scikit-learn", "pydantic", "Jinja2")


def artifact_stem(task: str, method: str, seed: Union[int, str]) -> str:
    """
    Deterministic file stem shared by CSVs and checkpoints.

    Examples:
        >>> artifact_stem("toy2d", "proxy_risk", 3)
        'toy2d_proxy_risk_3'
    """
    return f"{task}_{method}_{seed}"


def _format_cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


@dataclass
class RiskReport:
    """
    One (task, method, seed) prediction of target risk.

    ``abs_err`` is derived: present exactly when ``true_risk`` is.
    The seed lives in the report's file name, not in its rows, and
    ``wall_time_s`` is kept for the manifest only, so reruns produce
    identical tables.
    """

    task: str
    method: str
    seed: Optional[int]
    estimated_risk: float
    true_risk: Optional[float] = None
    wall_time_s: float = 0.0
    abs_err: Optional[float] = field(default=None, init=False)

    def __post_init__(self) -> None:
        if self.true_risk is not None:
            self.abs_err = abs(self.estimated_risk - self.true_risk)

    def to_row(self) -> List[Any]:
        return [self.task, self.method, self.estimated_risk, self.true_risk, self.abs_err]


@dataclass
class RunManifest:
    """What a run needs to be reproduced and audited."""

    subcommand: str
    config: Dict[str, Any]
    seeds: List[int]
    started_at: str
    versions: Dict[str, str]
    hidden_label_access: List[str] = field(default_factory=list)
    wall_times: Dict[str, float] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Convert the manifest to a JSON-ready dictionary."""
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seeds": self.seeds,
            "started_at": self.started_at,
            "versions": self.versions,
            "hidden_label_access": self.hidden_label_access,
            "wall_times": self.wall_times,
            "outputs": self.outputs,
        }


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


class ReportService:
    """
    Service for writing run artifacts.

    Only the coordinating process writes; workers return results and the
    coordinator orders them by key before calling into this service.
    """

    def __init__(self, out_dir: Union[str, Path]):
        """
        Initialize ReportService.

        Args:
            out_dir: Root of the run's output tree
        """
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def path_for(self, stem: str, extension: str = CSV_FILE_EXTENSION, subdir: Optional[str] = None) -> Path:
        base = self.out_dir / subdir if subdir else self.out_dir
        return base / f"{stem}{extension}"

    def write_csv(
        self,
        stem: str,
        header: Sequence[str],
        rows: Sequence[Sequence[Any]],
        subdir: Optional[str] = None,
        create_dirs: bool = True,
    ) -> Path:
        """
        Write an RFC-4180 CSV (CRLF line ends, minimal quoting).

        Floats are written with ``repr`` so values survive a round trip
        exactly; ``None`` becomes an empty field.

        Raises:
            InternalError: if a row's width differs from the header's
            FileNotFoundError: if the directory is missing and create_dirs is False
        """
        path = self.path_for(stem, CSV_FILE_EXTENSION, subdir)
        if create_dirs:
            path.parent.mkdir(parents=True, exist_ok=True)
        elif not path.parent.exists():
            raise FileNotFoundError(f"Output directory does not exist: {path.parent}")
        for k, row in enumerate(rows):
            if len(row) != len(header):
                raise InternalError(f"{path.name}: row {k} has {len(row)} fields, header has {len(header)}")
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(v) for v in row])
        self.written.append(path)
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_methods_report(self, stem: str, reports: Sequence[RiskReport]) -> Path:
        ordered = sorted(reports, key=lambda r: (r.task, r.method, -1 if r.seed is None else r.seed))
        return self.write_csv(stem, METHODS_COLUMNS, [r.to_row() for r in ordered])

    def save_model(self, h: Hypothesis, stem: str) -> Path:
        path = save_checkpoint(h, self.path_for(stem, CHECKPOINT_EXTENSION, CHECKPOINTS_DIR_NAME))
        self.written.append(path)
        return path

    def load_model(self, stem: str) -> Hypothesis:
        return load_checkpoint(self.path_for(stem, CHECKPOINT_EXTENSION, CHECKPOINTS_DIR_NAME))

    def start_manifest(self, subcommand: str, config: Dict[str, Any], seeds: Sequence[int]) -> RunManifest:
        return RunManifest(
            subcommand=subcommand,
            config=config,
            seeds=list(seeds),
            started_at=datetime.now().isoformat(timespec="seconds"),
            versions=package_versions(),
        )

    def write_manifest(self, manifest: RunManifest) -> Path:
        """Write ``manifest_<subcommand>.json`` listing every artifact written so far."""
        manifest.outputs = [str(p.relative_to(self.out_dir)) for p in self.written if p.is_relative_to(self.out_dir)]
        path = self.out_dir / f"{MANIFEST_PREFIX}_{manifest.subcommand}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Manifest written: {path}")
        return path


def seed_from_stem(stem: str) -> Optional[int]:
    """
    Seed encoded at the end of a ``{task}_{method}_{seed}`` file stem.

    Examples:
        >>> seed_from_stem("toy2d_proxy_risk_3")
        3
        >>> seed_from_stem("toy2d_eval_all") is None
        True
    """
    token = stem.rsplit("_", 1)[-1]
    return int(token) if token.isdigit() else None


def read_methods_report(path: Union[str, Path]) -> List[RiskReport]:
    """
    Parse a methods report written by ``write_methods_report``.

    Rows carry no seed column; every report gets the seed of the file
    name (None when the stem does not end in one).

    Raises:
        FileNotFoundError: if the file does not exist
        FormatError: on a wrong header or unparsable numbers (names the line)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Methods report not found: {path}")
    seed = seed_from_stem(path.stem)
    reports: List[RiskReport] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != METHODS_COLUMNS:
            raise FormatError(f"{path}: line 1: expected header {','.join(METHODS_COLUMNS)}")
        for line_no, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(METHODS_COLUMNS):
                raise FormatError(f"{path}: line {line_no}: expected {len(METHODS_COLUMNS)} fields, got {len(row)}")
            try:
                true_risk = float(row[3]) if row[3] != "" else None
                reports.append(RiskReport(row[0], row[1], seed, float(row[2]), true_risk))
            except ValueError as e:
                raise FormatError(f"{path}: line {line_no}: {e}") from e
    return reports


def pairs_by_method(reports: Sequence[RiskReport]) -> Dict[str, List[Tuple[float, float]]]:
    """(predicted, true) pairs per method, skipping rows without a true risk."""
    grouped: Dict[str, List[Tuple[float, float]]] = {}
    for r in reports:
        if r.true_risk is None or not math.isfinite(r.true_risk):
            continue
        grouped.setdefault(r.method, []).append((r.estimated_risk, r.true_risk))
    return grouped
