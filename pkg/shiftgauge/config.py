"""Experiment configuration schemas.

An experiment is described by one JSON file with five blocks (dataset,
model, train, proxy, output). Pydantic validates it at load time so a
typo'd key or an impossible division fails before any training starts.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from shiftgauge.constants import (
    DEFAULT_ALPHA_MAX,
    DEFAULT_AUDIT_EPOCHS,
    DEFAULT_AUDIT_HOLDOUT,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DISCRIMINATOR_WIDTHS,
    DEFAULT_EPOCHS_T1,
    DEFAULT_EPOCHS_T2,
    DEFAULT_EPSILON_SLACK,
    DEFAULT_LAMBDA_PENALTY,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEEDS,
    DEFAULT_VAL_FRACTION,
    DEFAULT_WARM_START_EPOCHS,
    DivergenceMethod,
    DomainTag,
)
from shiftgauge.datasets import (
    ShiftPair,
    load_csv,
    load_idx,
    make_gauss_shift,
    make_moons_shift,
    make_toy2d,
)
from shiftgauge.error_messages import CONFIG_UNKNOWN_KEY
from shiftgauge.exceptions import ConfigurationError
from shiftgauge.models import MlpSpec
from shiftgauge.trainer import DirConfig


class DatasetBlock(BaseModel):
    """Where the shift pair comes from: a generator or source/target files."""

    generator: Literal["toy2d", "moons", "gauss", "csv", "idx"] = "toy2d"
    task: Optional[str] = Field(default=None, min_length=1, max_length=100)
    seed: Optional[int] = Field(default=None, description="Data seed; the run seed when omitted")
    n: int = Field(default=1000, ge=2)
    epsilon: float = Field(default=0.05, ge=0.0, le=0.25)
    rotation_deg: float = Field(default=30.0, ge=0.0, le=180.0)
    noise: float = Field(default=0.1, ge=0.0)
    mean_shift: float = 1.0
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    source_labels_path: Optional[str] = None
    target_labels_path: Optional[str] = None
    label_column: int = -1
    has_header: bool = False
    num_classes: Optional[int] = Field(default=None, ge=2)
    standardize: bool = True

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_paths(self) -> "DatasetBlock":
        """File-backed datasets need both domains."""
        if self.generator in ("csv", "idx") and not (self.source_path and self.target_path):
            raise ValueError(f"generator '{self.generator}' needs source_path and target_path")
        if self.generator == "idx" and not self.source_labels_path:
            raise ValueError("generator 'idx' needs source_labels_path")
        return self

    @property
    def task_name(self) -> str:
        return self.task or self.generator

    def build_pair(self, run_seed: int, val_fraction: float) -> ShiftPair:
        """Generate or load the shift pair (standardised on source statistics if requested)."""
        seed = run_seed if self.seed is None else self.seed
        if self.generator == "toy2d":
            pair = make_toy2d(self.epsilon, self.n, seed)
        elif self.generator == "moons":
            pair = make_moons_shift(self.rotation_deg, self.noise, self.n, seed)
        elif self.generator == "gauss":
            pair = make_gauss_shift(self.mean_shift, self.n, seed)
        elif self.generator == "csv":
            source = load_csv(self.source_path, self.label_column, self.has_header, DomainTag.SOURCE, self.num_classes)
            target = load_csv(
                self.target_path, self.label_column, self.has_header, DomainTag.TARGET, source.num_classes
            )
            pair = ShiftPair.from_labeled(source, target, split_seed=seed)
        else:
            k = self.num_classes or 10
            source = load_idx(self.source_path, self.source_labels_path, DomainTag.SOURCE, k)
            target = load_idx(self.target_path, self.target_labels_path, DomainTag.TARGET, k)
            pair = ShiftPair.from_labeled(source, target, split_seed=seed)
        pair.val_fraction = val_fraction
        return pair.standardized() if self.standardize else pair


class NetworkBlock(BaseModel):
    """MlpSpec fields; the input width and class count come from the data."""

    widths: List[int] = Field(default_factory=lambda: [16, 16], min_length=1)
    division_index: int = Field(default=1, ge=1)
    latent_relu: bool = True

    model_config = ConfigDict(extra="forbid")

    @field_validator("widths")
    @classmethod
    def validate_widths(cls, v: List[int]) -> List[int]:
        if any(w < 1 for w in v):
            raise ValueError("widths must be >= 1")
        return v

    @property
    def total_layers(self) -> int:
        return len(self.widths) + 1

    def to_spec(self, input_dim: int, num_classes: int) -> MlpSpec:
        return MlpSpec(input_dim, tuple(self.widths), num_classes, self.division_index, self.latent_relu)


class ModelBlock(NetworkBlock):
    """The candidate network, how it is trained and the seeds of the run."""

    trainer: Literal["dir", "supervised"] = "dir"
    epochs: int = Field(default=DEFAULT_EPOCHS_T1, ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)
    candidate_divisions: Optional[List[int]] = Field(default=None, min_length=1)


class TrainBlock(BaseModel):
    """DirConfig fields except the seed, which comes from the model block."""

    alpha_max: float = Field(default=DEFAULT_ALPHA_MAX, ge=0.0)
    lr: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0)
    epochs_t1: int = Field(default=DEFAULT_EPOCHS_T1, ge=1)
    epochs_t2: int = Field(default=DEFAULT_EPOCHS_T2, ge=0)
    lambda_penalty: float = Field(default=DEFAULT_LAMBDA_PENALTY, gt=0.0)
    epsilon_slack: float = Field(default=DEFAULT_EPSILON_SLACK, ge=0.0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    divergence_method: DivergenceMethod = DivergenceMethod.JS_DISCRIMINATOR
    grl: bool = True
    val_fraction: float = Field(default=DEFAULT_VAL_FRACTION, gt=0.0, lt=1.0)
    audit_epochs: int = Field(default=DEFAULT_AUDIT_EPOCHS, ge=1)
    audit_holdout: float = Field(default=DEFAULT_AUDIT_HOLDOUT, gt=0.0, lt=1.0)
    discriminator_widths: List[int] = Field(default_factory=lambda: list(DEFAULT_DISCRIMINATOR_WIDTHS))
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    warm_start_epochs: int = Field(default=DEFAULT_WARM_START_EPOCHS, ge=1)

    model_config = ConfigDict(extra="forbid")

    def to_dir_config(self, seed: int) -> DirConfig:
        return DirConfig(seed=seed, **self.model_dump())


class ProxyBlock(BaseModel):
    """Check-model network and the second-level divisions of the sweep."""

    check_spec: Optional[NetworkBlock] = None
    second_level_divisions: List[int] = Field(default_factory=lambda: [1], min_length=1)
    early_stop_every: int = Field(default=1, ge=1)

    model_config = ConfigDict(extra="forbid")


class OutputBlock(BaseModel):
    directory: str = Field(default="results", min_length=1)
    emit_plots: bool = True

    model_config = ConfigDict(extra="forbid")


class ExperimentConfig(BaseModel):
    """A complete experiment: every block has defaults, so ``{}`` is valid."""

    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    model: ModelBlock = Field(default_factory=ModelBlock)
    train: TrainBlock = Field(default_factory=TrainBlock)
    proxy: ProxyBlock = Field(default_factory=ProxyBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_divisions(self) -> "ExperimentConfig":
        """Every division must leave at least one predictor layer."""
        last = self.model.total_layers - 1
        for d in [self.model.division_index, *(self.model.candidate_divisions or [])]:
            if not 1 <= d <= last:
                raise ValueError(f"division {d} invalid for a {self.model.total_layers}-layer model")
        check = self.check_network
        for d in [check.division_index, *self.proxy.second_level_divisions]:
            if not 1 <= d <= check.total_layers - 1:
                raise ValueError(f"second-level division {d} invalid for a {check.total_layers}-layer check model")
        return self

    @property
    def check_network(self) -> NetworkBlock:
        return self.proxy.check_spec or self.model

    @property
    def task(self) -> str:
        return self.dataset.task_name

    @property
    def candidate_divisions(self) -> List[int]:
        return self.model.candidate_divisions or list(range(1, self.model.total_layers))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy whose seed list is just ``seed`` (the --seed override)."""
        return self.model_copy(update={"model": self.model.model_copy(update={"seeds": [seed]})})

    def with_output(self, directory: Union[str, Path]) -> "ExperimentConfig":
        return self.model_copy(update={"output": self.output.model_copy(update={"directory": str(directory)})})

    def build_pair(self, seed: int) -> ShiftPair:
        return self.dataset.build_pair(seed, self.train.val_fraction)

    def model_spec(self, input_dim: int, num_classes: int) -> MlpSpec:
        return self.model.to_spec(input_dim, num_classes)

    def check_spec(self, input_dim: int, num_classes: int) -> MlpSpec:
        return self.check_network.to_spec(input_dim, num_classes)

    def dir_config(self, seed: int) -> DirConfig:
        return self.train.to_dir_config(seed)


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    if first["type"] == "extra_forbidden":
        return f"{CONFIG_UNKNOWN_KEY} '{where}'"
    return f"{where or 'config'}: {first['msg']}"


def parse_config(data: dict) -> ExperimentConfig:
    """
    Validate an already-parsed config mapping.

    Raises:
        ConfigurationError: naming the first offending key

    Examples:
        >>> parse_config({"model": {"seeds": [7]}}).model.seeds
        [7]
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(_describe(e)) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a JSON experiment file.

    Raises:
        FileNotFoundError: if the file does not exist
        ConfigurationError: on malformed JSON, unknown keys or invalid values
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: line {e.lineno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return parse_config(data)
