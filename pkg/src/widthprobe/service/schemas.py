"""Request/response models for the service API."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from ..training import TrainSchedule


class HealthResponse(BaseModel):
    status: str
    version: str


class DatasetModel(BaseModel):
    """Where a dataset lives on the server and how to prepare it.

    Paths are resolved on the machine running the service; nothing is
    ever downloaded.
    """

    kind: Literal["idx", "csv"]
    # idx pair (classification)
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    downscale_8x8: bool = False
    # csv (regression)
    path: Optional[str] = None
    target_columns: List[str] = Field(default_factory=list)
    standardize: bool = False
    delimiter: Optional[str] = None
    # shared: carve a held-out test split from the training file
    test_fraction: Optional[float] = None
    split_seed: int = 0

    @model_validator(mode="after")
    def _check_kind_fields(self):
        if self.kind == "idx":
            if not self.images or not self.labels:
                raise ValueError("idx datasets need 'images' and 'labels' paths")
            if bool(self.test_images) != bool(self.test_labels):
                raise ValueError(
                    "'test_images' and 'test_labels' must be given together"
                )
        else:
            if not self.path:
                raise ValueError("csv datasets need a 'path'")
            if not self.target_columns:
                raise ValueError("csv datasets need 'target_columns'")
        return self

    def file_paths(self):
        return [
            p
            for p in (self.images, self.labels, self.test_images,
                      self.test_labels, self.path)
            if p
        ]


class ScheduleModel(BaseModel):
    learning_rates: List[float] = Field(default_factory=lambda: [1e-3])
    patience: int = 3
    max_epochs: int = 1000
    batch_size: int = 32
    loss: Literal["cross_entropy", "mse"] = "cross_entropy"
    min_delta: float = 0.0

    def to_schedule(self):
        return TrainSchedule(
            learning_rates=tuple(self.learning_rates),
            patience=self.patience,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            loss=self.loss,
            min_delta=self.min_delta,
        )

    @classmethod
    def from_schedule(cls, schedule):
        return cls(**schedule.to_dict())


class RunRequest(BaseModel):
    """One pipeline invocation.

    ``layers`` and ``widths`` address hidden fully connected layers by
    their 1-based position in forward order (layer 1 is the hidden
    layer closest to the input).
    """

    command: Literal["train", "estimate", "verify"]
    dataset: DatasetModel
    formula: str
    folds: int = 2
    metric: Optional[Literal["accuracy", "mse"]] = None
    seed: int = 0
    bootstrap_n: int = 10000
    layers: List[int] = Field(default_factory=list)
    jobs: int = 1
    sweep_points: int = 8
    schedule: Optional[ScheduleModel] = None
    widths: Optional[List[int]] = None
    verify_schedule: Optional[ScheduleModel] = None

    @model_validator(mode="after")
    def _check_command_fields(self):
        if self.command == "verify" and not self.widths:
            raise ValueError("verify runs need 'widths'")
        return self


class RunCreated(BaseModel):
    run_id: str
    status_url: str


class RunStatus(BaseModel):
    run_id: str
    command: str
    state: Literal["queued", "running", "done", "error"]
    error: Optional[str] = None
    created_unix: float
    finished_unix: Optional[float] = None
    has_report: bool = False
    has_sweep: bool = False
    network_count: int = 0


class FormulaParseRequest(BaseModel):
    formula: str


class LayerModel(BaseModel):
    kind: str
    units: Optional[int] = None
    activation: Optional[str] = None


class FormulaParseResponse(BaseModel):
    layers: List[LayerModel]
    rendered: str
    hidden_layer_indices: List[int]


class RenderRequest(BaseModel):
    report: Dict
