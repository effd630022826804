from typing import Optional

from pydantic import BaseModel, Field


class MetricsReport(BaseModel):
    split: str
    count: int
    loss: float
    accuracy: float = Field(ge=0.0, le=1.0)
    balanced_accuracy: float = Field(ge=0.0, le=1.0)
    auc: Optional[float] = Field(default=None, ge=0.0, le=1.0)  # None when a class is absent
    confusion: list[list[int]]  # confusion[true][predicted]


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_metric: float
    elapsed_seconds: float


class TrainingHistory(BaseModel):
    records: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("-inf")
    stopped_early: bool = False


class RunReport(BaseModel):
    best_epoch: int
    metric: str
    val: MetricsReport
    test: Optional[MetricsReport] = None


class LayerSummary(BaseModel):
    layer: int  # 1-based; the final block is layer L
    stride: Optional[int]
    grid: list[int]
    blocks: int
    sites_per_block: int
    site_dim: int
    feature_dim: int
    bond_dim: int
    out_dim: int
    parameters: int
    batch_norm_parameters: int


class ModelSummary(BaseModel):
    input_shape: list[int]
    padded_shape: list[int]
    layers: list[LayerSummary]
    total_parameters: int
    forward_cost_per_image: int


class Prediction(BaseModel):
    index: int
    label: int
    probability: float


class FoldResult(BaseModel):
    fold: int
    best_epoch: int
    test: MetricsReport


class CrossValidationReport(BaseModel):
    folds: list[FoldResult]
    metric: str = "balanced_accuracy"
    mean: float
    std: float
