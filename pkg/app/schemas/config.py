from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class FeatureMapKind(str, Enum):
    SINUSOIDAL = "sinusoidal"
    LINEAR = "linear"
    NONE = "none"


class ContractionScheme(str, Enum):
    PARALLEL = "parallel"
    SEQUENTIAL = "sequential"


class EarlyStoppingMetric(str, Enum):
    ACCURACY = "accuracy"
    AUC = "auc"


class SyntheticKind(str, Enum):
    BLOBS2D = "blobs2d"
    TEXTURE2D = "texture2d"
    BLOBS3D = "blobs3d"


class DataFormat(str, Enum):
    IDX = "idx"
    NATIVE = "native"
    SYNTHETIC = "synthetic"


class Precision(str, Enum):
    FLOAT64 = "float64"
    FLOAT32 = "float32"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class ModelConfig(StrictModel):
    """LoTeNet architecture. Defaults: L=4, k1=8 then 2, beta=nu=5, sinusoidal map."""

    layers: int = Field(default=4, ge=1)
    strides: Optional[list[int]] = None  # k_1..k_{L-1}; default [8, 2, 2, ...]
    bond_dim: int = Field(default=5, ge=1)
    virtual_dim: Optional[int] = Field(default=None, ge=1)  # nu; defaults to bond_dim
    feature_map: FeatureMapKind = FeatureMapKind.SINUSOIDAL
    n_classes: int = Field(default=2, ge=1)
    spatial_rank: Literal[2, 3] = 2
    input_shape: Optional[list[int]] = None  # spatial extents ++ [channels]
    share_weights_per_layer: bool = False
    batch_norm: bool = True
    pad_to_stride: bool = True
    init_std: float = Field(default=1e-2, ge=0.0)
    contraction: ContractionScheme = ContractionScheme.PARALLEL
    seed: int = 0

    @model_validator(mode="after")
    def fill_defaults(self) -> "ModelConfig":
        if self.strides is None:
            self.strides = [8] + [2] * (self.layers - 2) if self.layers > 1 else []
        if len(self.strides) != self.layers - 1:
            raise ValueError(f"strides must list {self.layers - 1} values for {self.layers} layers")
        if any(stride < 1 for stride in self.strides):
            raise ValueError("strides must be positive")
        if self.virtual_dim is None:
            self.virtual_dim = self.bond_dim
        if self.input_shape is not None:
            if len(self.input_shape) != self.spatial_rank + 1:
                raise ValueError(
                    f"input_shape needs {self.spatial_rank} spatial extents plus channels, got {self.input_shape}"
                )
            if any(extent < 1 for extent in self.input_shape):
                raise ValueError("input_shape extents must be positive")
        return self

    @property
    def out_dim(self) -> int:
        """Final block output size: one logit per class, a single logit for M=1."""
        return self.n_classes


class TrainingConfig(StrictModel):
    lr: float = Field(default=5e-4, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    batch_size: Optional[int] = Field(default=None, ge=1)  # 512 for 2D, 4 for 3D
    patience: int = Field(default=10, ge=0)
    max_epochs: int = Field(default=100, ge=1)
    metric: EarlyStoppingMetric = EarlyStoppingMetric.ACCURACY
    augment: bool = False
    precision: Precision = Precision.FLOAT64

    def resolve_batch_size(self, spatial_rank: int) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 512 if spatial_rank == 2 else 4


class SyntheticSpec(StrictModel):
    kind: SyntheticKind = SyntheticKind.BLOBS2D
    count: int = Field(default=2000, ge=2)
    size: int = Field(default=32, ge=1)
    seed: int = 7
    noise: float = Field(default=0.1, ge=0.0)


class DataConfig(StrictModel):
    format: DataFormat = DataFormat.SYNTHETIC
    # idx
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    # native
    path: Optional[str] = None
    test_path: Optional[str] = None
    # synthetic
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    # train/val/test, or train/val when a separate test source is given
    split: list[float] = Field(default_factory=lambda: [0.6, 0.2, 0.2])
    class_names: Optional[list[str]] = None

    @model_validator(mode="after")
    def check_sources(self) -> "DataConfig":
        if self.format is DataFormat.IDX and not (self.images and self.labels):
            raise ValueError("idx data needs both 'images' and 'labels'")
        if self.format is DataFormat.NATIVE and not self.path:
            raise ValueError("native data needs 'path'")
        if any(fraction < 0 for fraction in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        expected = 2 if self.has_test_source else 3
        if len(self.split) != expected:
            raise ValueError(f"split needs {expected} fractions for this data source, got {len(self.split)}")
        return self

    @property
    def has_test_source(self) -> bool:
        if self.format is DataFormat.IDX:
            return bool(self.test_images and self.test_labels)
        if self.format is DataFormat.NATIVE:
            return bool(self.test_path)
        return False


class RunConfig(StrictModel):
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    seed: int = 0
    output_dir: Optional[str] = None
