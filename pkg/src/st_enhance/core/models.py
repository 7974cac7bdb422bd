import hashlib
import json
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_validator,
)


class ImputationMode(str, Enum):
    """How missing LR ST embeddings are filled during training."""
    DYNAMIC = "dynamic"
    DROPOUT = "dropout"
    ZERO_PADDING = "zero-padding"
    ARITHMETIC_AVERAGE = "arithmetic-average"


class ScheduleKind(str, Enum):
    COSINE = "cosine"
    LINEAR = "linear"


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class AblationRow(str, Enum):
    """Rows of the ablation grid; BASELINE is the full model."""
    BASELINE = "baseline"
    NO_AUGMENTATION = "w/o augmentation"
    NO_MODAL = "w/o L_modal"
    NO_CONTENT = "w/o L_content"
    NO_INTER_SPHERE = "w/o L_inter-sphere"
    DROPOUT = "dropout"
    ZERO_PADDING = "zero padding"
    ARITHMETIC_AVERAGE = "arithmetic average"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetManifest(_Section):
    """Parameters of a synthetic paired histology / ST dataset."""
    n_samples: int = Field(default=256, ge=1, description="Number of samples N")
    height: int = Field(default=40, ge=1, description="HR image height H")
    width: int = Field(default=40, ge=1, description="HR image width W")
    genes: int = Field(default=4, ge=1, description="Genes per sample G")
    scale: int = Field(default=5, ge=1, description="Enlargement scale s between LR and HR grids")
    missing_fraction: float = Field(
        default=0.25, ge=0.0, le=1.0, description="Probability that a sample has no LR ST map"
    )
    seed: int = Field(default=0, ge=0, description="Generator seed")
    regions: int = Field(default=3, ge=1, description="Latent tissue region fields")
    expression_noise: float = Field(default=0.05, ge=0.0, description="Std of independent expression noise")
    histology_noise: float = Field(default=0.05, ge=0.0, description="Std of histology texture noise")
    gene_panel_size: int = Field(default=200, ge=1, description="Size of the gene code vocabulary")

    @model_validator(mode="after")
    def _check_geometry(self) -> "DatasetManifest":
        if self.height % self.scale or self.width % self.scale:
            raise ValueError(
                f"scale {self.scale} must divide height {self.height} and width {self.width}"
            )
        if self.genes > self.gene_panel_size:
            raise ValueError("genes cannot exceed gene_panel_size")
        return self

    @property
    def lr_shape(self) -> Tuple[int, int, int]:
        return (self.genes, self.height // self.scale, self.width // self.scale)


class EncoderConfig(_Section):
    feature_dim: int = Field(default=64, ge=2, description="Embedding dimension D")
    widths: Tuple[int, int, int] = Field(default=(16, 32, 32), description="Conv block channel widths")
    gene_embedding_dim: int = Field(default=8, ge=1, description="Gene-code embedding size")
    condition_planes: int = Field(default=16, ge=1, description="Planes holding the fused D-vectors")
    init_seed: int = Field(default=0, ge=0, description="Parameter initialisation seed")

    @field_validator("widths")
    @classmethod
    def _positive_widths(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(w <= 0 for w in v):
            raise ValueError("all conv widths must be positive")
        return v


class ContrastiveConfig(_Section):
    tau_init: float = Field(default=0.07, gt=0.0, description="Initial temperature τ")
    learnable_tau: bool = Field(default=True, description="Optimise log τ with the other parameters")
    lambda_modal: float = Field(default=0.1, ge=0.0)
    lambda_content: float = Field(default=0.1, ge=0.0)
    lambda_inter: float = Field(default=0.1, ge=0.0)
    sigma: float = Field(default=0.05, ge=0.0, description="Std of hypersphere noise augmentation")


class ImputeConfig(_Section):
    tau1: float = Field(default=0.1, gt=0.0, description="Imputation softmax temperature τ₁")
    alpha0: float = Field(default=1.0, ge=0.0, le=1.0, description="Initial modality factor α")
    beta0: float = Field(default=1.0, ge=0.0, le=1.0, description="Initial content factor β")
    decay_fraction: float = Field(
        default=0.5, gt=0.0, le=1.0, description="Share of training over which α, β decay to 0"
    )
    decay_steps: Optional[int] = Field(
        default=None, ge=0, description="Explicit decay length; overrides decay_fraction"
    )

    def resolved_decay_steps(self, total_steps: int) -> int:
        if self.decay_steps is not None:
            return self.decay_steps
        return int(round(self.decay_fraction * total_steps))


class DiffusionConfig(_Section):
    timesteps: int = Field(default=200, ge=2, description="Number of diffusion steps T")
    kind: ScheduleKind = Field(default=ScheduleKind.COSINE)
    cosine_offset: float = Field(default=0.008, ge=0.0)
    beta_start: float = Field(default=1e-4, gt=0.0, lt=1.0)
    beta_end: float = Field(default=0.02, gt=0.0, lt=1.0)
    max_beta: float = Field(default=0.999, gt=0.0, lt=1.0)


class GuidanceConfig(_Section):
    omega: float = Field(default=1.0, description="Classifier-free guidance weight ω")
    drop_prob: float = Field(
        default=0.1, ge=0.0, le=1.0, description="Probability of training with the null condition"
    )


class DenoiserConfig(_Section):
    base_width: int = Field(default=32, ge=1)
    time_embedding_dim: int = Field(default=32, ge=2)


class OptimizerConfig(_Section):
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=8, ge=1)
    checkpoint_every: int = Field(default=500, ge=0, description="0 disables periodic checkpoints")
    log_every: int = Field(default=50, ge=1)


class AblationConfig(_Section):
    """Independent switches; True keeps the component."""
    augmentation: bool = True
    modal: bool = True
    content: bool = True
    inter_sphere: bool = True
    imputation_mode: ImputationMode = ImputationMode.DYNAMIC


class EvaluationConfig(_Section):
    sample_steps: int = Field(default=50, ge=1, description="Reverse steps used by the sampler")
    batch_size: int = Field(default=16, ge=1)
    max_samples: Optional[int] = Field(default=None, ge=1)
    no_lr_st: bool = Field(default=False, description="Replace LR ST by zero maps at test time")


class RunConfig(_Section):
    """Everything a training / evaluation run depends on."""
    seed: int = Field(default=0, ge=0, description="Global seed")
    output_dir: str = Field(default="runs/default", description="Where checkpoints and reports go")
    dataset_path: Optional[str] = Field(default=None, description="Existing dataset file")
    val_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    dataset: DatasetManifest = Field(default_factory=DatasetManifest)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    contrastive: ContrastiveConfig = Field(default_factory=ContrastiveConfig)
    impute: ImputeConfig = Field(default_factory=ImputeConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    def fingerprint(self) -> str:
        """Content hash of everything that influences results (not file locations)."""
        payload = self.model_dump(mode="json", exclude={"output_dir", "dataset_path"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class LossReport(BaseModel):
    """Losses of one training step. Disabled or skipped terms stay None."""
    step: int
    total: float
    mse: float
    modal: Optional[float] = None
    content: Optional[float] = None
    inter_sphere: Optional[float] = None
    tau: float
    alpha: float
    beta: float
    present: int = Field(..., description="Samples in the batch with an LR ST map")

    def to_record(self) -> Dict[str, Any]:
        return self.model_dump(exclude_none=True)


def _significant(value: float, digits: int = 6) -> float:
    return float(f"{value:.{digits}g}")


class MetricReport(BaseModel):
    """Per-gene RMSE / PCC of one evaluated model on one dataset split."""
    label: str = Field(default="baseline")
    fingerprint: str
    sample_count: int = Field(..., ge=0)
    gene_ids: List[int]
    rmse: List[float]
    pcc: List[Optional[float]]
    gec_distance: Optional[float] = None
    no_lr_st: bool = False

    @field_validator("rmse")
    @classmethod
    def _rmse_non_negative(cls, v: List[float]) -> List[float]:
        if any(x < 0 or not math.isfinite(x) for x in v):
            raise ValueError("RMSE values must be finite and non-negative")
        return [_significant(x) for x in v]

    @field_validator("pcc")
    @classmethod
    def _pcc_in_range(cls, v: List[Optional[float]]) -> List[Optional[float]]:
        cleaned: List[Optional[float]] = []
        for x in v:
            if x is None:
                cleaned.append(None)
                continue
            if not -1.0 - 1e-6 <= x <= 1.0 + 1e-6:
                raise ValueError(f"PCC {x} outside [-1, 1]")
            cleaned.append(_significant(min(1.0, max(-1.0, x))))
        return cleaned

    @field_validator("gec_distance")
    @classmethod
    def _round_gec(cls, v: Optional[float]) -> Optional[float]:
        return None if v is None else _significant(v)

    @model_validator(mode="after")
    def _aligned(self) -> "MetricReport":
        if not len(self.gene_ids) == len(self.rmse) == len(self.pcc):
            raise ValueError("gene_ids, rmse and pcc must have equal length")
        return self

    @computed_field  # type: ignore[misc]
    @property
    def mean_rmse(self) -> float:
        return _significant(float(np.mean(self.rmse))) if self.rmse else 0.0

    @computed_field  # type: ignore[misc]
    @property
    def mean_pcc(self) -> Optional[float]:
        defined = [x for x in self.pcc if x is not None]
        return _significant(float(np.mean(defined))) if defined else None


class GeneCorrelationMatrix(BaseModel):
    """Symmetric G×G Pearson matrix; rows of zero-variance genes are None."""
    gene_ids: List[int]
    matrix: List[List[Optional[float]]]
    absent: List[int] = Field(default_factory=list, description="Gene positions with zero variance")

    def as_array(self) -> np.ndarray:
        return np.array(
            [[np.nan if x is None else x for x in row] for row in self.matrix], dtype=np.float64
        )


class AblationSummaryRow(BaseModel):
    label: str
    mean_rmse: float
    mean_pcc: Optional[float] = None
    gec_distance: Optional[float] = None
    fingerprint: str


class AblationSummary(BaseModel):
    """One line per ablation row, for side-by-side comparison."""
    rows: List[AblationSummaryRow] = Field(default_factory=list)

    @classmethod
    def from_reports(cls, reports: List[MetricReport]) -> "AblationSummary":
        return cls(
            rows=[
                AblationSummaryRow(
                    label=r.label,
                    mean_rmse=r.mean_rmse,
                    mean_pcc=r.mean_pcc,
                    gec_distance=r.gec_distance,
                    fingerprint=r.fingerprint,
                )
                for r in reports
            ]
        )

    def row(self, label: str) -> AblationSummaryRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)
