"""
Entry operations used by the CLI and the tool server: dataset resolution,
train, predict (sample) and evaluate.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import EmptySplitError, ShapeError
from ..core.models import DatasetManifest, MetricReport, RunConfig
from ..data import (
    SpatialSample,
    generate,
    iter_batches,
    read_dataset,
    split_samples,
)
from ..data.batch import Batch
from ..diffusion import DiffusionSchedule, sample
from ..evaluate import gec_distance, gene_correlation, pcc, rmse, write_heatmaps
from ..imputation import merge_rows
from ..nets import EmbeddingSet, EnhancerModel, build_condition, encode
from ..tensor import Tensor, no_grad
from .config_io import save_run_config
from .trainer import CHECKPOINT_NAME, DataContext, Trainer, TrainResult, restore_state

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# keeps sampler streams apart from the (seed, index) streams of the generator
SAMPLER_STREAM = 7919


@dataclass
class RunData:
    manifest: Optional[DatasetManifest]
    train: List[SpatialSample]
    val: List[SpatialSample]
    context: DataContext


def data_context(samples: Sequence[SpatialSample], manifest: Optional[DatasetManifest], fallback_scale: int) -> DataContext:
    if not samples:
        raise ShapeError("dataset holds no samples")
    first = samples[0]
    if manifest is not None:
        scale, panel = manifest.scale, manifest.gene_panel_size
    else:
        scales = [s.scale() for s in samples if s.has_lr]
        scale = scales[0] if scales else fallback_scale
        panel = max(max(s.gene_ids) for s in samples) + 1
    return DataContext(genes=first.genes, panel_size=panel, scale=int(scale), hr_shape=first.spatial_shape)


def resolve_data(config: RunConfig, dataset_path: Optional[PathLike] = None) -> RunData:
    """Load the configured dataset file, or generate one from [dataset]."""
    path = dataset_path or config.dataset_path
    if path:
        manifest, samples = read_dataset(path)
        logger.info(f"Loaded {len(samples)} samples from {path}")
    else:
        manifest = config.dataset
        samples = generate(manifest)
    train, val = split_samples(samples, config.val_fraction)
    return RunData(manifest, train, val, data_context(samples, manifest, config.dataset.scale))


def train(
    config: RunConfig,
    data: Optional[RunData] = None,
    resume_from: Optional[PathLike] = None,
    until_step: Optional[int] = None,
) -> TrainResult:
    """Train (or resume) a run and write its config, losses and checkpoint to output_dir."""
    data = data or resolve_data(config)
    state = None
    if resume_from is not None:
        _, _, state = restore_state(Path(resume_from), config)
        logger.info(f"Resuming from {resume_from} at step {state.step}")
    save_run_config(config, Path(config.output_dir) / "config.toml")
    trainer = Trainer(config, data.train, data.context, data.val, state=state)
    return trainer.run(until_step)


def load_model(checkpoint: PathLike) -> Tuple[RunConfig, DataContext, EnhancerModel]:
    config, context, state = restore_state(Path(checkpoint))
    return config, context, state.model


def inference_inputs(
    checkpoint: PathLike, dataset_path: Optional[PathLike] = None, seed: Optional[int] = None
) -> Tuple[RunConfig, DataContext, EnhancerModel, List[SpatialSample]]:
    """Model and samples for sampling or scoring; without a dataset file, the run's validation split."""
    config, context, model = load_model(checkpoint)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    if dataset_path:
        _, samples = read_dataset(dataset_path)
    else:
        samples = resolve_data(config).val
    return config, context, model, samples


def untrained_model(config: RunConfig, context: DataContext) -> EnhancerModel:
    return EnhancerModel(config, context.genes, context.panel_size)


def predict(
    model: EnhancerModel,
    batch: Batch,
    schedule: DiffusionSchedule,
    omega: float,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample HR maps for a batch. Samples without LR ST get zero ST embedding
    rows and zero y planes (the fully decayed imputation regime).
    """
    d = model.encoders.config.feature_dim
    with no_grad():
        raw = encode(model.encoders, batch.histology, batch.lr_st, batch.present)
        zeros = Tensor(np.zeros((len(batch) - batch.present_count, d)))
        embeddings = EmbeddingSet(
            M_h=raw.M_h,
            C_h=raw.C_h,
            M_y_hat=merge_rows(raw.M_y, zeros, batch.present),
            C_y_hat=merge_rows(raw.C_y, zeros, batch.present),
            present_mask=batch.present,
        )
        bundle = build_condition(
            model.encoders, embeddings, batch.lr_st, batch.gene_ids, batch.hr_st.shape[2:]
        )
    return sample(model.denoiser, bundle, schedule, omega, steps, rng)


def derange_histology(samples: Sequence[SpatialSample]) -> List[SpatialSample]:
    """Give every sample the histology of its successor (a fixed derangement)."""
    if len(samples) < 2:
        logger.warning("Histology shuffle needs at least two samples; leaving order unchanged")
        return list(samples)
    shifted = [samples[(i + 1) % len(samples)].histology for i in range(len(samples))]
    return [s.model_copy(update={"histology": h}) for s, h in zip(samples, shifted)]


@dataclass
class Prediction:
    sample_ids: List[str]
    gene_ids: List[int]
    predicted: np.ndarray
    truth: np.ndarray


def predict_samples(
    model: EnhancerModel,
    config: RunConfig,
    context: DataContext,
    samples: Sequence[SpatialSample],
    omega: Optional[float] = None,
    steps: Optional[int] = None,
    no_lr_st: bool = False,
    shuffle_histology: bool = False,
) -> Prediction:
    evaluation = config.evaluation
    if evaluation.max_samples is not None:
        samples = samples[: evaluation.max_samples]
    if not samples:
        raise EmptySplitError(
            "No samples to evaluate. An empty validation split means val_fraction = 0; "
            "pass a dataset file or raise val_fraction."
        )
    if shuffle_histology:
        samples = derange_histology(samples)
    schedule = DiffusionSchedule.from_config(config.diffusion)
    omega = config.guidance.omega if omega is None else omega
    steps = evaluation.sample_steps if steps is None else steps

    predicted, truth, ids = [], [], []
    for index, batch in enumerate(iter_batches(samples, evaluation.batch_size, context.scale)):
        if no_lr_st or evaluation.no_lr_st:
            batch = batch.without_lr()
        rng = np.random.default_rng([config.seed, SAMPLER_STREAM, index])
        predicted.append(predict(model, batch, schedule, omega, steps, rng))
        truth.append(batch.hr_st)
        ids.extend(batch.sample_ids)
    return Prediction(ids, list(samples[0].gene_ids), np.concatenate(predicted), np.concatenate(truth))


def evaluate(
    model: EnhancerModel,
    config: RunConfig,
    context: DataContext,
    samples: Sequence[SpatialSample],
    label: str = "baseline",
    omega: Optional[float] = None,
    steps: Optional[int] = None,
    no_lr_st: bool = False,
    shuffle_histology: bool = False,
    heatmaps_dir: Optional[PathLike] = None,
) -> MetricReport:
    """Sample every record and score it against the HR ground truth."""
    result = predict_samples(model, config, context, samples, omega, steps, no_lr_st, shuffle_histology)
    distance = gec_distance(
        gene_correlation(result.predicted, result.gene_ids),
        gene_correlation(result.truth, result.gene_ids),
    )
    if heatmaps_dir is not None:
        write_heatmaps(result.predicted, result.truth, result.sample_ids, result.gene_ids, heatmaps_dir)
    report = MetricReport(
        label=label,
        fingerprint=config.fingerprint(),
        sample_count=len(result.sample_ids),
        gene_ids=result.gene_ids,
        rmse=rmse(result.predicted, result.truth),
        pcc=pcc(result.predicted, result.truth),
        gec_distance=distance,
        no_lr_st=no_lr_st or config.evaluation.no_lr_st,
    )
    logger.info(
        f"Evaluated '{label}' on {report.sample_count} samples: "
        f"RMSE {report.mean_rmse:.4f}, PCC {report.mean_pcc}"
    )
    return report


def final_checkpoint(config: RunConfig) -> Path:
    return Path(config.output_dir) / CHECKPOINT_NAME


def with_predicted_maps(samples: Sequence[SpatialSample], prediction: Prediction) -> List[SpatialSample]:
    """Copies of the predicted samples whose HR maps are the sampled ones."""
    by_id = {s.sample_id: s for s in samples}
    return [
        by_id[sample_id].model_copy(update={"hr_st": maps})
        for sample_id, maps in zip(prediction.sample_ids, prediction.predicted)
    ]
