"""
Training loop: batch assembly, encoding, augmentation, imputation, the
combined contrastive + diffusion objective and periodic checkpoints.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..contrastive import alignment_uniformity, loss_content, loss_inter_sphere, loss_modal
from ..core.errors import InvariantViolationError, NonFiniteLossError
from ..core.models import ImputationMode, LossReport, RunConfig
from ..core.storage import load_checkpoint, save_checkpoint
from ..data.batch import Batch, collate, draw_batch
from ..data.sample import SpatialSample
from ..diffusion import DiffusionSchedule, mse_step, noise_streams
from ..evaluate.reports import LossLog
from ..imputation import decay, impute_rows, merge_rows
from ..nets import EmbeddingSet, EnhancerModel, augment, build_condition, encode
from ..tensor import Adam, Tensor, no_grad, take_rows

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-5
CHECKPOINT_NAME = "checkpoint.c3ck"


@dataclass
class TrainState:
    """Everything needed to continue training bit-exactly."""

    step: int
    model: EnhancerModel
    optimizer: Adam
    rng: np.random.Generator
    alpha: float
    beta: float

    def tensors(self) -> Dict[str, np.ndarray]:
        return {**self.model.state_dict(), **self.optimizer.state_dict()}


@dataclass
class TrainResult:
    state: TrainState
    losses: List[LossReport] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None


@dataclass
class DataContext:
    """Geometry shared by every batch of a run."""

    genes: int
    panel_size: int
    scale: int
    hr_shape: Tuple[int, int]


def _check_finite(named: Sequence[Tuple[str, Optional[Tensor]]], step: int) -> None:
    for name, value in named:
        if value is not None and not np.all(np.isfinite(value.data)):
            raise NonFiniteLossError(name, step)


def _check_unit_norm(named: Sequence[Tuple[str, Optional[Tensor]]]) -> None:
    for name, value in named:
        if value is None:
            continue
        norms = np.linalg.norm(value.data.astype(np.float64), axis=1)
        worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
        if worst > UNIT_NORM_TOLERANCE:
            raise InvariantViolationError(f"{name} rows leave the unit sphere (deviation {worst:.2e})")


class Trainer:
    """Owns one run's model, optimizer and data, and advances it step by step."""

    def __init__(
        self,
        config: RunConfig,
        train_samples: Sequence[SpatialSample],
        context: DataContext,
        val_samples: Sequence[SpatialSample] = (),
        state: Optional[TrainState] = None,
    ):
        self.config = config
        self.train_samples = list(train_samples)
        self.val_samples = list(val_samples)
        self.context = context
        self.schedule = DiffusionSchedule.from_config(config.diffusion)
        self.fingerprint = config.fingerprint()
        self.output_dir = Path(config.output_dir)
        self.loss_log = LossLog(self.output_dir / "losses.jsonl", self.fingerprint)
        self.state = state or self._fresh_state()

    def _fresh_state(self) -> TrainState:
        model = EnhancerModel(self.config, self.context.genes, self.context.panel_size)
        opt = self.config.optimizer
        optimizer = Adam(list(model.named_parameters()), opt.lr, opt.beta1, opt.beta2, opt.eps)
        alpha, beta = decay(self.config.impute, 0, opt.steps)
        return TrainState(0, model, optimizer, np.random.default_rng(self.config.seed), alpha, beta)

    # one step ------------------------------------------------------------------

    def _embeddings(self, batch: Batch, step: int) -> Tuple[EmbeddingSet, Dict[str, Optional[Tensor]]]:
        cfg = self.config
        bank = self.state.model.encoders
        raw = encode(bank, batch.histology, batch.lr_st, batch.present)
        _check_unit_norm([("M_h", raw.M_h), ("C_h", raw.C_h), ("M_y", raw.M_y), ("C_y", raw.C_y)])
        _check_finite([("M_h", raw.M_h), ("C_h", raw.C_h), ("M_y", raw.M_y), ("C_y", raw.C_y)], step)

        M_y_hat, C_y_hat = raw.M_y, raw.C_y
        if M_y_hat is not None and C_y_hat is not None and cfg.ablation.augmentation:
            M_y_hat, C_y_hat = augment(M_y_hat, C_y_hat, cfg.contrastive.sigma, self.state.rng)

        alpha, beta = self.state.alpha, self.state.beta
        mode = cfg.ablation.imputation_mode
        d = cfg.encoder.feature_dim
        missing = len(batch) - batch.present_count
        if missing and batch.present_count == 0 and mode != ImputationMode.ZERO_PADDING and (alpha > 0 or beta > 0):
            logger.warning(f"Step {step}: no sample with LR ST in the batch, imputing zero rows")
            alpha = beta = 0.0
        empty = Tensor(np.zeros((0, d)))
        imputed = impute_rows(
            raw.M_h,
            raw.C_h,
            M_y_hat if M_y_hat is not None else empty,
            C_y_hat if C_y_hat is not None else empty,
            batch.present,
            alpha,
            beta,
            cfg.impute.tau1,
            mode,
        )
        embeddings = EmbeddingSet(
            M_h=raw.M_h,
            C_h=raw.C_h,
            M_y_hat=merge_rows(M_y_hat, imputed.M_tilde, batch.present),
            C_y_hat=merge_rows(C_y_hat, imputed.C_tilde, batch.present),
            present_mask=batch.present.copy(),
        )
        genuine = {"M_y_hat": M_y_hat, "C_y_hat": C_y_hat}
        return embeddings, genuine

    def _contrastive(
        self, embeddings: EmbeddingSet, genuine: Dict[str, Optional[Tensor]], step: int
    ) -> Dict[str, Tensor]:
        cfg = self.config
        switches = cfg.ablation
        weights = cfg.contrastive
        tau = self.state.model.tau()
        rows = np.flatnonzero(embeddings.present_mask)
        terms: Dict[str, Tensor] = {}

        wants_pairs = (switches.modal and weights.lambda_modal > 0) or (
            switches.content and weights.lambda_content > 0
        )
        if wants_pairs and rows.size < 2:
            logger.warning(f"Step {step}: {rows.size} genuine pairs, skipping L_modal and L_content")
        elif wants_pairs:
            M_y_hat, C_y_hat = genuine["M_y_hat"], genuine["C_y_hat"]
            assert M_y_hat is not None and C_y_hat is not None
            if switches.modal and weights.lambda_modal > 0:
                terms["modal"] = loss_modal(take_rows(embeddings.M_h, rows), M_y_hat, tau)
            if switches.content and weights.lambda_content > 0:
                terms["content"] = loss_content(take_rows(embeddings.C_h, rows), C_y_hat, tau)

        if switches.inter_sphere and weights.lambda_inter > 0:
            if len(embeddings) < 2:
                logger.warning(f"Step {step}: batch of one, skipping L_inter-sphere")
            else:
                terms["inter_sphere"] = loss_inter_sphere(embeddings.M_h, embeddings.C_h, tau)
        return terms

    def compute_loss(self, batch: Batch, step: int) -> Tuple[Tensor, LossReport]:
        """Total loss and its report for one batch at the given step."""
        cfg = self.config
        model = self.state.model
        embeddings, genuine = self._embeddings(batch, step)
        terms = self._contrastive(embeddings, genuine, step)

        bundle = build_condition(
            model.encoders, embeddings, batch.lr_st, batch.gene_ids, self.context.hr_shape
        )
        streams = noise_streams(batch.sample_ids, cfg.seed, step)
        l_mse = mse_step(model.denoiser, batch.hr_st, bundle, self.schedule, streams, cfg.guidance.drop_prob)

        lambdas = {
            "modal": cfg.contrastive.lambda_modal,
            "content": cfg.contrastive.lambda_content,
            "inter_sphere": cfg.contrastive.lambda_inter,
        }
        total = l_mse
        for name, value in terms.items():
            total = total + value.scale(lambdas[name])

        _check_finite(
            [("M_y_hat", embeddings.M_y_hat), ("C_y_hat", embeddings.C_y_hat), ("condition", bundle.planes)]
            + [(f"L_{name}", value) for name, value in terms.items()]
            + [("L_mse", l_mse), ("total", total)],
            step,
        )
        report = LossReport(
            step=step,
            total=total.item(),
            mse=l_mse.item(),
            modal=terms["modal"].item() if "modal" in terms else None,
            content=terms["content"].item() if "content" in terms else None,
            inter_sphere=terms["inter_sphere"].item() if "inter_sphere" in terms else None,
            tau=float(model.tau().item()),
            alpha=self.state.alpha,
            beta=self.state.beta,
            present=batch.present_count,
        )
        return total, report

    def step(self) -> Optional[LossReport]:
        """Advance one optimisation step; None when the batch had to be skipped."""
        state = self.state
        cfg = self.config
        state.alpha, state.beta = decay(cfg.impute, state.step, cfg.optimizer.steps)
        batch = draw_batch(self.train_samples, cfg.optimizer.batch_size, self.context.scale, state.rng)
        if cfg.ablation.imputation_mode == ImputationMode.DROPOUT:
            batch = batch.select(np.flatnonzero(batch.present))
            if len(batch) == 0:
                logger.warning(f"Step {state.step}: every sample lacks LR ST, batch dropped")
                state.step += 1
                return None

        total, report = self.compute_loss(batch, state.step)
        state.optimizer.zero_grad()
        total.backward()
        state.optimizer.step()
        state.step += 1
        return report

    # loop, checkpoints and diagnostics ----------------------------------------

    def run(self, until_step: Optional[int] = None) -> TrainResult:
        cfg = self.config
        target = cfg.optimizer.steps if until_step is None else until_step
        if self.state.step == 0:
            self.loss_log.reset()
        result = TrainResult(self.state)
        logger.info(
            f"Training run {self.fingerprint} from step {self.state.step} to {target} "
            f"({len(self.train_samples)} training samples, mode {cfg.ablation.imputation_mode.value})"
        )
        while self.state.step < target:
            report = self.step()
            if report is not None:
                result.losses.append(report)
                self.loss_log.append(report)
                if report.step % cfg.optimizer.log_every == 0:
                    logger.info(
                        f"step {report.step}: total={report.total:.4f} mse={report.mse:.4f} "
                        f"tau={report.tau:.4f} alpha={report.alpha:.3f}"
                    )
            every = cfg.optimizer.checkpoint_every
            if every and self.state.step % every == 0 and self.state.step < target:
                self.save(self.output_dir / f"checkpoint_{self.state.step:06d}.c3ck")
                self.log_diagnostics()
        result.checkpoint_path = self.save(self.output_dir / CHECKPOINT_NAME)
        return result

    def metadata(self) -> Dict[str, Any]:
        state = self.state
        return {
            "config": self.config.model_dump(mode="json"),
            "fingerprint": self.fingerprint,
            "step": state.step,
            "rng_state": state.rng.bit_generator.state,
            "adam_t": state.optimizer.t,
            "alpha": state.alpha,
            "beta": state.beta,
            "genes": self.context.genes,
            "panel_size": self.context.panel_size,
            "scale": self.context.scale,
            "hr_shape": list(self.context.hr_shape),
        }

    def save(self, path: Path) -> Path:
        save_checkpoint(path, self.state.tensors(), self.metadata())
        return path

    def log_diagnostics(self) -> Optional[Dict[str, float]]:
        """Alignment / uniformity of the genuine validation pairs."""
        with_lr = [s for s in self.val_samples if s.has_lr]
        if len(with_lr) < 2:
            return None
        batch = collate(with_lr[: self.config.evaluation.batch_size], self.context.scale)
        with no_grad():
            raw = encode(self.state.model.encoders, batch.histology, batch.lr_st, batch.present)
        assert raw.M_y is not None and raw.C_y is not None
        content_align, content_uniform = alignment_uniformity(raw.C_h, raw.C_y)
        modal_align, modal_uniform = alignment_uniformity(raw.M_h, raw.M_y)
        values = {
            "content_align": content_align,
            "content_uniform": content_uniform,
            "modal_align": modal_align,
            "modal_uniform": modal_uniform,
        }
        logger.info(
            f"step {self.state.step} diagnostics: "
            + ", ".join(f"{k}={v:.4f}" for k, v in values.items())
        )
        return values


def restore_state(
    path: Path, config: Optional[RunConfig] = None
) -> Tuple[RunConfig, DataContext, TrainState]:
    """Rebuild config, data geometry and TrainState from a checkpoint."""
    tensors, meta = load_checkpoint(path)
    config = config or RunConfig.model_validate(meta["config"])
    context = DataContext(
        genes=int(meta["genes"]),
        panel_size=int(meta["panel_size"]),
        scale=int(meta["scale"]),
        hr_shape=(int(meta["hr_shape"][0]), int(meta["hr_shape"][1])),
    )
    model = EnhancerModel(config, context.genes, context.panel_size)
    model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("adam.")})
    opt = config.optimizer
    optimizer = Adam(list(model.named_parameters()), opt.lr, opt.beta1, opt.beta2, opt.eps)
    optimizer.load_state_dict(tensors, int(meta["adam_t"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    state = TrainState(int(meta["step"]), model, optimizer, rng, float(meta["alpha"]), float(meta["beta"]))
    return config, context, state
