import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional, TypeVar

from fastmcp import FastMCP

from ..core.config import runs_path, settings
from ..core.errors import StEnhanceError
from ..core.models import AblationSummary, ReportFormat
from ..core.storage import load_checkpoint
from ..data import generate, parse_manifest, save_dataset
from ..evaluate import emit_report
from ..harness import (
    evaluate,
    inference_inputs,
    load_run_config,
    predict_samples,
    sweep,
    train,
    with_predicted_maps,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


def _optional(value: str, cast: Callable[[str], T], name: str) -> Optional[T]:
    """Convert an optional string argument; empty means "use the default"."""
    if value is None or str(value).strip() == "":
        return None
    try:
        return cast(str(value).strip())
    except (ValueError, TypeError):
        raise ValueError(f"Invalid {name} format: '{value}'. Expected a valid {cast.__name__}.")


class ExperimentTools:
    """Dataset, training, sampling, evaluation and ablation tools for the MCP server."""

    @staticmethod
    def register_tools(mcp: FastMCP) -> None:  # type: ignore[type-arg]
        """Register all experiment tools with the MCP server."""

        @mcp.tool()
        def generate_dataset(  # type: ignore[misc]
            name: str,
            n_samples: str = "256",
            height: str = "40",
            width: str = "40",
            genes: str = "4",
            scale: str = "5",
            missing_fraction: str = "0.25",
            seed: str = "0",
        ) -> Dict[str, Any]:
            """
            Generate a synthetic paired histology / spatial transcriptomics dataset.

            Args:
                name: Run name; the file is written to <runs_dir>/<name>/dataset.c3df
                n_samples: Number of samples
                height: HR map height (must be divisible by scale)
                width: HR map width (must be divisible by scale)
                genes: Genes per sample
                scale: Enlargement factor between LR and HR maps (5 or 10 are typical)
                missing_fraction: Fraction of samples without an LR ST map, in [0, 1]
                seed: Generator seed

            Returns:
                Operation result with the dataset path and sample counts
            """
            try:
                params = {
                    "n_samples": _optional(n_samples, int, "n_samples"),
                    "height": _optional(height, int, "height"),
                    "width": _optional(width, int, "width"),
                    "genes": _optional(genes, int, "genes"),
                    "scale": _optional(scale, int, "scale"),
                    "missing_fraction": _optional(missing_fraction, float, "missing_fraction"),
                    "seed": _optional(seed, int, "seed"),
                }
                manifest = parse_manifest(**{k: v for k, v in params.items() if v is not None})
                samples = generate(manifest, workers=settings.data_workers)
                path = runs_path(name) / "dataset.c3df"
                size = save_dataset(samples, path, manifest)
                return {
                    "success": True,
                    "message": f"Dataset '{name}' generated",
                    "data": {
                        "path": str(path),
                        "bytes": size,
                        "samples": len(samples),
                        "with_lr_st": sum(1 for s in samples if s.has_lr),
                    },
                }
            except ValueError as e:
                return {"success": False, "error": str(e)}
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error generating dataset '{name}': {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error generating dataset '{name}': {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

        @mcp.tool()
        def train_model(  # type: ignore[misc]
            config_path: str,
            run_name: str = "",
            steps: str = "",
            seed: str = "",
            resume_from: str = "",
        ) -> Dict[str, Any]:
            """
            Train (or resume) a run described by a TOML run config.

            Args:
                config_path: Path to the run config
                run_name: Optional run name; output goes to <runs_dir>/<run_name>
                steps: Optional override of [optimizer] steps
                seed: Optional override of [run] seed
                resume_from: Optional checkpoint to resume from

            Returns:
                Operation result with the checkpoint path and the last loss report
            """
            try:
                config = load_run_config(config_path)
                update: Dict[str, Any] = {}
                step_count = _optional(steps, int, "steps")
                if step_count is not None:
                    if step_count < 0:
                        return {"success": False, "error": "Steps must be non-negative"}
                    update["optimizer"] = config.optimizer.model_copy(update={"steps": step_count})
                run_seed = _optional(seed, int, "seed")
                if run_seed is not None:
                    update["seed"] = run_seed
                if run_name:
                    update["output_dir"] = str(runs_path(run_name))
                config = config.model_copy(update=update)

                result = train(config, resume_from=resume_from or None)
                last = result.losses[-1].to_record() if result.losses else None
                return {
                    "success": True,
                    "message": f"Training finished at step {result.state.step}",
                    "data": {
                        "checkpoint": str(result.checkpoint_path),
                        "fingerprint": config.fingerprint(),
                        "steps_run": len(result.losses),
                        "last_loss": last,
                    },
                }
            except ValueError as e:
                return {"success": False, "error": str(e)}
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error training from {config_path}: {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error training from {config_path}: {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

        @mcp.tool()
        def sample_maps(  # type: ignore[misc]
            checkpoint: str,
            out: str,
            dataset: str = "",
            omega: str = "",
            steps: str = "",
            seed: str = "",
            no_lr_st: bool = False,
        ) -> Dict[str, Any]:
            """
            Sample HR expression maps with a trained checkpoint.

            Args:
                checkpoint: Trained checkpoint (.c3ck)
                out: Output .c3df file; predicted maps replace the HR maps
                dataset: Dataset file (default: the run's validation split)
                omega: Guidance weight (default from the run config)
                steps: Sampler steps (default from the run config)
                seed: Sampler seed (default: the run seed)
                no_lr_st: Zero the LR ST input at test time

            Returns:
                Operation result with the output path
            """
            try:
                config, context, model, samples = inference_inputs(
                    checkpoint, dataset, _optional(seed, int, "seed")
                )
                result = predict_samples(
                    model,
                    config,
                    context,
                    samples,
                    _optional(omega, float, "omega"),
                    _optional(steps, int, "steps"),
                    no_lr_st,
                )
                predicted = with_predicted_maps(samples, result)
                save_dataset(predicted, out)
                return {
                    "success": True,
                    "message": f"Sampled {len(predicted)} samples",
                    "data": {"path": out, "samples": len(predicted), "no_lr_st": no_lr_st},
                }
            except ValueError as e:
                return {"success": False, "error": str(e)}
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error sampling with {checkpoint}: {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error sampling with {checkpoint}: {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

        @mcp.tool()
        def evaluate_checkpoint(  # type: ignore[misc]
            checkpoint: str,
            dataset: str = "",
            out: str = "",
            report_format: str = "json",
            omega: str = "",
            steps: str = "",
            no_lr_st: bool = False,
            shuffle_histology: bool = False,
            heatmaps_dir: str = "",
        ) -> Dict[str, Any]:
            """
            Sample and score a checkpoint against the HR ground truth.

            Args:
                checkpoint: Trained checkpoint (.c3ck)
                dataset: Dataset file (default: the run's validation split)
                out: Optional report path
                report_format: Report format (json, csv)
                omega: Guidance weight (default from the run config)
                steps: Sampler steps (default from the run config)
                no_lr_st: Zero the LR ST input at test time
                shuffle_histology: Pair every sample with another sample's histology
                heatmaps_dir: Optional directory for PPM heatmaps

            Returns:
                Operation result with the metric report
            """
            try:
                try:
                    fmt = ReportFormat(report_format.lower())
                except ValueError:
                    valid = [f.value for f in ReportFormat]
                    return {
                        "success": False,
                        "error": f"Invalid report format '{report_format}'. Valid options: {', '.join(valid)}",
                    }
                config, context, model, samples = inference_inputs(checkpoint, dataset, None)
                report = evaluate(
                    model,
                    config,
                    context,
                    samples,
                    omega=_optional(omega, float, "omega"),
                    steps=_optional(steps, int, "steps"),
                    no_lr_st=no_lr_st,
                    shuffle_histology=shuffle_histology,
                    heatmaps_dir=heatmaps_dir or None,
                )
                if out:
                    emit_report(report, out, fmt)
                return {
                    "success": True,
                    "message": f"Evaluated {report.sample_count} samples",
                    "data": report.model_dump(mode="json"),
                }
            except ValueError as e:
                return {"success": False, "error": str(e)}
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error evaluating {checkpoint}: {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error evaluating {checkpoint}: {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

        @mcp.tool()
        def run_ablation(config_path: str, row: str = "") -> Dict[str, Any]:  # type: ignore[misc]
            """
            Train and evaluate an ablation row next to the baseline.

            Args:
                config_path: Baseline run config
                row: Ablation row (e.g. "w/o L_modal", "zero padding"); empty runs all eight rows

            Returns:
                Operation result with one summary line per evaluated row
            """
            try:
                config = load_run_config(config_path)
                reports = sweep(config, [row] if row else None)
                summary = AblationSummary.from_reports(reports)
                return {
                    "success": True,
                    "message": f"Ablation finished ({len(reports)} reports)",
                    "data": summary.model_dump(mode="json"),
                }
            except ValueError as e:
                return {"success": False, "error": str(e)}
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error running ablation from {config_path}: {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error running ablation from {config_path}: {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

        @mcp.tool()
        def describe_checkpoint(checkpoint: str) -> Dict[str, Any]:  # type: ignore[misc]
            """
            List the tensors and training metadata stored in a checkpoint.

            Args:
                checkpoint: Checkpoint path (.c3ck)

            Returns:
                Operation result with step, fingerprint and tensor shapes
            """
            try:
                arrays, meta = load_checkpoint(Path(checkpoint))
                tensors = {name: list(array.shape) for name, array in arrays.items()}
                return {
                    "success": True,
                    "message": f"Checkpoint at step {meta['step']}",
                    "data": {
                        "step": meta["step"],
                        "fingerprint": meta["fingerprint"],
                        "genes": meta["genes"],
                        "scale": meta["scale"],
                        "hr_shape": meta["hr_shape"],
                        "tensors": tensors,
                        "parameter_count": sum(
                            int(array.size) for name, array in arrays.items() if not name.startswith("adam.")
                        ),
                    },
                }
            except (StEnhanceError, OSError) as e:
                logger.error(f"Error reading checkpoint {checkpoint}: {e}")
                return {"success": False, "error": str(e)}
            except Exception as e:
                logger.error(f"Error reading checkpoint {checkpoint}: {e}")
                return {"success": False, "error": f"Internal error: {str(e)}"}

