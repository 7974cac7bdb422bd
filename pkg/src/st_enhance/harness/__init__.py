from .ablation import ablate, ablation_config, parse_row, sweep
from .config_io import dump_run_config, load_run_config, parse_run_config, save_run_config
from .runner import (
    RunData,
    evaluate,
    final_checkpoint,
    inference_inputs,
    load_model,
    predict,
    predict_samples,
    resolve_data,
    train,
    untrained_model,
    with_predicted_maps,
)
from .trainer import DataContext, Trainer, TrainResult, TrainState, restore_state

__all__ = [
    "DataContext",
    "RunData",
    "Trainer",
    "TrainResult",
    "TrainState",
    "ablate",
    "ablation_config",
    "dump_run_config",
    "evaluate",
    "final_checkpoint",
    "inference_inputs",
    "load_model",
    "load_run_config",
    "parse_row",
    "parse_run_config",
    "predict",
    "predict_samples",
    "resolve_data",
    "restore_state",
    "save_run_config",
    "sweep",
    "train",
    "untrained_model",
    "with_predicted_maps",
]
