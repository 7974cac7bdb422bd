import sys
import os
import logging
from pathlib import Path
from typing import Any, Dict

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from st_enhance.core.config import runs_path, settings
from st_enhance.core.models import RunConfig
from st_enhance.data import generate, parse_manifest, read_dataset, save_dataset
from st_enhance.harness import save_run_config

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


DEMO_RUN = "demo"

# small enough to train in a few minutes on a laptop CPU
DEMO_MANIFEST: Dict[str, Any] = {
    "n_samples": 64,
    "height": 20,
    "width": 20,
    "genes": 4,
    "scale": 5,
    "missing_fraction": 0.25,
    "seed": 0,
}

DEMO_OVERRIDES: Dict[str, Any] = {
    "encoder": {"feature_dim": 32, "widths": [8, 16, 16]},
    "diffusion": {"timesteps": 100},
    "denoiser": {"base_width": 16, "time_embedding_dim": 16},
    "optimizer": {"steps": 200, "checkpoint_every": 100, "log_every": 20},
    "evaluation": {"sample_steps": 25},
}


def create_demo_dataset(path: Path) -> None:
    if path.exists():
        logger.info(f"Dataset {path} already exists, skipping...")
        return
    manifest = parse_manifest(**DEMO_MANIFEST)
    samples = generate(manifest, workers=settings.data_workers)
    save_dataset(samples, path, manifest)
    logger.info(f"Created demo dataset: {len(samples)} samples at {path}")


def create_demo_config(dataset_path: Path, config_path: Path) -> RunConfig:
    config = RunConfig(
        output_dir=str(runs_path(DEMO_RUN)),
        dataset_path=str(dataset_path),
        dataset=DEMO_MANIFEST,
        **DEMO_OVERRIDES,
    )
    save_run_config(config, config_path)
    logger.info(f"Created demo config {config_path} (fingerprint {config.fingerprint()})")
    return config


def verify_demo_data(dataset_path: Path) -> None:
    logger.info("Verifying demo data...")

    try:
        manifest, samples = read_dataset(dataset_path)
        with_lr = sum(1 for s in samples if s.has_lr)

        logger.info(f"Samples: {len(samples)} ({with_lr} with LR ST, {len(samples) - with_lr} without)")
        if manifest is not None:
            logger.info(f"HR grid: {manifest.height}x{manifest.width}, scale {manifest.scale}, genes {manifest.genes}")

        logger.info("Demo data verification completed successfully!")

    except Exception as e:
        logger.error(f"Error verifying demo data: {e}")


def main() -> None:
    try:
        base = runs_path(DEMO_RUN)
        base.mkdir(parents=True, exist_ok=True)
        dataset_path = base / "dataset.c3df"
        config_path = base / "config.toml"

        create_demo_dataset(dataset_path)
        create_demo_config(dataset_path, config_path)

        verify_demo_data(dataset_path)

        logger.info("Setup completed successfully!")
        logger.info(f"Train with: st-enhance train --config {config_path}")

    except KeyboardInterrupt:
        logger.info("Setup interrupted by user")
    except Exception as e:
        logger.error(f"Setup error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
