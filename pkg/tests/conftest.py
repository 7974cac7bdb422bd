import numpy as np
import pytest

from st_enhance.core.models import DatasetManifest, RunConfig
from st_enhance.data import generate
from st_enhance.harness import DataContext, RunData, resolve_data


def tiny_config(tmp_path, **sections) -> RunConfig:
    """A run small enough to train a handful of steps in well under a second each."""
    base = {
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "dataset": {"n_samples": 12, "height": 10, "width": 10, "genes": 2, "scale": 5,
                    "missing_fraction": 0.25, "seed": 1, "gene_panel_size": 20},
        "encoder": {"feature_dim": 8, "widths": [4, 4, 4], "gene_embedding_dim": 2, "condition_planes": 3},
        "diffusion": {"timesteps": 20},
        "denoiser": {"base_width": 4, "time_embedding_dim": 4},
        "optimizer": {"steps": 4, "batch_size": 4, "checkpoint_every": 0, "log_every": 1},
        "evaluation": {"sample_steps": 3, "batch_size": 4},
    }
    for name, values in sections.items():
        if isinstance(values, dict) and isinstance(base.get(name), dict):
            base[name] = {**base[name], **values}
        else:
            base[name] = values
    return RunConfig.model_validate(base)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_manifest() -> DatasetManifest:
    return DatasetManifest(n_samples=6, height=10, width=10, genes=2, scale=5,
                           missing_fraction=0.25, seed=7, gene_panel_size=20)


@pytest.fixture
def small_samples(small_manifest):
    return generate(small_manifest)


@pytest.fixture
def config(tmp_path) -> RunConfig:
    return tiny_config(tmp_path)


@pytest.fixture
def run_data(config) -> RunData:
    return resolve_data(config)


@pytest.fixture
def context(run_data) -> DataContext:
    return run_data.context


@pytest.fixture
def make_config():
    return tiny_config
