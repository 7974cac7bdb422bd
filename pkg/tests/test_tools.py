import pytest

from st_enhance.core import config as core_config
from st_enhance.harness import save_run_config
from st_enhance.tools import ExperimentTools


class RecordingServer:
    """Stands in for FastMCP: keeps the decorated tool functions by name."""

    def __init__(self):
        self.tools = {}

    def tool(self):
        def register(fn):
            self.tools[fn.__name__] = fn
            return fn

        return register


@pytest.fixture
def tools(tmp_path, monkeypatch):
    monkeypatch.setattr(core_config.settings, "runs_dir", str(tmp_path / "runs"))
    server = RecordingServer()
    ExperimentTools.register_tools(server)
    return server.tools


def test_all_tools_are_registered(tools):
    assert set(tools) == {
        "generate_dataset",
        "train_model",
        "sample_maps",
        "evaluate_checkpoint",
        "run_ablation",
        "describe_checkpoint",
    }


def test_generate_dataset(tools, tmp_path):
    result = tools["generate_dataset"]("demo", n_samples="6", height="10", width="10", genes="2", missing_fraction="0")
    assert result["success"], result
    assert result["data"]["samples"] == 6
    assert result["data"]["with_lr_st"] == 6
    assert (tmp_path / "runs" / "demo" / "dataset.c3df").exists()


def test_bad_arguments_are_reported(tools):
    result = tools["generate_dataset"]("demo", n_samples="lots")
    assert not result["success"]
    assert "n_samples" in result["error"]
    result = tools["generate_dataset"]("demo", height="12", width="10", scale="5")
    assert not result["success"]


def test_train_describe_and_evaluate(tools, config, tmp_path):
    path = tmp_path / "config.toml"
    save_run_config(config, path)
    trained = tools["train_model"](str(path), run_name="tool-run", steps="1")
    assert trained["success"], trained
    checkpoint = trained["data"]["checkpoint"]
    assert trained["data"]["steps_run"] == 1

    described = tools["describe_checkpoint"](checkpoint)
    assert described["data"]["step"] == 1
    assert described["data"]["parameter_count"] > 0
    assert any(name.startswith("adam.") for name in described["data"]["tensors"])

    scored = tools["evaluate_checkpoint"](checkpoint, steps="2", report_format="csv", out=str(tmp_path / "r.csv"))
    assert scored["success"], scored
    assert (tmp_path / "r.csv").exists()
    assert not tools["evaluate_checkpoint"](checkpoint, report_format="xml")["success"]


def test_missing_checkpoint(tools, tmp_path):
    result = tools["describe_checkpoint"](str(tmp_path / "none.c3ck"))
    assert not result["success"]


def test_unknown_ablation_row(tools, config, tmp_path):
    path = tmp_path / "config.toml"
    save_run_config(config, path)
    result = tools["run_ablation"](str(path), row="w/o everything")
    assert not result["success"]
    assert "Unknown ablation row" in result["error"]
