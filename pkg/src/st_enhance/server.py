import logging
import sys

from fastmcp import FastMCP

from .core.config import get_server_config, is_remote_mode, settings
from .core.models import AblationRow, RunConfig
from .core.storage import CHECKPOINT_MAGIC, DATASET_MAGIC, FORMAT_VERSION
from .harness import dump_run_config
from .tools.experiment_tools import ExperimentTools

logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    filename=settings.log_file if settings.log_file else None
)
logger = logging.getLogger(__name__)

mcp = FastMCP(  # type: ignore[type-arg]
    name="st-enhance",
    version="0.1.0"
)


@mcp.resource("config://defaults")
def default_config() -> str:
    """Get the default run config as TOML."""
    try:
        return dump_run_config(RunConfig())
    except Exception as e:
        logger.error(f"Error rendering default config: {e}")
        return f"# Error: failed to render default config: {str(e)}\n"


@mcp.resource("formats://files")
def file_formats() -> str:
    """Describe the dataset, checkpoint and report files written by the tools."""
    rows = "\n".join(f"- `{row.value}`" for row in AblationRow)
    return f"""# File Formats

        All integers are little-endian; tensors are a u8 rank, u32 extents and
        little-endian float32 values in row-major order.

        ## Dataset (`{DATASET_MAGIC.decode()}`, version {FORMAT_VERSION})
        magic, u16 version, u32-length JSON manifest block, u32 sample count, then per sample:
        u16-length id, u32 gene count and u32 gene ids, histology (3×H×W), hr_st (G×H×W),
        u8 presence flag and lr_st (G×H/s×W/s) when the flag is 1.

        ## Checkpoint (`{CHECKPOINT_MAGIC.decode()}`, version {FORMAT_VERSION})
        magic, u16 version, u32-length JSON metadata block (config, fingerprint, step,
        optimizer and RNG state, imputation α/β, data geometry), u32 tensor count, then
        u16-length name and tensor per entry, sorted by name.

        ## Reports
        - `report.json` / `report.csv`: label, fingerprint, per-gene RMSE and PCC, GEC distance
        - `losses.jsonl`: one LossReport per training step
        - `ablation_summary.json` / `ablation_summary.csv`: one line per ablation row

        ## Ablation rows
{rows}
        """


def register_all_tools() -> None:
    """Register all tools from different modules."""
    try:
        ExperimentTools.register_tools(mcp)  # type: ignore[arg-type]
        logger.info("Experiment tools registered successfully")
    except Exception as e:
        logger.error(f"Error registering tools: {e}")
        raise


def main() -> None:
    """Main entry point for the MCP server."""
    try:
        register_all_tools()
        if is_remote_mode():
            config = get_server_config()
            logger.info(
                f"Starting st-enhance server ({config['transport']} transport) "
                f"on {config['host']}:{config['port']}"
            )
            mcp.run(transport=config["transport"], host=config["host"], port=config["port"])  # type: ignore[arg-type]
        else:
            logger.info("Starting st-enhance server (stdio transport)")
            mcp.run(transport="stdio")

    except KeyboardInterrupt:
        logger.info("Server stopped by user")
    except Exception as e:
        logger.error(f"Server error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
