from pathlib import Path
from typing import Optional, TypedDict

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class ServerConfig(TypedDict):
    host: str
    port: int
    transport: str


class Settings(BaseSettings):
    """Process settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        env_prefix="",
        extra="ignore",
    )

    log_level: str = Field(
        default="INFO",
        description="Logging level"
    )
    log_file: Optional[str] = Field(
        default=None,
        description="Log file path (optional)"
    )

    runs_dir: str = Field(
        default="runs",
        description="Base directory for run outputs created through the tool server"
    )
    data_workers: int = Field(
        default=1,
        ge=1,
        description="Worker threads used for synthetic sample generation"
    )

    mcp_host: str = Field(
        default="0.0.0.0",
        description="MCP server host for remote transports"
    )
    mcp_port: int = Field(
        default=8000,
        description="MCP server port for remote transports"
    )
    mcp_transport: str = Field(
        default="stdio",
        description="MCP transport type (stdio, sse, http)"
    )


settings = Settings()


def runs_path(name: str) -> Path:
    """Resolve a run name below the configured runs directory."""
    return Path(settings.runs_dir) / name


def is_remote_mode() -> bool:
    """Check if the tool server runs over a network transport (SSE/HTTP)."""
    return settings.mcp_transport.lower() in ("sse", "http", "streamable-http")


def get_server_config() -> ServerConfig:
    """Get server configuration for remote transports."""
    return {
        "host": settings.mcp_host,
        "port": settings.mcp_port,
        "transport": settings.mcp_transport,
    }
