from .config import settings
from .errors import StEnhanceError
from .models import (
    AblationRow,
    DatasetManifest,
    ImputationMode,
    LossReport,
    MetricReport,
    ReportFormat,
    RunConfig,
)

__all__ = [
    "settings",
    "StEnhanceError",
    "AblationRow",
    "DatasetManifest",
    "ImputationMode",
    "LossReport",
    "MetricReport",
    "ReportFormat",
    "RunConfig",
]
