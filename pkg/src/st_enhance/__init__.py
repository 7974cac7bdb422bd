__version__ = "0.1.0"

from .core.config import settings
from .core.errors import StEnhanceError
from .core.models import AblationRow, DatasetManifest, ImputationMode, MetricReport, RunConfig

__all__ = [
    "settings",
    "StEnhanceError",
    "AblationRow",
    "DatasetManifest",
    "ImputationMode",
    "MetricReport",
    "RunConfig",
]
