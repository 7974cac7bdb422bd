from .experiment_tools import ExperimentTools

__all__ = [
    "ExperimentTools",
]
