from typing import Optional, Sequence


class StEnhanceError(Exception):
    """Base class for every error raised by the st-enhance library."""


class ShapeError(StEnhanceError, ValueError):
    """Tensor shapes violate an operation contract."""

    def __init__(self, message: str, shapes: Optional[Sequence[Sequence[int]]] = None):
        if shapes:
            rendered = " vs ".join(str(tuple(s)) for s in shapes)
            message = f"{message}: {rendered}"
        super().__init__(message)
        self.shapes = [tuple(s) for s in shapes] if shapes else []


class GraphError(StEnhanceError, RuntimeError):
    """Backward requested on a tensor that is not part of a recorded graph."""


class DomainError(StEnhanceError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateInputError(StEnhanceError, ValueError):
    """Input has no well-defined result (e.g. normalising a zero vector)."""


class ManifestError(StEnhanceError, ValueError):
    """Dataset manifest parameters are invalid."""


class StorageIOError(StEnhanceError, OSError):
    """Reading or writing a container file failed at the OS level."""


class FormatError(StEnhanceError, ValueError):
    """Container file has the wrong magic number or an unsupported version."""


class TruncatedFileError(StEnhanceError, ValueError):
    """Container file ended before the declared payload."""

    def __init__(self, path: str, expected: int, actual: int):
        super().__init__(
            f"Truncated file {path}: expected at least {expected} bytes, got {actual}"
        )
        self.path = path
        self.expected = expected
        self.actual = actual


class EmptyPairSetError(StEnhanceError, ValueError):
    """A contrastive term was given no positives or no negatives."""


class BatchTooSmallError(StEnhanceError, ValueError):
    """Pair-based contrastive losses need at least two samples."""


class EmptySplitError(StEnhanceError, ValueError):
    """Nothing left to sample or score, e.g. a validation split of zero samples."""


class ImputationImpossibleError(StEnhanceError, ValueError):
    """Imputation requested but the batch holds no sample with LR ST."""

    def __init__(self) -> None:
        super().__init__(
            "Cannot impute ST features: no sample in the batch has an LR ST map. "
            "Use zero-padding mode (alpha = beta = 0) for such batches."
        )


class TimestepError(StEnhanceError, ValueError):
    """Diffusion timestep outside [0, T)."""


class NonFiniteLossError(StEnhanceError, FloatingPointError):
    """A training quantity became NaN or infinite."""

    def __init__(self, tensor_name: str, step: int):
        super().__init__(f"Non-finite values in '{tensor_name}' at step {step}")
        self.tensor_name = tensor_name
        self.step = step


class InvariantViolationError(StEnhanceError, AssertionError):
    """A geometric premise of training (e.g. unit-norm embeddings) failed."""


class UnknownAblationError(StEnhanceError, KeyError):
    """Ablation row name is not part of the ablation grid."""


class CorrelationUndefinedError(StEnhanceError, ValueError):
    """Pearson correlation requested against a constant map."""


class ConfigError(StEnhanceError, ValueError):
    """Run configuration file is unreadable or holds invalid values."""
