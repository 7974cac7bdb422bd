import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..core.errors import ShapeError, StorageIOError

logger = logging.getLogger(__name__)

# dark blue → teal → yellow, sampled at 0, 0.5, 1
_ANCHORS = np.array([[68, 1, 84], [33, 145, 140], [253, 231, 37]], dtype=np.float64)
_GAP = 2


def colorize(values: np.ndarray) -> np.ndarray:
    """Map an H×W array in [0, 1] to H×W×3 uint8 colours."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * (len(_ANCHORS) - 1)
    low = np.minimum(np.floor(v).astype(int), len(_ANCHORS) - 2)
    frac = (v - low)[..., None]
    rgb = _ANCHORS[low] * (1.0 - frac) + _ANCHORS[low + 1] * frac
    return np.round(rgb).astype(np.uint8)


def render_ppm(image: np.ndarray) -> str:
    """Plain-text (P3) PPM encoding of an H×W×3 uint8 image."""
    h, w, _ = image.shape
    lines = ["P3", f"{w} {h}", "255"]
    lines.extend(" ".join(str(int(c)) for c in row.reshape(-1)) for row in image)
    return "\n".join(lines) + "\n"


def side_by_side(prediction: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Prediction left, truth right, separated by a white gap."""
    if prediction.shape != truth.shape:
        raise ShapeError("heatmap halves differ in shape", [prediction.shape, truth.shape])
    h, w = prediction.shape
    canvas = np.full((h, 2 * w + _GAP, 3), 255, dtype=np.uint8)
    canvas[:, :w] = colorize(prediction)
    canvas[:, w + _GAP:] = colorize(truth)
    return canvas


def write_heatmaps(
    prediction: np.ndarray,
    truth: np.ndarray,
    sample_ids: Sequence[str],
    gene_ids: Sequence[int],
    directory: Union[str, Path],
    max_samples: Optional[int] = None,
) -> List[Path]:
    """One PPM per (sample, gene) for N×G×H×W prediction / truth batches."""
    if prediction.shape != truth.shape or prediction.ndim != 4:
        raise ShapeError("heatmaps need matching N×G×H×W arrays", [prediction.shape, truth.shape])
    out = Path(directory)
    written: List[Path] = []
    count = len(sample_ids) if max_samples is None else min(max_samples, len(sample_ids))
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            for g, gene in enumerate(gene_ids):
                path = out / f"{sample_ids[i]}_gene{gene}.ppm"
                path.write_text(render_ppm(side_by_side(prediction[i, g], truth[i, g])), encoding="ascii")
                written.append(path)
    except OSError as e:
        raise StorageIOError(f"Failed to write heatmaps to {out}: {e}") from e
    logger.info(f"Wrote {len(written)} heatmaps to {out}")
    return written
