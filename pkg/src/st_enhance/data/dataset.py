import logging
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from ..core.errors import FormatError
from ..core.models import DatasetManifest
from ..core.storage import DATASET_MAGIC, ContainerReader, ContainerWriter, PathLike
from .sample import SpatialSample

logger = logging.getLogger(__name__)


def save_dataset(
    samples: Sequence[SpatialSample],
    path: PathLike,
    manifest: Optional[DatasetManifest] = None,
) -> int:
    """Write samples to a "C3DF" file; returns the number of bytes written."""
    writer = ContainerWriter(DATASET_MAGIC)
    writer.json_block({"manifest": manifest.model_dump(mode="json") if manifest else None})
    writer.u32(len(samples))
    for sample in samples:
        writer.string(sample.sample_id)
        writer.u32(len(sample.gene_ids))
        for gene in sample.gene_ids:
            writer.u32(gene)
        writer.tensor(sample.histology)
        writer.tensor(sample.hr_st)
        writer.u8(1 if sample.lr_st is not None else 0)
        if sample.lr_st is not None:
            writer.tensor(sample.lr_st)
    size = writer.save(path)
    logger.info(f"Dataset with {len(samples)} samples written to {path} ({size} bytes)")
    return size


def read_dataset(path: PathLike) -> Tuple[Optional[DatasetManifest], List[SpatialSample]]:
    """Load a "C3DF" file together with the manifest it was generated from."""
    reader = ContainerReader(path, DATASET_MAGIC)
    header = reader.json_block()
    manifest = None
    if header.get("manifest") is not None:
        try:
            manifest = DatasetManifest(**header["manifest"])
        except ValidationError as e:
            raise FormatError(f"{path}: manifest block is invalid: {e}") from e

    samples: List[SpatialSample] = []
    for _ in range(reader.u32()):
        sample_id = reader.string()
        gene_ids = [reader.u32() for _ in range(reader.u32())]
        histology = reader.tensor()
        hr_st = reader.tensor()
        flag = reader.u8()
        if flag not in (0, 1):
            raise FormatError(f"{path}: invalid presence flag {flag} in sample {sample_id}")
        lr_st = reader.tensor() if flag else None
        try:
            samples.append(
                SpatialSample(
                    sample_id=sample_id,
                    gene_ids=gene_ids,
                    histology=histology,
                    hr_st=hr_st,
                    lr_st=lr_st,
                )
            )
        except ValidationError as e:
            raise FormatError(f"{path}: sample {sample_id} is inconsistent: {e}") from e
    reader.finish()
    return manifest, samples


def load_dataset(path: PathLike) -> List[SpatialSample]:
    return read_dataset(path)[1]
