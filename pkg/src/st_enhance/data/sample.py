from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


def _check_unit_range(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    if array.size and (array.min() < 0.0 or array.max() > 1.0):
        raise ValueError(f"{name} values must lie within [0, 1]")


class SpatialSample(BaseModel):
    """
    One paired record: histology image, HR ST map, optional LR ST map and the
    gene panel the ST channels correspond to. Arrays are float32 and are
    wrapped into tensors only when they enter a compute graph.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample_id: str = Field(..., description="Stable sample identifier")
    gene_ids: List[int] = Field(..., description="Gene panel indices, one per ST channel")
    histology: np.ndarray = Field(..., description="3×H×W image in [0, 1]")
    hr_st: np.ndarray = Field(..., description="G×H×W normalised expression")
    lr_st: Optional[np.ndarray] = Field(None, description="G×(H/s)×(W/s) expression or None")

    @model_validator(mode="after")
    def _check_shapes(self) -> "SpatialSample":
        if self.histology.ndim != 3 or self.histology.shape[0] != 3:
            raise ValueError(f"histology must be 3×H×W, got {self.histology.shape}")
        g, h, w = self.hr_st.shape
        if (h, w) != self.histology.shape[1:]:
            raise ValueError("histology and hr_st disagree on H×W")
        if g != len(self.gene_ids):
            raise ValueError(f"hr_st has {g} channels for {len(self.gene_ids)} gene ids")
        _check_unit_range("histology", self.histology)
        _check_unit_range("hr_st", self.hr_st)
        if self.lr_st is not None:
            lg, lh, lw = self.lr_st.shape
            if lg != g or h % lh or w % lw or h // lh != w // lw:
                raise ValueError(
                    f"lr_st shape {self.lr_st.shape} is not a whole-scale reduction of {self.hr_st.shape}"
                )
            _check_unit_range("lr_st", self.lr_st)
        return self

    @property
    def has_lr(self) -> bool:
        return self.lr_st is not None

    @property
    def genes(self) -> int:
        return len(self.gene_ids)

    @property
    def spatial_shape(self) -> Tuple[int, int]:
        return (int(self.hr_st.shape[1]), int(self.hr_st.shape[2]))

    def scale(self) -> Optional[int]:
        """Enlargement factor between the LR and HR grids, when LR is present."""
        if self.lr_st is None:
            return None
        return int(self.hr_st.shape[1] // self.lr_st.shape[1])
