"""Remove connected components of a vessel mask whose mean anisotropy is low."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidParameterError
from .volume import (
    CONNECTIVITY_RANK,
    BinaryMask3,
    Components,
    Volume3,
    check_same_geometry,
    connected_components,
)

logger = logging.getLogger(__name__)

# Thresholds reported by the sweep when none are given, in ppm.
DEFAULT_SWEEP = (1.2e-3, 2.4e-3, 3.6e-3, 4.8e-3)


@dataclass(frozen=True)
class RefineConfig:
    """Anisotropy threshold and adjacency of the refinement step."""

    aniso_thresh: float = 1.2e-3
    connectivity: int = 26

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if not (np.isfinite(self.aniso_thresh) and self.aniso_thresh >= 0):
            raise InvalidParameterError(
                "aniso_thresh",
                self.aniso_thresh,
                "a non-negative value",
            )
        if self.connectivity not in CONNECTIVITY_RANK:
            raise InvalidParameterError(
                "connectivity",
                self.connectivity,
                "one of 6, 18, 26",
            )


@dataclass(frozen=True)
class ComponentTable:
    """Per-component statistics of a mask."""

    components: Components
    mean_anisotropy: np.ndarray
    kept: np.ndarray

    def to_tsv(self) -> str:
        """Render one row per component."""
        rows = ["label\tsize\tmin_index\tmean_anisotropy\tkept"]
        for n in range(self.components.count):
            rows.append(
                f"{n + 1}\t{self.components.sizes[n]}\t{self.components.min_index[n]}"
                f"\t{self.mean_anisotropy[n]:.6e}\t{int(self.kept[n])}",
            )
        return "\n".join(rows) + "\n"

    def histogram(self, bins: int = 10) -> dict[str, list[float]]:
        """Histogram of the component means, for threshold tuning."""
        if self.components.count == 0:
            return {"counts": [], "edges": []}
        counts, edges = np.histogram(self.mean_anisotropy, bins=bins)
        return {"counts": counts.tolist(), "edges": edges.tolist()}


def _component_means(components: Components, ani: Volume3) -> np.ndarray:
    if components.count == 0:
        return np.zeros(0)
    sums = np.bincount(
        components.labels.ravel(),
        weights=ani.data.ravel(),
        minlength=components.count + 1,
    )[1:]
    return sums / components.sizes


def cc_mean_anisotropy(
    mask: BinaryMask3,
    ani: Volume3,
    connectivity: int = 26,
) -> np.ndarray:
    """Mean anisotropy of every connected component, indexed by label - 1."""
    check_same_geometry(("mask", mask), ("anisotropy", ani))
    return _component_means(connected_components(mask, connectivity), ani)


def component_table(
    mask: BinaryMask3,
    ani: Volume3,
    cfg: Optional[RefineConfig] = None,
) -> ComponentTable:
    """Label the mask and decide which components survive the threshold."""
    if cfg is None:
        cfg = RefineConfig()
    check_same_geometry(("mask", mask), ("anisotropy", ani))
    components = connected_components(mask, cfg.connectivity)
    means = _component_means(components, ani)
    return ComponentTable(components, means, means >= cfg.aniso_thresh)


def remove_low_anisotropy(
    mask: BinaryMask3,
    ani: Volume3,
    cfg: Optional[RefineConfig] = None,
    table: Optional[ComponentTable] = None,
) -> BinaryMask3:
    """Keep the components whose mean anisotropy isn't below the threshold."""
    if table is None:
        table = component_table(mask, ani, cfg)

    keep = np.concatenate(([False], table.kept))
    refined = keep[table.components.labels]
    logger.info(
        "Refinement kept %d of %d components, %d of %d voxels.",
        int(table.kept.sum()),
        table.components.count,
        int(refined.sum()),
        mask.count,
    )
    return mask.with_data(refined)


def anisotropy_sweep(
    table: ComponentTable,
    thresholds: Sequence[float] = DEFAULT_SWEEP,
) -> list[dict[str, float]]:
    """Kept components and voxels for every candidate threshold."""
    sweep = []
    for threshold in thresholds:
        kept = table.mean_anisotropy >= threshold
        sweep.append(
            {
                "aniso_thresh": float(threshold),
                "components": int(kept.sum()),
                "voxels": int(table.components.sizes[kept].sum()),
            },
        )
    return sweep
