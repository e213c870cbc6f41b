"""Overlap and error metrics, and the report they are collected in."""

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import EmptyRegionError, InvalidParameterError
from .volume import BinaryMask3, Dims, Volume3, check_same_geometry

# Regions RMSE and PSNR are evaluated on.
CONDITIONS = ("without_mask", "with_mask", "within_mask")

SliceSpec = Iterable[tuple[int, int]]


def dice(a: BinaryMask3, b: BinaryMask3) -> float:
    """Dice similarity coefficient; two empty masks agree perfectly."""
    check_same_geometry(("first mask", a), ("second mask", b))
    return _dice(a.data, b.data)


def _dice(a: np.ndarray, b: np.ndarray) -> float:
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def _slice_region(dims: Dims, slice_spec: SliceSpec) -> np.ndarray:
    region = np.zeros(dims, dtype=bool)
    named = False
    for axis, index in slice_spec:
        if axis not in (0, 1, 2):
            raise InvalidParameterError("slice axis", axis, "one of 0, 1, 2")
        if not 0 <= index < dims[axis]:
            raise InvalidParameterError(
                "slice index",
                index,
                f"within [0, {dims[axis]}) on axis {axis}",
            )
        region[(slice(None),) * axis + (index,)] = True
        named = True
    if not named:
        raise EmptyRegionError("slice set")
    return region


def dice_restricted(a: BinaryMask3, b: BinaryMask3, slice_spec: SliceSpec) -> float:
    """Dice over the union of the given (axis, index) slices only."""
    check_same_geometry(("first mask", a), ("second mask", b))
    region = _slice_region(a.dims, slice_spec)
    return _dice(a.data & region, b.data & region)


def central_slices(dims: Dims, count: int) -> list[tuple[int, int]]:
    """The `count` consecutive central slices on each of the three axes."""
    slices = []
    for axis, n in enumerate(dims):
        if not 0 < count <= n:
            raise InvalidParameterError(
                "central slices",
                count,
                f"between 1 and {n} on axis {axis}",
            )
        start = (n - count) // 2
        slices += [(axis, index) for index in range(start, start + count)]
    return slices


def rmse_psnr(pred: Volume3, ref: Volume3, region: BinaryMask3) -> tuple[float, float]:
    """
    Root mean squared error and peak signal to noise ratio over a region.

    The peak is max |ref| over the region. A perfect match has infinite PSNR.
    """
    check_same_geometry(("prediction", pred), ("reference", ref), ("region", region))
    if not region.count:
        raise EmptyRegionError("evaluation region")

    error = pred.data[region.data] - ref.data[region.data]
    rmse = math.sqrt(float(np.mean(error**2)))
    if rmse == 0:
        return 0.0, math.inf

    peak = float(np.abs(ref.data[region.data]).max())
    if peak == 0:
        raise EmptyRegionError("reference signal over the evaluation region")
    return rmse, 20.0 * math.log10(peak / rmse)


def vessel_proportion(roi: BinaryMask3, vessel: BinaryMask3) -> float:
    """Percentage of ROI voxels inside the vessel mask."""
    check_same_geometry(("roi", roi), ("vessel mask", vessel))
    if not roi.count:
        raise EmptyRegionError("ROI")
    return 100.0 * int(np.count_nonzero(roi.data & vessel.data)) / roi.count


def masked_mean_susceptibility(
    chi: Volume3,
    roi: BinaryMask3,
    vessel: BinaryMask3,
    exclude_vessels: bool,
) -> float:
    """Mean susceptibility over the ROI, optionally without the vessel voxels."""
    check_same_geometry(("chi", chi), ("roi", roi), ("vessel mask", vessel))
    region = roi.data & ~vessel.data if exclude_vessels else roi.data
    values = chi.data[region]
    if values.size == 0:
        raise EmptyRegionError("ROI without vessels" if exclude_vessels else "ROI")
    return float(values.mean())


def condition_region(
    brain: BinaryMask3,
    vessel: BinaryMask3,
    condition: str,
) -> BinaryMask3:
    """Region of an evaluation condition, inside the brain."""
    check_same_geometry(("brain_mask", brain), ("vessel mask", vessel))
    if condition == "without_mask":
        return brain
    if condition == "with_mask":
        return brain.with_data(brain.data & ~vessel.data)
    if condition == "within_mask":
        return brain.with_data(brain.data & vessel.data)
    raise InvalidParameterError("condition", condition, f"one of {CONDITIONS}")


@dataclass
class MetricsReport:
    """Named results with their provenance, serialized as JSON."""

    values: dict[str, Optional[float]] = field(default_factory=dict)
    condition: Optional[str] = None
    provenance: dict[str, object] = field(default_factory=dict)
    children: list["MetricsReport"] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Check the label and the ranges of the known metrics."""
        if self.condition is not None and self.condition not in CONDITIONS:
            raise InvalidParameterError(
                "condition",
                self.condition,
                f"one of {CONDITIONS}",
            )
        for name in ("dsc", "dsc_restricted"):
            if name in self.values and not 0 <= self.values[name] <= 1:
                raise InvalidParameterError(name, self.values[name], "within [0, 1]")

    def to_dict(self) -> dict[str, object]:
        """Flatten into the JSON layout."""
        data: dict[str, object] = dict(self.values)
        if self.condition is not None:
            data["condition"] = self.condition
        if self.provenance:
            data["provenance"] = dict(self.provenance)
        if self.children:
            data["conditions"] = [child.to_dict() for child in self.children]
        return data
