"""Geometry aware volumes, binary masks, components and slab projections."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .exceptions import (
    EmptyRegionError,
    GeometryMismatchError,
    InvalidParameterError,
)

logger = logging.getLogger(__name__)

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]

# Neighborhood size to `generate_binary_structure` connectivity rank.
CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


def _check_geometry(dims: tuple[int, ...], spacing: tuple[float, ...]) -> None:
    if len(dims) != 3 or any(n < 1 for n in dims):
        raise InvalidParameterError("dims", dims, "three positive voxel counts")
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise InvalidParameterError("spacing", spacing, "three positive lengths")


@dataclass(frozen=True)
class Volume3:
    """A scalar 3D grid of float64 values indexed as data[i, j, k]."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    affine: Optional[np.ndarray] = field(default=None, compare=False)
    header: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        """Validate the grid and freeze the array."""
        data = np.asarray(self.data, dtype=np.float64)
        spacing = tuple(float(s) for s in self.spacing)
        _check_geometry(data.shape, spacing)
        if not np.isfinite(data).all():
            raise InvalidParameterError(
                "data",
                "non-finite values",
                "every voxel must be finite",
            )
        if data.flags.writeable:
            # Own a private copy so that callers can't mutate the volume.
            data = data.copy()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> Dims:
        """Voxel counts along the three axes."""
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume3":
        """Return a new volume with the same geometry and other values."""
        return Volume3(data, self.spacing, self.affine, self.header)


@dataclass(frozen=True)
class BinaryMask3:
    """A boolean 3D grid sharing the geometry conventions of `Volume3`."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    affine: Optional[np.ndarray] = field(default=None, compare=False)
    header: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        """Validate the grid and freeze the array."""
        raw = np.asarray(self.data)
        if raw.dtype != np.bool_:
            if not np.isin(raw, (0, 1)).all():
                raise InvalidParameterError(
                    "data",
                    "non binary values",
                    "mask voxels must be 0 or 1",
                )
            raw = raw.astype(bool)
        elif raw.flags.writeable:
            raw = raw.copy()
        spacing = tuple(float(s) for s in self.spacing)
        _check_geometry(raw.shape, spacing)
        raw.flags.writeable = False
        object.__setattr__(self, "data", raw)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> Dims:
        """Voxel counts along the three axes."""
        return self.data.shape

    @property
    def count(self) -> int:
        """Number of foreground voxels."""
        return int(np.count_nonzero(self.data))

    def with_data(self, data: np.ndarray) -> "BinaryMask3":
        """Return a new mask with the same geometry and other values."""
        return BinaryMask3(
            np.asarray(data, dtype=bool),
            self.spacing,
            self.affine,
            self.header,
        )

    @classmethod
    def empty_like(cls, grid: Union[Volume3, "BinaryMask3"]) -> "BinaryMask3":
        """Create an all-zero mask on the grid of another volume or mask."""
        return cls(
            np.zeros(grid.dims, dtype=bool),
            grid.spacing,
            grid.affine,
            grid.header,
        )


Grid = Union[Volume3, BinaryMask3]


def check_same_geometry(*named: tuple[str, Grid]) -> None:
    """Raise `GeometryMismatchError` unless every grid has the same dims and spacing."""
    if not named:
        return
    first_name, first = named[0]
    for name, grid in named[1:]:
        if grid.dims != first.dims:
            raise GeometryMismatchError(
                name,
                first_name,
                f"dims {grid.dims} != {first.dims}",
            )
        if not np.allclose(grid.spacing, first.spacing, rtol=1e-6, atol=0):
            raise GeometryMismatchError(
                name,
                first_name,
                f"spacing {grid.spacing} != {first.spacing}",
            )


def linear_index(i: int, j: int, k: int, dims: Dims) -> int:
    """Return the column-major linear index i + nx * (j + ny * k)."""
    nx, ny, nz = dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        err_msg = f"Voxel ({i}, {j}, {k}) is outside a grid of dims {dims}."
        raise IndexError(err_msg)
    return i + nx * (j + ny * k)


def voxel_coordinates(index: int, dims: Dims) -> tuple[int, int, int]:
    """Invert `linear_index`."""
    nx, ny, nz = dims
    if not 0 <= index < nx * ny * nz:
        err_msg = f"Linear index {index} is outside a grid of dims {dims}."
        raise IndexError(err_msg)
    i, rest = index % nx, index // nx
    return i, rest % ny, rest // ny


def linear_indices(mask: np.ndarray) -> np.ndarray:
    """Column-major linear indices of the foreground voxels, in ascending order."""
    return np.flatnonzero(np.asarray(mask).ravel(order="F"))


def neighborhood(connectivity: int) -> np.ndarray:
    """Return the 3x3x3 structuring element for 6, 18 or 26 connectivity."""
    try:
        rank = CONNECTIVITY_RANK[connectivity]
    except KeyError:
        err_msg = "one of 6, 18, 26"
        raise InvalidParameterError("connectivity", connectivity, err_msg) from None
    return ndimage.generate_binary_structure(3, rank)


@dataclass(frozen=True)
class Components:
    """Connected components of a mask."""

    labels: np.ndarray
    sizes: np.ndarray
    min_index: np.ndarray

    @property
    def count(self) -> int:
        """Number of components."""
        return int(self.sizes.size)


def connected_components(mask: BinaryMask3, connectivity: int = 26) -> Components:
    """
    Label the connected components of a mask.

    Labels run from 1 to C. `sizes[c - 1]` and `min_index[c - 1]` hold the voxel
    count and the smallest column-major linear index of component c.
    """
    labels, count = ndimage.label(mask.data, structure=neighborhood(connectivity))
    if count == 0:
        return Components(
            labels,
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
        )

    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:].astype(np.int64)

    # Scanning in column-major order meets the smallest index of each label first.
    flat_labels = labels.ravel(order="F")
    foreground = np.flatnonzero(flat_labels)
    first_seen = np.full(count + 1, -1, dtype=np.int64)
    order_labels, first_pos = np.unique(flat_labels[foreground], return_index=True)
    first_seen[order_labels] = foreground[first_pos]

    return Components(labels, sizes, first_seen[1:])


@dataclass(frozen=True)
class MipStack:
    """Slab-wise maximum intensity projections along one axis."""

    axis: int
    slabs: np.ndarray
    argmax: np.ndarray
    slab_extents: list[tuple[int, int]]
    dims: Dims
    spacing: Spacing
    affine: Optional[np.ndarray] = field(default=None, compare=False)
    header: Optional[object] = field(default=None, compare=False, repr=False)

    @property
    def count(self) -> int:
        """Number of slabs."""
        return len(self.slab_extents)

    def as_volume(self) -> Volume3:
        """
        The slab images as a volume, one slab per slice along the last axis.

        The in-plane axes keep their order, spacing and affine columns. Slab n
        sits at the first slice of its extent, so the last axis steps by the
        slab stride along the projection axis.
        """
        in_plane = [a for a in range(3) if a != self.axis]
        starts = [first for first, _ in self.slab_extents]
        stride = starts[1] - starts[0] if len(starts) > 1 else 1

        affine = self.affine
        if affine is None:
            affine = np.diag([*self.spacing, 1.0])
        stacked = np.array(affine, dtype=np.float64)
        stacked[:, :3] = affine[:, [*in_plane, self.axis]]
        stacked[:, 2] *= stride
        spacing = (
            self.spacing[in_plane[0]],
            self.spacing[in_plane[1]],
            self.spacing[self.axis] * stride,
        )
        return Volume3(np.moveaxis(self.slabs, 0, -1), spacing, stacked, self.header)


def slab_extents(length: int, thickness: int) -> list[tuple[int, int]]:
    """First and last slice of each half-overlapping slab covering `length` slices."""
    stride = max(thickness // 2, 1)
    extents = []
    start = 0
    while True:
        end = min(start + thickness, length)
        extents.append((start, end - 1))
        if end >= length:
            return extents
        start += stride


def mip_slabs(volume: Volume3, slab_mm: float, axis: int = 2) -> MipStack:
    """
    Project a volume slab by slab along `axis`.

    The slab thickness in slices is round(slab_mm / spacing[axis]) and slabs
    advance by half of it. Ties in the maximum resolve to the smallest slice.
    A slab has to be thicker than one slice along `axis`.
    """
    if axis not in (0, 1, 2):
        raise InvalidParameterError("axis", axis, "one of 0, 1, 2")
    if not slab_mm > volume.spacing[axis]:
        raise InvalidParameterError(
            "slab_mm",
            slab_mm,
            f"thicker than one slice of {volume.spacing[axis]} mm",
        )
    thickness = round(slab_mm / volume.spacing[axis])

    moved = np.moveaxis(volume.data, axis, -1)
    extents = slab_extents(moved.shape[-1], thickness)

    slabs = np.empty((len(extents), *moved.shape[:2]), dtype=np.float64)
    argmax = np.empty((len(extents), *moved.shape[:2]), dtype=np.int64)
    for n, (first, last) in enumerate(extents):
        block = moved[..., first : last + 1]
        # argmax returns the first occurrence, which is the tie rule we want.
        winner = np.argmax(block, axis=-1)
        argmax[n] = winner + first
        slabs[n] = np.take_along_axis(block, winner[..., None], axis=-1)[..., 0]

    logger.debug(
        "Projected %d slabs of %d slices along axis %d.", len(extents), thickness, axis
    )
    return MipStack(
        axis,
        slabs,
        argmax,
        extents,
        volume.dims,
        volume.spacing,
        volume.affine,
        volume.header,
    )


def sample_at_argmax(mask: BinaryMask3, stack: MipStack) -> np.ndarray:
    """Read a 3D mask at the stored winning voxel of every slab pixel."""
    if mask.dims != stack.dims:
        raise GeometryMismatchError(
            "mask",
            "projection stack",
            f"dims {mask.dims} != {stack.dims}",
        )
    moved = np.moveaxis(mask.data, stack.axis, -1)
    return np.stack(
        [
            np.take_along_axis(moved, winner[..., None], axis=-1)[..., 0]
            for winner in stack.argmax
        ],
    )


def backproject(seeds2d: np.ndarray, stack: MipStack) -> BinaryMask3:
    """Place every 2D seed pixel back at its stored 3D voxel, unioning slabs."""
    seeds2d = np.asarray(seeds2d, dtype=bool)
    if seeds2d.shape != stack.slabs.shape:
        raise GeometryMismatchError(
            "2D seeds",
            "projection stack",
            f"shape {seeds2d.shape} != {stack.slabs.shape}",
        )

    out = np.zeros(stack.dims, dtype=bool)
    moved = np.moveaxis(out, stack.axis, -1)
    for seeds, winner in zip(seeds2d, stack.argmax):
        rows, cols = np.nonzero(seeds)
        moved[rows, cols, winner[rows, cols]] = True

    return BinaryMask3(out, stack.spacing, stack.affine, stack.header)


def masked_mean_std(volume: Volume3, mask: BinaryMask3) -> tuple[float, float]:
    """Population mean and standard deviation of the volume over the mask."""
    check_same_geometry(("volume", volume), ("mask", mask))
    values = volume.data[mask.data]
    if values.size == 0:
        raise EmptyRegionError("mask")
    return float(values.mean()), float(values.std())
