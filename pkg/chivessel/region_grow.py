"""Grow a vessel mask from seeds, guided by intensity limits and vessel geometry."""

import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .exceptions import InvalidParameterError
from .vesselness import VesselnessResult
from .volume import (
    CONNECTIVITY_RANK,
    BinaryMask3,
    Volume3,
    check_same_geometry,
    connected_components,
    linear_indices,
    masked_mean_std,
    neighborhood,
)

logger = logging.getLogger(__name__)

# Intensities are clamped to this before their ratio is formed.
EPSILON = 1e-12

Voxel = tuple[int, int, int]


@dataclass(frozen=True)
class GrowConfig:
    """
    Parameters of the region growing step.

    The limits are mean + gamma1 * std and mean - gamma2 * std of the
    susceptibility over the seeds. Without them, every candidate has to pass
    the geometry criterion.
    """

    gamma1: float = 0.5
    gamma2: float = 0.5
    connectivity: int = 26
    restrict_to_brain: bool = True
    use_intensity_similarity: bool = True
    use_anisotropy: bool = True
    use_intensity_limits: bool = True

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if self.connectivity not in CONNECTIVITY_RANK:
            raise InvalidParameterError(
                "connectivity",
                self.connectivity,
                "one of 6, 18, 26",
            )
        if not self.gamma1 + self.gamma2 >= 0:
            raise InvalidParameterError(
                "gamma2",
                self.gamma2,
                f"at least -gamma1 = {-self.gamma1}, keeping the limits ordered",
            )


@dataclass(frozen=True)
class GrowLimits:
    """Susceptibility band of the growing step."""

    upper: float
    lower: float

    def __post_init__(self) -> None:
        """Validate the band."""
        if self.upper < self.lower:
            raise InvalidParameterError(
                "upper",
                self.upper,
                f"not below the lower limit {self.lower}",
            )


def intensity_limits(
    chi: Volume3,
    seeds: BinaryMask3,
    cfg: Optional[GrowConfig] = None,
) -> GrowLimits:
    """Upper and lower limits from the mean and population std of chi over the seeds."""
    if cfg is None:
        cfg = GrowConfig()
    mean, std = masked_mean_std(chi, seeds)
    return GrowLimits(mean + cfg.gamma1 * std, mean - cfg.gamma2 * std)


def _geometry_threshold(
    chi_p: float,
    chi_q: np.ndarray,
    v1_p: np.ndarray,
    v1_q: np.ndarray,
    ani_q: np.ndarray,
    cfg: GrowConfig,
) -> np.ndarray:
    """Vesselness a mid-band candidate q needs to join from its neighbor p."""
    omega = np.abs(v1_q @ v1_p)

    if cfg.use_intensity_similarity:
        chi_p = max(chi_p, EPSILON)
        chi_q = np.maximum(chi_q, EPSILON)
        similarity = np.minimum(chi_p, chi_q) / np.maximum(chi_p, chi_q)
    else:
        similarity = 1.0

    anisotropy = 1.0 - np.exp(-10.0 * ani_q) if cfg.use_anisotropy else 1.0
    return 0.5 * (1.0 - omega) / similarity * anisotropy


def _accept(
    chi_p: float,
    chi_q: np.ndarray,
    v1_p: np.ndarray,
    v1_q: np.ndarray,
    ani_q: np.ndarray,
    vmfat_q: np.ndarray,
    limits: GrowLimits,
    cfg: GrowConfig,
) -> np.ndarray:
    threshold = _geometry_threshold(chi_p, chi_q, v1_p, v1_q, ani_q, cfg)
    geometry = vmfat_q >= threshold
    if not cfg.use_intensity_limits:
        return geometry
    above = chi_q > limits.upper
    band = ~above & (chi_q >= limits.lower)
    return above | (band & geometry)


def grow_condition(
    p: Voxel,
    q: Voxel,
    chi: Volume3,
    ves: VesselnessResult,
    limits: GrowLimits,
    cfg: Optional[GrowConfig] = None,
) -> bool:
    """Whether voxel q joins the mask when examined from its included neighbor p."""
    if cfg is None:
        cfg = GrowConfig()
    accepted = _accept(
        float(chi.data[p]),
        np.asarray([chi.data[q]]),
        ves.v1_field[p],
        ves.v1_field[q][None, :],
        np.asarray([ves.ani.data[q]]),
        np.asarray([ves.v_mfat.data[q]]),
        limits,
        cfg,
    )
    return bool(accepted[0])


def seed_queue(seeds: BinaryMask3, connectivity: int = 26) -> np.ndarray:
    """
    Column-major linear indices of the seeds in their initial queue order.

    Larger seed clusters come first, clusters of equal size by their smallest
    index, and voxels inside a cluster by ascending index.
    """
    components = connected_components(seeds, connectivity)
    indices = linear_indices(seeds.data)
    if indices.size == 0:
        return indices

    labels = components.labels.ravel(order="F")[indices] - 1
    order = np.lexsort(
        (indices, components.min_index[labels], -components.sizes[labels]),
    )
    return indices[order]


def _padded_offsets(dims: tuple[int, int, int], connectivity: int) -> np.ndarray:
    """Flat C-order offsets of the neighbors in a grid padded by one voxel."""
    _, ny, nz = (n + 2 for n in dims)
    steps = np.argwhere(neighborhood(connectivity)) - 1
    steps = steps[np.any(steps != 0, axis=1)]
    return steps @ np.array([ny * nz, nz, 1])


def _pad_flat(data: np.ndarray, fill: object = 0) -> np.ndarray:
    """Pad the spatial axes by one voxel and flatten them in C order."""
    width = [(1, 1)] * 3 + [(0, 0)] * (data.ndim - 3)
    padded = np.pad(data, width, constant_values=fill)
    return padded.reshape(-1, *data.shape[3:])


def region_grow(
    chi: Volume3,
    seeds: BinaryMask3,
    ves: VesselnessResult,
    brain: BinaryMask3,
    cfg: Optional[GrowConfig] = None,
    queue: Optional[Union[Sequence[int], np.ndarray]] = None,
) -> BinaryMask3:
    """
    Grow a mask from the seeds by breadth-first examination of neighbors.

    Every voxel taken from the queue examines its neighbors outside the mask;
    accepted ones join the mask and the queue tail. `queue` overrides the
    initial ordering with a permutation of the seeds' column-major indices.
    """
    if cfg is None:
        cfg = GrowConfig()
    check_same_geometry(
        ("chi", chi),
        ("seeds", seeds),
        ("brain_mask", brain),
        ("vesselness", ves.v_mfat),
    )

    allowed = brain.data if cfg.restrict_to_brain else np.ones(chi.dims, dtype=bool)
    seed_data = seeds.data
    outside = seed_data & ~allowed
    if outside.any():
        logger.warning(
            "Dropped %d seed voxels outside the brain mask.", int(outside.sum())
        )
        seed_data = seed_data & allowed
    seeds = seeds.with_data(seed_data)

    if not seeds.count:
        logger.warning("No seeds to grow from, the mask stays empty.")
        return BinaryMask3.empty_like(seeds)

    limits = intensity_limits(chi, seeds, cfg)
    logger.debug("Growing limits: lower %.4g, upper %.4g.", limits.lower, limits.upper)

    if queue is None:
        order = seed_queue(seeds, cfg.connectivity)
    else:
        order = np.asarray(queue, dtype=np.int64)
        if not np.array_equal(np.sort(order), linear_indices(seeds.data)):
            raise InvalidParameterError(
                "queue",
                "the given order",
                "a permutation of the seed voxels",
            )

    dims = chi.dims
    nz2, ny2 = dims[2] + 2, dims[1] + 2
    i, j, k = np.unravel_index(order, dims, order="F")
    start = ((i + 1) * ny2 + (j + 1)) * nz2 + (k + 1)

    offsets = _padded_offsets(dims, cfg.connectivity)
    chi_flat = _pad_flat(chi.data)
    vmfat_flat = _pad_flat(ves.v_mfat.data)
    ani_flat = _pad_flat(ves.ani.data)
    v1_flat = _pad_flat(ves.v1_field)
    allowed_flat = _pad_flat(allowed, fill=False)
    mask_flat = _pad_flat(seeds.data, fill=False)

    pending = deque(start.tolist())
    while pending:
        p = pending.popleft()
        candidates = p + offsets
        candidates = candidates[allowed_flat[candidates] & ~mask_flat[candidates]]
        if candidates.size == 0:
            continue
        accepted = candidates[
            _accept(
                chi_flat[p],
                chi_flat[candidates],
                v1_flat[p],
                v1_flat[candidates],
                ani_flat[candidates],
                vmfat_flat[candidates],
                limits,
                cfg,
            )
        ]
        mask_flat[accepted] = True
        pending.extend(accepted.tolist())

    grown = mask_flat.reshape(tuple(n + 2 for n in dims))[1:-1, 1:-1, 1:-1]
    logger.info(
        "Region growing: %d seeds grew to %d voxels.", seeds.count, int(grown.sum())
    )
    return seeds.with_data(grown)
