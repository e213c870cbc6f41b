"""Brain boundary inpainting and the inverse Hamming high-pass filter."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft, ndimage

from .exceptions import EmptyRegionError, InvalidParameterError
from .volume import BinaryMask3, Volume3, check_same_geometry

logger = logging.getLogger(__name__)

# Peak gain of the inverse Hamming window on the ellipsoid boundary is 2 * 0.6.
HAMMING_GAIN = 0.6


@dataclass(frozen=True)
class InverseHammingSpec:
    """Filter sizes of the inverse Hamming window, in k-space samples per axis."""

    size: tuple[float, float, float] = (80.0, 80.0, 80.0)

    def __post_init__(self) -> None:
        """Validate the sizes."""
        size = tuple(float(h) for h in self.size)
        if len(size) != 3 or not all(np.isfinite(h) and h > 0 for h in size):
            raise InvalidParameterError(
                "hamming_size",
                self.size,
                "three positive sample counts",
            )
        object.__setattr__(self, "size", size)


def inpaint_outside_mask(
    volume: Volume3,
    mask: BinaryMask3,
    max_iters: int = 400,
    tol: float = 1e-4,
) -> Volume3:
    """
    Extend the values inside a mask smoothly over the rest of the grid.

    Outside voxels start from the value of their nearest inside voxel and are
    then relaxed towards the mean of their 6 neighbors until the relative change
    of an iteration drops below `tol` or `max_iters` is reached.
    Inside voxels are never touched.
    """
    check_same_geometry(("volume", volume), ("mask", mask))
    if max_iters < 0:
        raise InvalidParameterError(
            "inpaint_max_iters",
            max_iters,
            "a non-negative count",
        )
    if not tol > 0:
        raise InvalidParameterError("inpaint_tol", tol, "a positive tolerance")

    inside = mask.data
    if not inside.any():
        raise EmptyRegionError("inpainting mask")
    outside = ~inside
    if not outside.any():
        return volume

    # Nearest inside voxel of every outside voxel.
    nearest = ndimage.distance_transform_edt(
        outside,
        sampling=volume.spacing,
        return_distances=False,
        return_indices=True,
    )
    current = volume.data[tuple(nearest)].copy()

    iteration = 0
    change = np.inf
    while iteration < max_iters:
        padded = np.pad(current, 1, mode="edge")
        average = (
            padded[:-2, 1:-1, 1:-1]
            + padded[2:, 1:-1, 1:-1]
            + padded[1:-1, :-2, 1:-1]
            + padded[1:-1, 2:, 1:-1]
            + padded[1:-1, 1:-1, :-2]
            + padded[1:-1, 1:-1, 2:]
        ) / 6.0

        before = current[outside]
        after = average[outside]
        norm = np.linalg.norm(before)
        delta = np.linalg.norm(after - before)
        change = delta / norm if norm > 0 else delta
        current[outside] = after
        iteration += 1
        if change < tol:
            break

    if change >= tol and max_iters > 0:
        logger.warning(
            "Inpainting stopped after %d iterations with relative change %.3g.",
            iteration,
            change,
        )
    else:
        logger.debug("Inpainting converged after %d iterations.", iteration)

    return volume.with_data(current)


def inverse_hamming_weight(k: np.ndarray, spec: InverseHammingSpec) -> np.ndarray:
    """
    Weight of the inverse Hamming window at signed k-space sample offsets.

    `k` has a trailing axis of length 3. Inside the ellipsoid of semi-axes
    `spec.size` the weight is 0.6 * (1 - cos(pi * r)) with r the normalized
    radius; it is exactly 1 outside.
    """
    k = np.asarray(k, dtype=np.float64)
    ratio = np.sum((k / np.asarray(spec.size)) ** 2, axis=-1)
    return _weight_from_ratio(ratio)


def _weight_from_ratio(ratio: np.ndarray) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=np.float64)
    inside = HAMMING_GAIN * (1.0 - np.cos(np.pi * np.sqrt(ratio)))
    return np.where(ratio <= 1.0, inside, 1.0)


def hamming_kspace_weights(
    dims: tuple[int, int, int],
    spec: InverseHammingSpec,
) -> np.ndarray:
    """Filter weights laid out in unshifted DFT order for a grid of `dims`."""
    # fftfreq * n gives the signed sample offset from DC of every DFT bin.
    axes = [fft.fftfreq(n, d=1.0 / n) / h for n, h in zip(dims, spec.size)]
    ratio = (
        axes[0][:, None, None] ** 2
        + axes[1][None, :, None] ** 2
        + axes[2][None, None, :] ** 2
    )
    return _weight_from_ratio(ratio)


def highpass_inverse_hamming(
    volume: Volume3,
    spec: Optional[InverseHammingSpec] = None,
    workers: Optional[int] = None,
) -> Volume3:
    """Multiply the 3D spectrum of a volume by the inverse Hamming window."""
    if spec is None:
        spec = InverseHammingSpec()

    spectrum = fft.fftn(volume.data, workers=workers)
    spectrum *= hamming_kspace_weights(volume.dims, spec)
    filtered = fft.ifftn(spectrum, workers=workers)

    scale = np.sqrt(np.mean(volume.data**2))
    residual = np.abs(filtered.imag).max()
    if scale > 0 and residual > 1e-5 * scale:
        logger.warning("High-pass output kept an imaginary residual of %.3g.", residual)

    return volume.with_data(filtered.real)
