"""
Multi-scale Hessian vesselness.

The response combines, across Gaussian scales, the fractional anisotropy of
regularized Hessian eigenvalues. The eigen geometry of every voxel is kept at
the scale where it looked most like a vessel, for the region growing and
refinement steps.
"""

import logging
import math
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from .exceptions import InvalidParameterError
from .volume import BinaryMask3, Volume3, check_same_geometry

logger = logging.getLogger(__name__)

# Voxels per batch handed to the eigen solver.
EIGEN_CHUNK = 1 << 18

# Relative tolerance of the "gap equals its maximum" branch.
MAX_GAP_RTOL = 1e-12


@dataclass(frozen=True)
class MfatConfig:
    """Scales (in voxels) and constants of the multi-scale response."""

    sigmas: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    tau_rho: float = 0.02
    tau_nu: float = 0.35
    delta: float = 0.3

    def __post_init__(self) -> None:
        """Validate the scales and constants."""
        sigmas = tuple(float(s) for s in self.sigmas)
        if not sigmas or not all(np.isfinite(s) and s > 0 for s in sigmas):
            raise InvalidParameterError(
                "sigmas",
                self.sigmas,
                "a non-empty list of positive scales",
            )
        if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
            raise InvalidParameterError(
                "sigmas",
                self.sigmas,
                "strictly increasing scales",
            )
        for name in ("tau_rho", "tau_nu"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidParameterError(name, value, "a value in (0, 1]")
        if not self.delta > 0:
            raise InvalidParameterError("delta", self.delta, "a positive step size")
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def response_bound(self) -> float:
        """Upper bound of the accumulated response over all scales."""
        return 1.0 + (len(self.sigmas) - 1) * self.delta * math.tanh(1.0 - self.delta)


@dataclass(frozen=True)
class EigenSystem:
    """Magnitude-sorted eigenvalues of a symmetric 3x3 matrix, and v1."""

    lambda1: float
    lambda2: float
    lambda3: float
    v1: np.ndarray


class Hessian3(NamedTuple):
    """Scale normalized second derivatives of a volume."""

    xx: np.ndarray
    xy: np.ndarray
    xz: np.ndarray
    yy: np.ndarray
    yz: np.ndarray
    zz: np.ndarray


@dataclass(frozen=True)
class ScaleStep:
    """State of the multi-scale accumulation right after one scale."""

    index: int
    sigma: float
    r_lambda: np.ndarray
    v_mfat: np.ndarray
    min_lambda3: float
    max_gap: float


@dataclass(frozen=True)
class VesselnessResult:
    """Vesselness of a volume with the eigen data of each voxel's winning scale."""

    v_mfat: Volume3
    v1_field: np.ndarray
    lambda2_field: np.ndarray
    lambda3_field: np.ndarray
    winning_scale: np.ndarray

    @cached_property
    def ani(self) -> Volume3:
        """Anisotropy |lambda2 * lambda3| per voxel."""
        return self.v_mfat.with_data(np.abs(self.lambda2_field * self.lambda3_field))


@dataclass(frozen=True)
class PlanarVesselness:
    """Vesselness of a 2D image."""

    v_mfat: np.ndarray
    v1_field: np.ndarray
    lambda2_field: np.ndarray
    winning_scale: np.ndarray


def _smooth(data: np.ndarray, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise InvalidParameterError("sigma", sigma, "a positive scale")
    return ndimage.gaussian_filter(
        np.asarray(data, dtype=np.float64),
        sigma,
        mode="nearest",
        radius=math.ceil(3 * sigma),
    )


def gaussian_smooth(volume: Volume3, sigma: float) -> Volume3:
    """Separable Gaussian smoothing in voxel units with replicated borders."""
    return volume.with_data(_smooth(volume.data, sigma))


def _neighbor(data: np.ndarray, axis: int, step: int) -> np.ndarray:
    n = data.shape[axis]
    return np.take(data, np.clip(np.arange(n) + step, 0, n - 1), axis=axis)


def _central(data: np.ndarray, axis: int) -> np.ndarray:
    return (_neighbor(data, axis, 1) - _neighbor(data, axis, -1)) / 2.0


def _hessian_components(
    data: np.ndarray,
    sigma: float,
) -> dict[tuple[int, int], np.ndarray]:
    """Upper triangle of the scale normalized Hessian of any-dimensional data."""
    smoothed = _smooth(data, sigma)
    scale = sigma**2
    components = {}
    for a in range(smoothed.ndim):
        forward = _neighbor(smoothed, a, 1)
        backward = _neighbor(smoothed, a, -1)
        components[a, a] = scale * (forward - 2.0 * smoothed + backward)
        first = _central(smoothed, a)
        for b in range(a + 1, smoothed.ndim):
            components[a, b] = scale * _central(first, b)
    return components


def hessian_at_scale(volume: Volume3, sigma: float) -> Hessian3:
    """Second derivatives of the smoothed volume, each multiplied by sigma squared."""
    c = _hessian_components(volume.data, sigma)
    return Hessian3(c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2])


def _sorted_eigen(matrices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues by ascending magnitude and the eigenvector of the first."""
    values, vectors = np.linalg.eigh(matrices)
    order = np.argsort(np.abs(values), axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    first = np.broadcast_to(order[..., None, :1], (*vectors.shape[:-1], 1))
    v1 = np.take_along_axis(vectors, first, axis=-1)[..., 0]
    return values, v1


def eig_sym3(h: np.ndarray) -> EigenSystem:
    """Eigensystem of one symmetric 3x3 matrix."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise InvalidParameterError("h", h.shape, "a 3x3 matrix")
    if np.abs(h - h.T).max() > 1e-9:
        raise InvalidParameterError("h", "asymmetric matrix", "symmetric within 1e-9")

    values, v1 = _sorted_eigen(h)
    return EigenSystem(float(values[0]), float(values[1]), float(values[2]), v1)


def eigen_field(
    components: dict[tuple[int, int], np.ndarray],
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigen decomposition of a field of symmetric matrices.

    Returns the magnitude sorted eigenvalues, shape (voxels, d), and the
    eigenvector of the smallest one, shape (voxels, d), in C order.
    """
    d = 1 + max(b for _, b in components)
    flat = {key: np.ravel(value) for key, value in components.items()}
    size = next(iter(flat.values())).size

    def solve(start: int) -> tuple[np.ndarray, np.ndarray]:
        stop = min(start + EIGEN_CHUNK, size)
        matrices = np.empty((stop - start, d, d))
        for (a, b), value in flat.items():
            matrices[:, a, b] = value[start:stop]
            matrices[:, b, a] = value[start:stop]
        return _sorted_eigen(matrices)

    starts = range(0, size, EIGEN_CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(solve, starts))
    else:
        parts = [solve(start) for start in starts]

    return (
        np.concatenate([values for values, _ in parts]),
        np.concatenate([v1 for _, v1 in parts]),
    )


def regularize_eigen(lambda3: np.ndarray, min_lambda3: float, tau: float) -> np.ndarray:
    """Clamp the largest eigenvalue against a fraction of its minimum over the scale."""
    lambda3 = np.asarray(lambda3, dtype=np.float64)
    floor = tau * min_lambda3
    return np.where(lambda3 < floor, lambda3, np.where(lambda3 < 0, floor, 0.0))


def fat_vesselness(
    lambda1: np.ndarray,
    lambda2: np.ndarray,
    lambda3: np.ndarray,
    lambda_rho: np.ndarray,
    lambda_nu: np.ndarray,
) -> np.ndarray:
    """
    Fractional anisotropy of (lambda2, lambda_rho, lambda_nu).

    The mean is taken over the raw eigenvalues. An all-zero triple gives 0.
    """
    mean = (np.asarray(lambda1) + lambda2 + lambda3) / 3.0
    numerator = (
        (lambda2 - mean) ** 2 + (lambda_rho - mean) ** 2 + (lambda_nu - mean) ** 2
    )
    denominator = (
        np.asarray(lambda2) ** 2
        + np.asarray(lambda_rho) ** 2
        + np.asarray(lambda_nu) ** 2
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denominator > 0, numerator / denominator, 0.0)
    return np.sqrt(1.5 * ratio)


def r_lambda(
    lambda2: np.ndarray,
    lambda_rho: np.ndarray,
    v_fat: np.ndarray,
    max_gap: float,
) -> np.ndarray:
    """Per-scale response: 0 off vessel, 1 at the largest gap, 1 - v_FAT otherwise."""
    lambda2 = np.asarray(lambda2, dtype=np.float64)
    lambda_rho = np.asarray(lambda_rho, dtype=np.float64)
    gap = lambda_rho - lambda2

    off = (lambda_rho > gap) | (lambda_rho >= 0) | (lambda2 >= 0)
    top = np.abs(gap - max_gap) <= MAX_GAP_RTOL * abs(max_gap)
    response = np.where(off, 0.0, np.where(top, 1.0, 1.0 - v_fat))

    # v_FAT may exceed 1 once the regularized values outgrow the raw ones.
    return np.clip(response, 0.0, 1.0)


def _scale_response(
    lambdas: np.ndarray,
    cfg: MfatConfig,
    domain: Optional[np.ndarray],
) -> tuple[np.ndarray, float, float]:
    """R_lambda of one scale from the sorted eigenvalues, shape (voxels, 3)."""
    lambda1, lambda2, lambda3 = lambdas[:, 0], lambdas[:, 1], lambdas[:, 2]

    reduced = lambda3 if domain is None else lambda3[domain]
    min_lambda3 = float(reduced.min()) if reduced.size else 0.0
    lambda_rho = regularize_eigen(lambda3, min_lambda3, cfg.tau_rho)
    lambda_nu = regularize_eigen(lambda3, min_lambda3, cfg.tau_nu)

    gap = lambda_rho - lambda2
    reduced = gap if domain is None else gap[domain]
    max_gap = float(reduced.max()) if reduced.size else 0.0

    v_fat = fat_vesselness(lambda1, lambda2, lambda3, lambda_rho, lambda_nu)
    return r_lambda(lambda2, lambda_rho, v_fat, max_gap), min_lambda3, max_gap


def mfat_scales(
    data: np.ndarray,
    cfg: MfatConfig,
    domain: Optional[np.ndarray] = None,
    threads: int = 1,
) -> Iterator[tuple[ScaleStep, np.ndarray, np.ndarray]]:
    """
    Run the multi-scale accumulation on a 2D or 3D array one scale at a time.

    Yields the scale state with the sorted eigenvalues and v1 of that scale.
    A 2D eigenpair (m1, m2) is lifted to (m1, m2, m2).
    `domain` limits the per-scale minimum and maximum to a region.
    """
    data = np.asarray(data, dtype=np.float64)
    flat_domain = None if domain is None else np.ravel(np.asarray(domain, dtype=bool))

    v_mfat = None
    for index, sigma in enumerate(cfg.sigmas):
        values, v1 = eigen_field(_hessian_components(data, sigma), threads)
        lambdas = values if values.shape[1] == 3 else values[:, [0, 1, 1]]
        response, min_lambda3, max_gap = _scale_response(lambdas, cfg, flat_domain)

        if v_mfat is None:
            v_mfat = response.copy()
        else:
            v_mfat = np.maximum(
                v_mfat + cfg.delta * np.tanh(response - cfg.delta),
                response,
            )

        logger.debug(
            "Scale %.3g: min lambda3 %.4g, max gap %.4g, mean response %.4g.",
            sigma,
            min_lambda3,
            max_gap,
            response.mean(),
        )
        step = ScaleStep(index, sigma, response, v_mfat, min_lambda3, max_gap)
        yield step, lambdas, v1


def _accumulate(
    data: np.ndarray,
    cfg: MfatConfig,
    domain: Optional[np.ndarray],
    threads: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    best = lambda2 = lambda3 = v1 = winner = v_mfat = None
    for step, lambdas, vectors in mfat_scales(data, cfg, domain, threads):
        v_mfat = step.v_mfat
        if best is None:
            best = step.r_lambda
            lambda2 = lambdas[:, 1].copy()
            lambda3 = lambdas[:, 2].copy()
            v1 = vectors.copy()
            winner = np.zeros(best.shape, dtype=np.int8)
            continue
        # Strict comparison keeps ties at the smaller scale.
        better = step.r_lambda > best
        best = np.where(better, step.r_lambda, best)
        lambda2[better] = lambdas[better, 1]
        lambda3[better] = lambdas[better, 2]
        v1[better] = vectors[better]
        winner[better] = step.index

    shape = data.shape
    return (
        v_mfat.reshape(shape),
        v1.reshape((*shape, len(shape))),
        lambda2.reshape(shape),
        lambda3.reshape(shape),
        winner.reshape(shape),
    )


def mfat(
    volume: Volume3,
    cfg: Optional[MfatConfig] = None,
    domain: Optional[BinaryMask3] = None,
    threads: int = 1,
) -> VesselnessResult:
    """Multi-scale vesselness with the eigen fields of the winning scales."""
    if cfg is None:
        cfg = MfatConfig()
    if domain is not None:
        check_same_geometry(("volume", volume), ("eigen domain", domain))

    v_mfat, v1, lambda2, lambda3, winner = _accumulate(
        volume.data,
        cfg,
        None if domain is None else domain.data,
        threads,
    )
    for field in (v1, lambda2, lambda3, winner):
        field.flags.writeable = False

    return VesselnessResult(volume.with_data(v_mfat), v1, lambda2, lambda3, winner)


def mfat_2d(
    image: np.ndarray,
    cfg: Optional[MfatConfig] = None,
    domain: Optional[np.ndarray] = None,
) -> PlanarVesselness:
    """Vesselness of a 2D image, using the 3D response on lifted eigenvalues."""
    if cfg is None:
        cfg = MfatConfig()
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InvalidParameterError("image", image.shape, "a 2D image")

    v_mfat, v1, lambda2, _, winner = _accumulate(image, cfg, domain, threads=1)
    return PlanarVesselness(v_mfat, v1, lambda2, winner)
