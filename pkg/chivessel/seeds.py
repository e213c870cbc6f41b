"""
Seed generation.

Large vessel seeds come from R2*, small vessel seeds from slab projections of
the susceptibility product.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import EmptyRegionError, InvalidParameterError
from .filters import InverseHammingSpec, highpass_inverse_hamming, inpaint_outside_mask
from .vesselness import MfatConfig, mfat, mfat_2d
from .volume import (
    BinaryMask3,
    MipStack,
    Volume3,
    backproject,
    check_same_geometry,
    mip_slabs,
    sample_at_argmax,
)

logger = logging.getLogger(__name__)

STATS_DOMAINS = ("brain", "volume")


@dataclass(frozen=True)
class SeedConfig:
    """Thresholds, slab geometry and filters of the seed generation step."""

    k_large: float = 2.0
    k_small: float = 1.0
    slab_mm: float = 16.0
    mip_axis: int = 2
    stats_domain: str = "brain"
    eigen_domain: str = "volume"
    inpaint_max_iters: int = 400
    inpaint_tol: float = 1e-4
    hamming: InverseHammingSpec = field(default_factory=InverseHammingSpec)
    mfat: MfatConfig = field(default_factory=MfatConfig)

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if not self.k_small > 0:
            raise InvalidParameterError(
                "k_small",
                self.k_small,
                "a positive multiplier",
            )
        if not self.k_large > self.k_small:
            raise InvalidParameterError(
                "k_large",
                self.k_large,
                f"greater than k_small = {self.k_small}",
            )
        if not self.slab_mm > 0:
            raise InvalidParameterError("slab_mm", self.slab_mm, "a positive thickness")
        if self.mip_axis not in (0, 1, 2):
            raise InvalidParameterError("mip_axis", self.mip_axis, "one of 0, 1, 2")
        if self.stats_domain not in STATS_DOMAINS:
            raise InvalidParameterError(
                "stats_domain",
                self.stats_domain,
                f"one of {STATS_DOMAINS}",
            )
        if self.eigen_domain not in ("brain", "volume"):
            raise InvalidParameterError(
                "eigen_domain",
                self.eigen_domain,
                "one of ('brain', 'volume')",
            )


@dataclass
class SeedTrace:
    """Intermediate maps of the seed generation, filled in when requested."""

    r2star_highpass: Optional[Volume3] = None
    vmfat_r2star: Optional[Volume3] = None
    mip_product: Optional[MipStack] = None


class SeedMaps(NamedTuple):
    """Large, small and combined seed maps."""

    large: BinaryMask3
    small: BinaryMask3
    final: BinaryMask3


def _above(values: np.ndarray, region: np.ndarray, k: float) -> np.ndarray:
    """
    Strictly above mean + k * std of the values inside region.

    Empty regions give no seeds.
    """
    sample = values[region]
    if sample.size == 0:
        return np.zeros(values.shape, dtype=bool)
    return values > sample.mean() + k * sample.std()


def large_vessel_seeds(
    r2star: Volume3,
    brain: BinaryMask3,
    cfg: Optional[SeedConfig] = None,
    threads: int = 1,
    trace: Optional[SeedTrace] = None,
) -> BinaryMask3:
    """Seeds from the vesselness of the inpainted, high-passed R2* map."""
    if cfg is None:
        cfg = SeedConfig()
    check_same_geometry(("r2star", r2star), ("brain_mask", brain))
    if not brain.count:
        raise EmptyRegionError("brain mask")

    inpainted = inpaint_outside_mask(
        r2star,
        brain,
        cfg.inpaint_max_iters,
        cfg.inpaint_tol,
    )
    highpassed = highpass_inverse_hamming(inpainted, cfg.hamming, workers=threads)
    result = mfat(
        highpassed,
        cfg.mfat,
        domain=brain if cfg.eigen_domain == "brain" else None,
        threads=threads,
    )

    v = result.v_mfat.data
    region = brain.data if cfg.stats_domain == "brain" else np.ones(v.shape, dtype=bool)
    seeds = _above(v, region, cfg.k_large) & brain.data

    if trace is not None:
        trace.r2star_highpass = highpassed
        trace.vmfat_r2star = result.v_mfat

    logger.info("Large vessel seeds: %d voxels.", int(seeds.sum()))
    return brain.with_data(seeds)


def _slab_footprint(brain: BinaryMask3, stack: MipStack) -> np.ndarray:
    """In-plane pixels of every slab that see at least one brain voxel."""
    moved = np.moveaxis(brain.data, stack.axis, -1)
    return np.stack(
        [
            moved[..., first : last + 1].any(axis=-1)
            for first, last in stack.slab_extents
        ],
    )


def small_vessel_seeds(
    chi_para: Volume3,
    chi_dia: Volume3,
    large_seeds: BinaryMask3,
    brain: BinaryMask3,
    cfg: Optional[SeedConfig] = None,
    threads: int = 1,
    trace: Optional[SeedTrace] = None,
) -> BinaryMask3:
    """
    Seeds from 2D vesselness on slab projections of chi_para * |chi_dia|.

    Slab pixels whose winning voxel is already a large-vessel seed are
    zeroed before the 2D filter, and every slab is thresholded with its own
    statistics.
    """
    if cfg is None:
        cfg = SeedConfig()
    check_same_geometry(
        ("chi_para", chi_para),
        ("chi_dia", chi_dia),
        ("large seeds", large_seeds),
        ("brain_mask", brain),
    )

    product = chi_para.with_data(chi_para.data * np.abs(chi_dia.data))
    stack = mip_slabs(product, cfg.slab_mm, cfg.mip_axis)
    mip_seed = sample_at_argmax(large_seeds, stack)
    if cfg.stats_domain == "brain":
        footprint = _slab_footprint(brain, stack)
    else:
        footprint = np.ones(stack.slabs.shape, dtype=bool)
    eigen_domain = cfg.eigen_domain == "brain"

    def seed_slab(n: int) -> np.ndarray:
        image = stack.slabs[n] * (1.0 - mip_seed[n])
        planar = mfat_2d(image, cfg.mfat, domain=footprint[n] if eigen_domain else None)
        seeds = _above(planar.v_mfat, footprint[n], cfg.k_small) & footprint[n]
        logger.debug("Slab %d: %d seed pixels.", n, int(seeds.sum()))
        return seeds

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            seeds2d = list(executor.map(seed_slab, range(stack.count)))
    else:
        seeds2d = [seed_slab(n) for n in range(stack.count)]

    seeds = backproject(np.stack(seeds2d), stack).data & brain.data

    if trace is not None:
        trace.mip_product = stack

    logger.info(
        "Small vessel seeds: %d voxels from %d slabs.", int(seeds.sum()), stack.count
    )
    return brain.with_data(seeds)


def combine_seeds(large: BinaryMask3, small: BinaryMask3) -> BinaryMask3:
    """Union of two seed maps."""
    check_same_geometry(("large seeds", large), ("small seeds", small))
    return large.with_data(large.data | small.data)


def generate_seeds(
    r2star: Volume3,
    chi_para: Volume3,
    chi_dia: Volume3,
    brain: BinaryMask3,
    cfg: Optional[SeedConfig] = None,
    threads: int = 1,
    trace: Optional[SeedTrace] = None,
) -> SeedMaps:
    """Run both seed paths and combine them."""
    large = large_vessel_seeds(r2star, brain, cfg, threads, trace)
    small = small_vessel_seeds(chi_para, chi_dia, large, brain, cfg, threads, trace)
    return SeedMaps(large, small, combine_seeds(large, small))
