"""Run the segmentation, evaluation, phantom and vesselness jobs end to end."""

import logging
import time
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .__about__ import APP_VERSION
from .config import INPUT_KEYS, PipelineConfig
from .conversions import to_ppm
from .exceptions import ConfigError, EmptyRegionError
from .metrics import (
    CONDITIONS,
    MetricsReport,
    central_slices,
    condition_region,
    dice,
    dice_restricted,
    masked_mean_susceptibility,
    rmse_psnr,
    vessel_proportion,
)
from .phantom import (
    PhantomSpec,
    default_scene_spec,
    generate_scene,
    load_phantom_spec,
)
from .refine import (
    ComponentTable,
    RefineConfig,
    anisotropy_sweep,
    component_table,
    remove_low_anisotropy,
)
from .region_grow import region_grow
from .seeds import SeedMaps, SeedTrace, generate_seeds
from .storage import (
    OutputWriter,
    load_mask,
    load_volume,
    render_manifest,
    sha256_file,
)
from .vesselness import MfatConfig, VesselnessResult, mfat
from .volume import BinaryMask3, Volume3, check_same_geometry

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Draws the QC images of one map into the writer.
OverlayRenderer = Callable[[OutputWriter, str, Volume3, BinaryMask3], None]

PHANTOM_FILES = {
    "r2star": "r2star.nii.gz",
    "chi_para": "chi_para.nii.gz",
    "chi_dia": "chi_dia.nii.gz",
    "brain_mask": "brain_mask.nii.gz",
    "gt_vessels": "gt_vessels.nii.gz",
    "gt_blobs": "gt_blobs.nii.gz",
}


class Inputs(NamedTuple):
    """The four maps of a segmentation run, on one grid."""

    r2star: Volume3
    chi_para: Volume3
    chi_dia: Volume3
    brain: BinaryMask3


@dataclass(frozen=True)
class MapResult:
    """Growing and refinement of one susceptibility map."""

    vesselness: VesselnessResult
    initial: BinaryMask3
    table: Optional[ComponentTable]
    final: BinaryMask3


@dataclass(frozen=True)
class Segmentation:
    """Every product of a segmentation run."""

    seeds: SeedMaps
    trace: SeedTrace
    para: MapResult
    dia: MapResult

    @property
    def union(self) -> BinaryMask3:
        """Voxels in either final mask."""
        return self.para.final.with_data(self.para.final.data | self.dia.final.data)


@contextmanager
def _stage(name: str) -> Iterator[None]:
    """Log the start, end and duration of a pipeline stage."""
    logger.info("%s...", name)
    start = time.perf_counter()
    yield
    logger.info("%s done in %.1f s.", name, time.perf_counter() - start)


def load_inputs(cfg: PipelineConfig) -> Inputs:
    """Read the four maps, convert the chi maps to ppm and check their grids."""
    missing = cfg.inputs.missing()
    if missing:
        raise ConfigError("missing input", field=missing[0])

    r2star = load_volume(cfg.inputs.r2star)
    chi_para = load_volume(cfg.inputs.chi_para)
    chi_dia = load_volume(cfg.inputs.chi_dia)
    brain = load_mask(cfg.inputs.brain_mask)
    check_same_geometry(
        ("r2star", r2star),
        ("chi_para", chi_para),
        ("chi_dia", chi_dia),
        ("brain_mask", brain),
    )

    chi_para = chi_para.with_data(to_ppm(chi_para.data, cfg.chi_units))
    chi_dia = chi_dia.with_data(to_ppm(chi_dia.data, cfg.chi_units))
    return Inputs(r2star, chi_para, chi_dia, brain)


def _grow_and_refine(
    chi: Volume3,
    seeds: BinaryMask3,
    brain: BinaryMask3,
    cfg: PipelineConfig,
    refine: RefineConfig,
) -> MapResult:
    domain = brain if cfg.seeds.eigen_domain == "brain" else None
    ves = mfat(chi, cfg.seeds.mfat, domain=domain, threads=cfg.threads)
    initial = region_grow(chi, seeds, ves, brain, cfg.grow)
    if cfg.skip_refine:
        return MapResult(ves, initial, None, initial)
    table = component_table(initial, ves.ani, refine)
    final = remove_low_anisotropy(initial, ves.ani, table=table)
    return MapResult(ves, initial, table, final)


def segment(inputs: Inputs, cfg: PipelineConfig) -> Segmentation:
    """Seeds, then growing and refinement of each susceptibility map."""
    trace = SeedTrace()
    with _stage("Seed generation"):
        seeds = generate_seeds(*inputs, cfg.seeds, cfg.threads, trace)

    jobs = (
        (inputs.chi_para, cfg.refine_para),
        (inputs.chi_dia, cfg.refine_dia),
    )
    with _stage("Region growing and refinement"):
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=2) as executor:
                futures = [
                    executor.submit(
                        _grow_and_refine, chi, seeds.final, inputs.brain, cfg, refine
                    )
                    for chi, refine in jobs
                ]
                para, dia = (future.result() for future in futures)
        else:
            para, dia = (
                _grow_and_refine(chi, seeds.final, inputs.brain, cfg, refine)
                for chi, refine in jobs
            )

    return Segmentation(seeds, trace, para, dia)


def _segment_report(
    result: Segmentation,
    cfg: PipelineConfig,
) -> dict[str, object]:
    values = {
        "seeds_large_voxels": result.seeds.large.count,
        "seeds_small_voxels": result.seeds.small.count,
        "seeds_final_voxels": result.seeds.final.count,
    }
    anisotropy = {}
    for name, part in (("para", result.para), ("dia", result.dia)):
        values[f"initial_{name}_voxels"] = part.initial.count
        values[f"final_{name}_voxels"] = part.final.count
        if part.table is not None:
            anisotropy[name] = {
                "components": part.table.components.count,
                "histogram": part.table.histogram(),
                "sweep": anisotropy_sweep(part.table),
            }
    if cfg.write_union:
        values["union_voxels"] = result.union.count

    report = MetricsReport(
        values,
        provenance={
            "version": APP_VERSION,
            "config_sha256": cfg.config_hash(),
            "inputs": {
                name: str(getattr(cfg.inputs, name)) for name in INPUT_KEYS
            },
        },
    )
    return {**report.to_dict(), "anisotropy": anisotropy}


def _stage_outputs(
    writer: OutputWriter,
    inputs: Inputs,
    result: Segmentation,
    cfg: PipelineConfig,
    overlays: Optional[OverlayRenderer],
) -> None:
    writer.mask("vessel_mask_para.nii.gz", result.para.final)
    writer.mask("vessel_mask_dia.nii.gz", result.dia.final)
    if cfg.write_union:
        writer.mask("vessel_mask_union.nii.gz", result.union)

    if cfg.dump_intermediates:
        writer.mask("seeds_large.nii.gz", result.seeds.large)
        writer.mask("seeds_small.nii.gz", result.seeds.small)
        writer.mask("seeds_final.nii.gz", result.seeds.final)
        writer.volume("r2star_highpass.nii.gz", result.trace.r2star_highpass)
        writer.volume("vmfat_r2star.nii.gz", result.trace.vmfat_r2star)
        writer.mip_stack("mip_product.nii.gz", result.trace.mip_product)
        for name, part in (("para", result.para), ("dia", result.dia)):
            writer.volume(f"vmfat_{name}.nii.gz", part.vesselness.v_mfat)
            writer.mask(f"initial_mask_{name}.nii.gz", part.initial)
            if part.table is not None:
                writer.text(f"components_{name}.tsv", part.table.to_tsv())

    if cfg.emit_overlays and overlays is not None:
        overlays(writer, "para", inputs.chi_para, result.para.final)
        overlays(writer, "dia", inputs.chi_dia, result.dia.final)

    writer.json("report.json", _segment_report(result, cfg))


def run_pipeline(
    cfg: PipelineConfig,
    overlays: Optional[OverlayRenderer] = None,
) -> tuple[BinaryMask3, BinaryMask3, MetricsReport]:
    """
    Segment the inputs of `cfg` and publish the outputs in `cfg.out`.

    Files appear only once every stage succeeded.
    """
    if cfg.out is None:
        raise ConfigError("no output directory", field="out")

    inputs = load_inputs(cfg)
    result = segment(inputs, cfg)

    writer = OutputWriter(cfg.out)
    try:
        _stage_outputs(writer, inputs, result, cfg, overlays)
        input_hashes = {
            name: sha256_file(getattr(cfg.inputs, name)) for name in INPUT_KEYS
        }
        manifest = render_manifest(
            APP_VERSION,
            cfg.config_hash(),
            cfg.echo(),
            input_hashes,
            writer.hashes(),
        )
        writer.text("manifest.txt", manifest)
        writer.commit()
    except BaseException:
        writer.discard()
        raise

    report = MetricsReport(
        {
            "final_para_voxels": result.para.final.count,
            "final_dia_voxels": result.dia.final.count,
        },
        provenance={"config_sha256": cfg.config_hash(), "out": str(cfg.out)},
    )
    logger.info("Wrote the outputs to %s.", cfg.out)
    return result.para.final, result.dia.final, report


def run_eval(
    pred_mask: PathLike,
    gt_mask: PathLike,
    central: Optional[int] = None,
    chi_pred: Optional[PathLike] = None,
    chi_ref: Optional[PathLike] = None,
    brain_mask: Optional[PathLike] = None,
    roi: Optional[PathLike] = None,
    chi: Optional[PathLike] = None,
    chi_units: str = "ppm",
) -> MetricsReport:
    """
    Compare a predicted vessel mask with a reference one.

    With `chi_pred`, `chi_ref` and `brain_mask`, RMSE and PSNR are added for
    every mask condition, the predicted mask being the vessel mask. With `roi`
    and `chi`, the vessel proportion and mean susceptibility of the ROI are added.
    """
    pred = load_mask(pred_mask)
    gt = load_mask(gt_mask)
    check_same_geometry(("predicted mask", pred), ("reference mask", gt))

    values = {"dsc": dice(pred, gt)}
    if central is not None:
        values["dsc_restricted"] = dice_restricted(
            pred, gt, central_slices(pred.dims, central)
        )

    children = []
    if chi_pred is not None or chi_ref is not None:
        if chi_pred is None or chi_ref is None or brain_mask is None:
            raise ConfigError(
                "error metrics need --chi-pred, --chi-ref and --brain-mask",
                field="chi_ref" if chi_ref is None else "chi_pred",
            )
        predicted = load_volume(chi_pred)
        reference = load_volume(chi_ref)
        brain = load_mask(brain_mask)
        check_same_geometry(
            ("vessel mask", pred),
            ("predicted chi", predicted),
            ("reference chi", reference),
            ("brain_mask", brain),
        )
        for condition in CONDITIONS:
            region = condition_region(brain, pred, condition)
            try:
                rmse, psnr = rmse_psnr(predicted, reference, region)
            except EmptyRegionError as error:
                logger.warning("No error metrics for %s: %s", condition, error)
                rmse = psnr = None
            children.append(MetricsReport({"rmse": rmse, "psnr": psnr}, condition))

    if roi is not None:
        if chi is None:
            raise ConfigError("ROI statistics need a chi map", field="chi")
        roi_mask = load_mask(roi)
        chi_map = load_volume(chi)
        chi_map = chi_map.with_data(to_ppm(chi_map.data, chi_units))
        values["vessel_proportion_pct"] = vessel_proportion(roi_mask, pred)
        values["mean_susceptibility"] = masked_mean_susceptibility(
            chi_map, roi_mask, pred, exclude_vessels=False
        )
        values["mean_susceptibility_without_vessels"] = masked_mean_susceptibility(
            chi_map, roi_mask, pred, exclude_vessels=True
        )

    return MetricsReport(
        values,
        provenance={"pred_mask": str(pred_mask), "gt_mask": str(gt_mask)},
        children=children,
    )


def run_phantom(
    out: PathLike,
    spec_path: Optional[PathLike] = None,
    seed: Optional[int] = None,
) -> list[Path]:
    """Write the volumes, masks and spec echo of a synthetic scene."""
    spec = default_scene_spec() if spec_path is None else load_phantom_spec(spec_path)
    scene = generate_scene(spec, seed)
    echo = PhantomSpec(
        spec.shape,
        spec.spacing,
        spec.tubes,
        spec.blobs,
        spec.noise,
        spec.brain_fraction,
        scene.rng_seed,
    )

    writer = OutputWriter(out)
    try:
        writer.volume(PHANTOM_FILES["r2star"], scene.r2star_like)
        writer.volume(PHANTOM_FILES["chi_para"], scene.chi_para_like)
        writer.volume(PHANTOM_FILES["chi_dia"], scene.chi_dia_like)
        writer.mask(PHANTOM_FILES["brain_mask"], scene.brain)
        writer.mask(PHANTOM_FILES["gt_vessels"], scene.gt_vessels)
        writer.mask(PHANTOM_FILES["gt_blobs"], scene.gt_blobs)
        writer.text("phantom.yaml", echo.to_yaml())
        return writer.commit()
    except BaseException:
        writer.discard()
        raise


def run_vesselness(
    volume_path: PathLike,
    out: PathLike,
    cfg: Optional[MfatConfig] = None,
    brain_mask: Optional[PathLike] = None,
    threads: int = 1,
) -> Path:
    """Write the multi-scale vesselness of a volume."""
    volume = load_volume(volume_path)
    domain = None if brain_mask is None else load_mask(brain_mask)
    with _stage("Vesselness"):
        result = mfat(volume, cfg, domain=domain, threads=threads)

    writer = OutputWriter(out)
    try:
        writer.volume("vmfat.nii.gz", result.v_mfat)
        writer.volume("anisotropy.nii.gz", result.ani)
        writer.volume(
            "winning_scale.nii.gz",
            result.v_mfat.with_data(result.winning_scale.astype(np.float64)),
        )
        writer.commit()
    except BaseException:
        writer.discard()
        raise
    return Path(out).joinpath("vmfat.nii.gz")
