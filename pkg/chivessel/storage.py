"""Deal with NIfTI files, staged outputs and run manifests."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Optional, Union

import nibabel as nib
import numpy as np
from nibabel.filebasedimages import ImageFileError

from .exceptions import VolumeReadError, VolumeWriteError
from .volume import BinaryMask3, MipStack, Volume3

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

NIFTI_SUFFIXES = (".nii", ".nii.gz")


def _load_image(path: PathLike) -> tuple[np.ndarray, nib.Nifti1Image]:
    path = Path(path)
    if not path.is_file():
        raise VolumeReadError(path, "no such file")
    if not path.name.endswith(NIFTI_SUFFIXES):
        raise VolumeReadError(path, "expected a .nii or .nii.gz file")

    try:
        image = nib.load(path)
        data = image.get_fdata(dtype=np.float64)
    except (OSError, ValueError, ImageFileError) as error:
        raise VolumeReadError(path, str(error)) from error

    # Trailing singleton dims (e.g. a 4D file holding one frame) are dropped.
    while data.ndim > 3 and data.shape[-1] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise VolumeReadError(path, f"expected a 3D volume, got shape {data.shape}")

    return data, image


def _spacing(image: nib.Nifti1Image) -> tuple[float, float, float]:
    zooms = image.header.get_zooms()[:3]
    return tuple(float(z) if z > 0 else 1.0 for z in zooms)


def load_volume(path: PathLike) -> Volume3:
    """Read a scalar volume, replacing non-finite voxels by 0."""
    data, image = _load_image(path)

    bad = ~np.isfinite(data)
    if bad.any():
        logger.warning("%s: %d non-finite voxels replaced by 0.", path, int(bad.sum()))
        data = np.where(bad, 0.0, data)

    return Volume3(data, _spacing(image), image.affine, image.header)


def load_mask(path: PathLike) -> BinaryMask3:
    """Read a binary mask; any non-zero voxel counts as foreground."""
    data, image = _load_image(path)

    data = np.nan_to_num(data, nan=0.0)
    if not np.isin(data, (0.0, 1.0)).all():
        logger.warning("%s: mask holds values other than 0 and 1, binarizing.", path)

    return BinaryMask3(data != 0, _spacing(image), image.affine, image.header)


def _nifti(
    data: np.ndarray,
    grid: Union[Volume3, BinaryMask3],
) -> nib.Nifti1Image:
    affine = grid.affine
    if affine is None:
        affine = np.diag([*grid.spacing, 1.0])
    header = grid.header.copy() if isinstance(grid.header, nib.Nifti1Header) else None

    image = nib.Nifti1Image(data, affine, header)
    image.header.set_data_dtype(data.dtype)
    image.header.set_zooms(grid.spacing[: data.ndim] + (1.0,) * max(0, data.ndim - 3))
    # Scaling from the source header would corrupt integer masks.
    image.header.set_slope_inter(1.0, 0.0)
    return image


def write_nifti(
    data: np.ndarray,
    grid: Union[Volume3, BinaryMask3],
    path: PathLike,
) -> None:
    """Write an array as NIfTI with the affine and spacing of `grid`."""
    path = Path(path)
    try:
        nib.save(_nifti(data, grid), path)
    except OSError as error:
        raise VolumeWriteError(path, str(error)) from error


def save_volume(volume: Volume3, path: PathLike) -> None:
    """Write a scalar volume as float32 NIfTI."""
    write_nifti(volume.data.astype(np.float32), volume, path)


def save_mask(mask: BinaryMask3, path: PathLike) -> None:
    """Write a mask as an 8-bit NIfTI holding 0 and 1."""
    write_nifti(mask.data.astype(np.uint8), mask, path)


def save_mip_stack(stack: MipStack, path: PathLike) -> None:
    """Write the slab images as a volume with one slab per slice along the last axis."""
    save_volume(stack.as_volume(), path)


def sha256_file(path: PathLike) -> str:
    """Return the sha256 hex digest of a file."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as file:
        for chunk in iter(lambda: file.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    """Return the sha256 hex digest of a string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _json_safe(value: object) -> object:
    """Replace non-finite floats by strings, JSON has no infinity."""
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def dump_json(data: object) -> str:
    """Serialize to the stable JSON layout used by every report."""
    text = json.dumps(_json_safe(data), ensure_ascii=False, indent=2, sort_keys=True)
    return text + "\n"


class OutputWriter:
    """
    Stage output files under temporary names and publish them together.

    Nothing is visible under its final name until `commit` runs,
    so a failed run leaves no partial outputs behind.
    """

    def __init__(self, out_dir: PathLike) -> None:
        """Initialize the staging area."""
        self.out_dir = Path(out_dir)
        self.staged: dict[str, Path] = {}

        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise VolumeWriteError(self.out_dir, str(error)) from error
        if not self.out_dir.is_dir():
            raise VolumeWriteError(self.out_dir, "not a directory")

    def stage_path(self, name: str) -> Path:
        """Return the temporary path of an output, keeping its suffix."""
        if name in self.staged:
            err_msg = f"The output `{name}` is staged twice."
            raise ValueError(err_msg)
        temporary = self.out_dir.joinpath(f".partial-{name}")
        self.staged[name] = temporary
        return temporary

    def volume(self, name: str, volume: Volume3) -> None:
        """Stage a scalar volume."""
        save_volume(volume, self.stage_path(name))

    def mask(self, name: str, mask: BinaryMask3) -> None:
        """Stage a binary mask."""
        save_mask(mask, self.stage_path(name))

    def mip_stack(self, name: str, stack: MipStack) -> None:
        """Stage the slab images of a projection stack."""
        save_mip_stack(stack, self.stage_path(name))

    def text(self, name: str, text: str) -> None:
        """Stage a text file."""
        path = self.stage_path(name)
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as error:
            raise VolumeWriteError(path, str(error)) from error

    def json(self, name: str, data: object) -> None:
        """Stage a JSON document."""
        self.text(name, dump_json(data))

    def hashes(self) -> dict[str, str]:
        """Return the sha256 of every staged file, keyed by final name."""
        return {name: sha256_file(path) for name, path in sorted(self.staged.items())}

    def commit(self) -> list[Path]:
        """Rename every staged file to its final name."""
        published = []
        for name, temporary in sorted(self.staged.items()):
            final = self.out_dir.joinpath(name)
            try:
                temporary.replace(final)
            except OSError as error:
                raise VolumeWriteError(final, str(error)) from error
            published.append(final)
        self.staged.clear()
        return published

    def discard(self) -> None:
        """Remove every staged file."""
        for temporary in self.staged.values():
            temporary.unlink(missing_ok=True)
        self.staged.clear()


def render_manifest(
    version: str,
    config_hash: str,
    config_echo: dict[str, object],
    inputs: dict[str, Optional[str]],
    outputs: dict[str, str],
) -> str:
    """Render the plain-text run manifest: config echo and content hashes."""
    lines = [f"chivessel {version}", f"config_sha256 {config_hash}", "", "[config]"]
    lines += [
        f"{key} = {json.dumps(_json_safe(value))}"
        for key, value in sorted(config_echo.items())
    ]
    lines += ["", "[inputs]"]
    lines += [f"{name} {digest or '-'}" for name, digest in sorted(inputs.items())]
    lines += ["", "[outputs]"]
    lines += [f"{name} {digest}" for name, digest in sorted(outputs.items())]
    return "\n".join(lines) + "\n"
