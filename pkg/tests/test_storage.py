"""Testing NIfTI input and output, staged writes and manifests."""

import json
import logging
from pathlib import Path

import nibabel as nib
import numpy as np
import pytest

from chivessel import storage
from chivessel.exceptions import VolumeReadError, VolumeWriteError
from chivessel.volume import BinaryMask3, Volume3, mip_slabs

rng = np.random.default_rng(1717)

AFFINE = np.array(
    [
        [0.5, 0.0, 0.0, -10.0],
        [0.0, 0.75, 0.0, 4.0],
        [0.0, 0.0, 2.0, 1.5],
        [0.0, 0.0, 0.0, 1.0],
    ],
)


def test_volume_round_trip(tmp_path: Path) -> None:
    """Test that values, spacing and affine survive a write and a read."""
    volume = Volume3(rng.normal(size=(6, 5, 4)), (0.5, 0.75, 2.0), AFFINE)
    path = tmp_path / "volume.nii.gz"
    storage.save_volume(volume, path)

    loaded = storage.load_volume(path)
    assert loaded.dims == (6, 5, 4)
    assert loaded.spacing == (0.5, 0.75, 2.0)
    assert np.allclose(loaded.affine, AFFINE)
    assert np.allclose(loaded.data, volume.data.astype(np.float32))


def test_mask_round_trip(tmp_path: Path) -> None:
    """Test that masks are written as 8-bit 0 and 1."""
    mask = BinaryMask3(rng.random((5, 5, 5)) < 0.3, (1.0, 1.0, 1.5))
    path = tmp_path / "mask.nii"
    storage.save_mask(mask, path)

    image = nib.load(path)
    assert image.get_data_dtype() == np.uint8
    assert set(np.unique(np.asanyarray(image.dataobj)).tolist()) <= {0, 1}

    loaded = storage.load_mask(path)
    assert np.array_equal(loaded.data, mask.data)
    assert loaded.spacing == (1.0, 1.0, 1.5)
    # Without an affine, the written one is the spacing diagonal.
    assert np.allclose(loaded.affine, np.diag([1.0, 1.0, 1.5, 1.0]))


def test_mip_stack_file(tmp_path: Path) -> None:
    """Test that slab images are stacked along the last axis."""
    volume = Volume3(rng.normal(size=(4, 3, 8)))
    stack = mip_slabs(volume, 4.0)
    path = tmp_path / "mip.nii.gz"
    storage.save_mip_stack(stack, path)

    loaded = storage.load_volume(path)
    assert loaded.dims == (4, 3, stack.count)
    assert np.allclose(loaded.data[..., 0], stack.slabs[0].astype(np.float32))


def test_mip_stack_geometry(tmp_path: Path) -> None:
    """Test the affine and spacing of slabs projected along the first axis."""
    affine = np.diag([2.0, 1.0, 1.5, 1.0])
    affine[:3, 3] = (-10.0, 4.0, 7.0)
    volume = Volume3(rng.normal(size=(12, 3, 5)), (2.0, 1.0, 1.5), affine)
    stack = mip_slabs(volume, 8.0, axis=0)
    assert stack.slab_extents == [(0, 3), (2, 5), (4, 7), (6, 9), (8, 11)]
    path = tmp_path / "mip_axis0.nii.gz"
    storage.save_mip_stack(stack, path)

    loaded = storage.load_volume(path)
    assert loaded.dims == (3, 5, stack.count)
    assert loaded.spacing == (1.0, 1.5, 4.0)
    expected = np.array(
        [
            [0.0, 0.0, 4.0, -10.0],
            [1.0, 0.0, 0.0, 4.0],
            [0.0, 1.5, 0.0, 7.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    )
    assert np.allclose(loaded.affine, expected)
    assert np.allclose(loaded.data[..., 2], stack.slabs[2].astype(np.float32))

    # Slab 2 starts at slice 4 of the projection axis.
    assert np.allclose(loaded.affine @ [1, 2, 2, 1], affine @ [4, 1, 2, 1])


def test_read_errors(tmp_path: Path) -> None:
    """Test missing files, wrong suffixes, broken files and wrong ranks."""
    with pytest.raises(VolumeReadError):
        storage.load_volume(tmp_path / "missing.nii.gz")

    text = tmp_path / "volume.txt"
    text.write_text("1 2 3\n", encoding="utf-8")
    with pytest.raises(VolumeReadError):
        storage.load_volume(text)

    broken = tmp_path / "broken.nii.gz"
    broken.write_bytes(b"not a nifti file")
    with pytest.raises(VolumeReadError):
        storage.load_volume(broken)

    flat = tmp_path / "flat.nii.gz"
    nib.save(nib.Nifti1Image(np.zeros((4, 4), dtype=np.float32), np.eye(4)), flat)
    with pytest.raises(VolumeReadError):
        storage.load_volume(flat)

    frames = tmp_path / "frames.nii.gz"
    image = nib.Nifti1Image(np.zeros((3, 3, 3, 2), dtype=np.float32), np.eye(4))
    nib.save(image, frames)
    with pytest.raises(VolumeReadError):
        storage.load_volume(frames)


def test_single_frame_is_squeezed(tmp_path: Path) -> None:
    """Test that a 4D file with one frame reads as a volume."""
    data = rng.normal(size=(3, 4, 5, 1)).astype(np.float32)
    path = tmp_path / "frame.nii.gz"
    nib.save(nib.Nifti1Image(data, np.eye(4)), path)

    loaded = storage.load_volume(path)
    assert loaded.dims == (3, 4, 5)
    assert np.allclose(loaded.data, data[..., 0])


def test_input_cleanup(tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    """Test that non-finite voxels are zeroed and masks binarized, with a warning."""
    data = np.ones((3, 3, 3), dtype=np.float32)
    data[0, 0, 0] = np.nan
    data[1, 1, 1] = np.inf
    path = tmp_path / "holes.nii.gz"
    nib.save(nib.Nifti1Image(data, np.eye(4)), path)

    with caplog.at_level(logging.WARNING, logger="chivessel.storage"):
        volume = storage.load_volume(path)
    assert "2 non-finite voxels" in caplog.text
    assert volume.data[0, 0, 0] == 0.0
    assert volume.data[1, 1, 1] == 0.0
    assert volume.data.sum() == 25.0

    labels = np.zeros((3, 3, 3), dtype=np.float32)
    labels[0] = 2.0
    labels[1] = 1.0
    path = tmp_path / "labels.nii.gz"
    nib.save(nib.Nifti1Image(labels, np.eye(4)), path)

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="chivessel.storage"):
        mask = storage.load_mask(path)
    assert "binarizing" in caplog.text
    assert mask.count == 18


def test_output_writer(tmp_path: Path) -> None:
    """Test that staged files appear under their names only on commit."""
    out = tmp_path / "nested" / "out"
    writer = storage.OutputWriter(out)
    writer.text("notes.txt", "hello\n")
    writer.json("report.json", {"b": 1, "a": [1.5, float("inf")]})
    writer.mask("mask.nii.gz", BinaryMask3(np.ones((2, 2, 2), dtype=bool)))

    assert not out.joinpath("notes.txt").exists()
    hashes = writer.hashes()
    assert sorted(hashes) == ["mask.nii.gz", "notes.txt", "report.json"]
    assert hashes["notes.txt"] == storage.sha256_text("hello\n")

    with pytest.raises(ValueError, match="staged twice"):
        writer.stage_path("notes.txt")

    published = writer.commit()
    assert [path.name for path in published] == [
        "mask.nii.gz",
        "notes.txt",
        "report.json",
    ]
    assert sorted(path.name for path in out.iterdir()) == [
        "mask.nii.gz",
        "notes.txt",
        "report.json",
    ]
    assert storage.sha256_file(out / "notes.txt") == hashes["notes.txt"]
    assert json.loads((out / "report.json").read_text(encoding="utf-8")) == {
        "a": [1.5, "inf"],
        "b": 1,
    }


def test_output_writer_discard(tmp_path: Path) -> None:
    """Test that discarding leaves the directory empty."""
    writer = storage.OutputWriter(tmp_path)
    writer.text("notes.txt", "hello\n")
    writer.volume("volume.nii.gz", Volume3(np.zeros((2, 2, 2))))
    writer.discard()
    assert list(tmp_path.iterdir()) == []
    assert writer.commit() == []


def test_output_writer_on_a_file(tmp_path: Path) -> None:
    """Test that an output directory clashing with a file is a write error."""
    blocker = tmp_path / "taken"
    blocker.write_text("", encoding="utf-8")
    with pytest.raises(VolumeWriteError):
        storage.OutputWriter(blocker)


def test_dump_json() -> None:
    """Test the stable layout and the non-finite values."""
    text = storage.dump_json({"z": -float("inf"), "a": {"c": 1, "b": "é"}})
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"z"')
    assert text.index('"b"') < text.index('"c"')
    assert "é" in text
    assert json.loads(text) == {"z": "-inf", "a": {"c": 1, "b": "é"}}


def test_render_manifest() -> None:
    """Test the sections and ordering of the manifest."""
    manifest = storage.render_manifest(
        "1.2.3",
        "abc",
        {"k_small": 1.0, "gamma1": 0.5, "sigmas": [0.5, 1.0]},
        {"r2star": "11", "chi_para": None},
        {"vessel_mask_para.nii.gz": "22", "manifest_less.txt": "33"},
    )
    assert manifest.splitlines() == [
        "chivessel 1.2.3",
        "config_sha256 abc",
        "",
        "[config]",
        "gamma1 = 0.5",
        "k_small = 1.0",
        "sigmas = [0.5, 1.0]",
        "",
        "[inputs]",
        "chi_para -",
        "r2star 11",
        "",
        "[outputs]",
        "manifest_less.txt 33",
        "vessel_mask_para.nii.gz 22",
    ]
    assert manifest.endswith("\n")
