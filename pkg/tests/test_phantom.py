"""Testing the synthetic scene generator."""

import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from chivessel import phantom
from chivessel.exceptions import ConfigError, InvalidParameterError
from chivessel.volume import Volume3

SMALL_SPEC = phantom.PhantomSpec(
    shape=(40, 40, 40),
    tubes=(phantom.TubeSpec(((12.0, 20.0, 20.0), (28.0, 20.0, 20.0)), 2.0),),
    blobs=(phantom.BlobSpec((20.0, 28.0, 20.0), 3.0),),
    noise=0.05,
    seed=11,
)


def test_tube_volume() -> None:
    """Test the voxel count and the intensity profile of a straight tube."""
    empty = Volume3(np.zeros((64, 64, 64)))
    data, mask = phantom.generate_tube([(0, 20, 20), (63, 20, 20)], 3.0, 1.0, empty)

    # 29 voxels of the disk of radius 3 on each of the 64 slices.
    assert mask.count == 29 * 64
    assert abs(mask.count - math.pi * 9 * 63) <= 0.15 * math.pi * 9 * 63
    assert data.data.max() == 1.0

    # Flat out to half the radius, then falling to exp(-1/2) at the radius.
    assert data.data[10, 20, 20] == 1.0
    assert data.data[10, 21, 20] == 1.0
    assert data.data[10, 22, 20] == pytest.approx(math.exp(-0.25 / 4.5))
    assert data.data[10, 23, 20] == pytest.approx(math.exp(-0.5))
    assert data.data[mask.data].min() == pytest.approx(math.exp(-0.5))


def test_tube_support() -> None:
    """Test that a tube draws nothing outside of its ground truth."""
    empty = Volume3(np.zeros((40, 40, 40)))
    for radius in (1.0, 2.0, 3.0):
        path = [(5, 8, 10), (30, 25, 28)]
        data, mask = phantom.generate_tube(path, radius, 1.0, empty)
        assert np.array_equal(data.data > 0, mask.data)

    # Bright tubes next to each other keep their own support.
    first, mask = phantom.generate_tube([(5, 15, 15), (30, 15, 15)], 2.0, 1.0, empty)
    both, other = phantom.generate_tube([(5, 21, 15), (30, 21, 15)], 2.0, 1.0, first)
    assert np.array_equal(both.data > 0, mask.data | other.data)


def test_blob_volume() -> None:
    """Test the voxel count of a sphere."""
    empty = Volume3(np.zeros((41, 41, 41)))
    data, mask = phantom.generate_blob((20, 20, 20), 5.0, 2.0, empty)
    assert mask.count == 515
    assert abs(mask.count - 4 / 3 * math.pi * 125) < 0.05 * 4 / 3 * math.pi * 125
    assert np.all(data.data[mask.data] == 2.0)


def test_spacing_is_honored() -> None:
    """Test that primitive sizes are in millimeters."""
    empty = Volume3(np.zeros((41, 41, 41)), (2.0, 2.0, 2.0))
    _, mask = phantom.generate_blob((40, 40, 40), 10.0, 1.0, empty)
    assert mask.count == 515


def test_overlaps() -> None:
    """Test that blobs add up while tubes keep the brighter value."""
    empty = Volume3(np.zeros((30, 30, 30)))
    once, _ = phantom.generate_blob((15, 15, 15), 4.0, 1.0, empty)
    twice, _ = phantom.generate_blob((15, 15, 15), 4.0, 1.0, once)
    assert np.array_equal(twice.data, 2 * once.data)

    path = [(5, 15, 15), (25, 15, 15)]
    once, _ = phantom.generate_tube(path, 2.0, 1.0, empty)
    again, _ = phantom.generate_tube(path, 2.0, 1.0, once)
    assert np.array_equal(again.data, once.data)


def test_tube_edge_cases() -> None:
    """Test zero intensity, zero length paths and disjoint tubes."""
    empty = Volume3(np.zeros((30, 30, 30)))
    path = [(5, 15, 15), (25, 15, 15)]

    data, mask = phantom.generate_tube(path, 2.0, 0.0, empty)
    assert not data.data.any()
    assert mask.count > 0

    data, mask = phantom.generate_tube([(5, 5, 5), (5, 5, 5)], 2.0, 1.0, empty)
    assert not data.data.any()
    assert mask.count == 0

    _, first = phantom.generate_tube([(5, 5, 5), (25, 5, 5)], 2.0, 1.0, empty)
    _, second = phantom.generate_tube([(5, 20, 20), (25, 20, 20)], 2.0, 1.0, empty)
    assert not (first.data & second.data).any()

    # A polyline covers both of its segments.
    bend = [(5, 5, 5), (15, 5, 5), (15, 20, 5)]
    _, bent = phantom.generate_tube(bend, 1.0, 1.0, empty)
    assert bent.data[5, 5, 5]
    assert bent.data[15, 12, 5]
    assert bent.data[15, 20, 5]


def test_primitive_errors() -> None:
    """Test out of grid positions and bad sizes."""
    empty = Volume3(np.zeros((20, 20, 20)))
    with pytest.raises(InvalidParameterError):
        phantom.generate_tube([(-1, 5, 5), (5, 5, 5)], 1.0, 1.0, empty)
    with pytest.raises(InvalidParameterError):
        phantom.generate_tube([(5, 5, 5), (5, 5, 19.5)], 1.0, 1.0, empty)
    with pytest.raises(InvalidParameterError):
        phantom.generate_tube([(5, 5, 5), (6, 5, 5)], 0.0, 1.0, empty)
    with pytest.raises(InvalidParameterError):
        phantom.generate_tube([(5, 5, 5), (6, 5, 5)], 1.0, -1.0, empty)
    with pytest.raises(InvalidParameterError):
        phantom.generate_blob((10, 10, 25), 1.0, 1.0, empty)
    with pytest.raises(InvalidParameterError):
        phantom.generate_blob((10, 10, 10), -2.0, 1.0, empty)


def test_scene_determinism() -> None:
    """Test that the seed alone decides the noise."""
    first = phantom.generate_scene(SMALL_SPEC)
    second = phantom.generate_scene(SMALL_SPEC)
    other = phantom.generate_scene(SMALL_SPEC, rng_seed=12)

    assert first.rng_seed == 11
    assert other.rng_seed == 12
    for name in ("r2star_like", "chi_para_like", "chi_dia_like"):
        assert np.array_equal(getattr(first, name).data, getattr(second, name).data)
        assert not np.array_equal(getattr(first, name).data, getattr(other, name).data)
    assert np.array_equal(first.gt_vessels.data, other.gt_vessels.data)
    assert np.array_equal(first.gt_blobs.data, other.gt_blobs.data)


def test_scene_contents() -> None:
    """Test the ground truths, the brain and the blob free diamagnetic map."""
    spec = phantom.PhantomSpec(
        shape=SMALL_SPEC.shape,
        tubes=SMALL_SPEC.tubes,
        blobs=SMALL_SPEC.blobs,
        noise=0.0,
    )
    scene = phantom.generate_scene(spec)

    assert scene.gt_vessels.count > 0
    assert scene.gt_blobs.count > 0
    assert not (scene.gt_vessels.data & scene.gt_blobs.data).any()
    assert not (scene.gt_vessels.data & ~scene.brain.data).any()
    assert not (scene.gt_blobs.data & ~scene.brain.data).any()

    # Blobs show on the paramagnetic maps only.
    blobs = scene.gt_blobs.data
    difference = scene.chi_para_like.data[blobs] - scene.chi_dia_like.data[blobs]
    assert np.allclose(difference, 1.0)
    assert scene.chi_dia_like.data[blobs].max() < 0.05
    vessels = scene.gt_vessels.data
    assert scene.chi_dia_like.data[vessels].max() == 1.0
    assert scene.chi_dia_like.data[vessels].min() == pytest.approx(math.exp(-0.5))
    assert not scene.chi_dia_like.data[~vessels].any()

    # The brain ellipsoid spans 90 % of the grid on every axis.
    assert scene.brain.data[20, 20, 2]
    assert not scene.brain.data[20, 20, 0]
    assert not scene.brain.data[0, 0, 0]


def test_scene_gains() -> None:
    """Test per map gains of the primitives."""
    spec = phantom.PhantomSpec(
        shape=(40, 40, 40),
        tubes=(
            phantom.TubeSpec(
                ((12.0, 20.0, 20.0), (28.0, 20.0, 20.0)),
                radius=2.0,
                intensity=2.0,
                gains=(1.0, 0.5, 0.0),
            ),
        ),
        noise=0.0,
    )
    scene = phantom.generate_scene(spec)
    assert scene.r2star_like.data.max() == 2.0
    assert np.array_equal(scene.chi_para_like.data, scene.r2star_like.data / 2)
    assert not scene.chi_dia_like.data.any()


def test_default_scene() -> None:
    """Test that the default scene is valid with disjoint ground truths."""
    scene = phantom.generate_scene(phantom.default_scene_spec())
    assert scene.brain.dims == (128, 128, 128)
    assert scene.gt_vessels.count > 0
    assert scene.gt_blobs.count > 0
    assert not (scene.gt_vessels.data & scene.gt_blobs.data).any()


def test_scene_errors() -> None:
    """Test primitives leaving the brain and overlapping ground truths."""
    leaving = phantom.PhantomSpec(
        shape=(32, 32, 32),
        tubes=(phantom.TubeSpec(((0.0, 15.0, 15.0), (31.0, 15.0, 15.0)), 2.0),),
    )
    with pytest.raises(ConfigError) as error:
        phantom.generate_scene(leaving)
    assert error.value.field == "tubes[0]"

    overlapping = phantom.PhantomSpec(
        shape=(40, 40, 40),
        tubes=SMALL_SPEC.tubes,
        blobs=(phantom.BlobSpec((20.0, 21.0, 20.0), 3.0),),
    )
    with pytest.raises(ConfigError) as error:
        phantom.generate_scene(overlapping)
    assert error.value.field == "blobs"


def test_spec_file(tmp_path: Path) -> None:
    """Test reading a scene file and rendering it back."""
    path = tmp_path / "scene.yaml"
    path.write_text(SMALL_SPEC.to_yaml(), encoding="utf-8")
    assert phantom.load_phantom_spec(path) == SMALL_SPEC

    data = yaml.safe_load(SMALL_SPEC.to_yaml())
    gains = data["tubes"][0]["gains"]
    assert gains == {"r2star": 1.0, "chi_para": 1.0, "chi_dia": 1.0}
    assert data["blobs"][0]["gains"] == {"r2star": 1.0, "chi_para": 1.0}

    tube = {"path": [[1, 2, 3], [4, 5, 6]], "radius": 1, "gains": {"chi_dia": 0}}
    spec = phantom.spec_from_dict({"tubes": [tube]})
    assert spec.tubes[0].gains == (1.0, 1.0, 0.0)
    assert spec.shape == (128, 128, 128)


def test_spec_errors(tmp_path: Path) -> None:
    """Test that broken scene files name the field and line."""
    path = tmp_path / "scene.yaml"
    path.write_text("shape: [32, 32, 32]\nnoise: 0.1\ncolour: red\n", encoding="utf-8")
    with pytest.raises(ConfigError) as error:
        phantom.load_phantom_spec(path)
    assert error.value.field == "colour"
    assert error.value.line == 3

    path.write_text(
        "seed: 1\ntubes:\n  - path: [[1, 2, 3]]\n    radius: big\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError) as error:
        phantom.load_phantom_spec(path)
    assert error.value.field == "tubes[0].radius"
    assert error.value.line == 2

    for data, field in (
        ({"shape": [32, 32]}, "shape"),
        ({"shape": [32, 32, 0]}, "shape"),
        ({"spacing": [1, 1, -1]}, "spacing"),
        ({"noise": -0.1}, "noise"),
        ({"brain_fraction": 0.8}, "brain_fraction"),
        ({"seed": -3}, "seed"),
        ({"tubes": [{"radius": 1}]}, "tubes[0].path"),
        ({"tubes": [{"path": [[1, 2]], "radius": 1}]}, "tubes[0].path"),
        ({"blobs": [{"center": [1, 2, 3], "radius": 1, "size": 2}]}, "blobs[0]"),
        (
            {"blobs": [{"center": [1, 2, 3], "radius": 1, "gains": {"chi_dia": 1}}]},
            "blobs[0].gains",
        ),
    ):
        with pytest.raises(ConfigError) as error:
            phantom.spec_from_dict(data)
        assert error.value.field == field
