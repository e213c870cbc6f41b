"""Testing the overlap and error metrics."""

import math

import numpy as np
import pytest

from chivessel import metrics
from chivessel.exceptions import (
    EmptyRegionError,
    GeometryMismatchError,
    InvalidParameterError,
)
from chivessel.volume import BinaryMask3, Volume3

rng = np.random.default_rng(3030)


def naive_dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice from explicit voxel counting."""
    both = total = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        both += x and y
        total += x + y
    return 1.0 if total == 0 else 2 * both / total


def test_dice_examples() -> None:
    """Test identical, disjoint, nested and empty masks."""
    a = np.zeros((4, 4, 4), dtype=bool)
    b = np.zeros((4, 4, 4), dtype=bool)
    assert metrics.dice(BinaryMask3(a), BinaryMask3(b)) == 1.0

    a[0, 0, :2] = True
    assert metrics.dice(BinaryMask3(a), BinaryMask3(a)) == 1.0
    assert metrics.dice(BinaryMask3(a), BinaryMask3(b)) == 0.0

    b[0, 0, :] = True
    assert metrics.dice(BinaryMask3(a), BinaryMask3(b)) == pytest.approx(2 / 3)

    with pytest.raises(GeometryMismatchError):
        metrics.dice(BinaryMask3(a), BinaryMask3(b[:3]))


def test_dice_against_counting() -> None:
    """Test random masks against explicit counting, and symmetry."""
    for _ in range(100):
        density = rng.uniform(0.0, 0.5)
        a = rng.random((9, 8, 7)) < density
        b = rng.random((9, 8, 7)) < density
        value = metrics.dice(BinaryMask3(a), BinaryMask3(b))
        assert value == pytest.approx(naive_dice(a, b))
        assert value == metrics.dice(BinaryMask3(b), BinaryMask3(a))
        assert 0.0 <= value <= 1.0


def test_central_slices() -> None:
    """Test the position of the central slices."""
    slices = metrics.central_slices((128, 128, 128), 12)
    assert len(slices) == 36
    assert [index for axis, index in slices if axis == 0] == list(range(58, 70))
    assert metrics.central_slices((5, 6, 7), 1) == [(0, 2), (1, 2), (2, 3)]

    with pytest.raises(InvalidParameterError):
        metrics.central_slices((10, 10, 4), 5)
    with pytest.raises(InvalidParameterError):
        metrics.central_slices((10, 10, 10), 0)


def test_dice_restricted() -> None:
    """Test the restriction to slices against a slice by slice selection."""
    for _ in range(100):
        a = rng.random((10, 9, 8)) < 0.3
        b = rng.random((10, 9, 8)) < 0.3
        spec = [(0, 1), (0, 7), (1, 4), (2, 0), (2, 7)]

        region = np.zeros(a.shape, dtype=bool)
        region[1] = region[7] = True
        region[:, 4] = True
        region[:, :, 0] = region[:, :, 7] = True
        expected = naive_dice(a & region, b & region)

        got = metrics.dice_restricted(BinaryMask3(a), BinaryMask3(b), spec)
        assert got == pytest.approx(expected)

    # Every slice of one axis is the whole volume.
    every = [(0, index) for index in range(10)]
    assert metrics.dice_restricted(BinaryMask3(a), BinaryMask3(b), every) == (
        pytest.approx(metrics.dice(BinaryMask3(a), BinaryMask3(b)))
    )

    with pytest.raises(EmptyRegionError):
        metrics.dice_restricted(BinaryMask3(a), BinaryMask3(b), [])
    with pytest.raises(InvalidParameterError):
        metrics.dice_restricted(BinaryMask3(a), BinaryMask3(b), [(1, 9)])
    with pytest.raises(InvalidParameterError):
        metrics.dice_restricted(BinaryMask3(a), BinaryMask3(b), [(3, 0)])


def test_rmse_psnr() -> None:
    """Test exact matches, a constant offset and the triangle inequality."""
    ref = rng.uniform(-2.0, 2.0, (6, 6, 6))
    ref[0, 0, 0] = 2.0
    region = BinaryMask3(np.ones((6, 6, 6), dtype=bool))

    assert metrics.rmse_psnr(Volume3(ref), Volume3(ref), region) == (0.0, math.inf)

    rmse, psnr = metrics.rmse_psnr(Volume3(ref + 0.1), Volume3(ref), region)
    assert rmse == pytest.approx(0.1)
    assert psnr == pytest.approx(20 * math.log10(20.0))

    for _ in range(50):
        a, b, c = (Volume3(rng.normal(size=(6, 6, 6))) for _ in range(3))
        ab, _ = metrics.rmse_psnr(a, b, region)
        bc, _ = metrics.rmse_psnr(b, c, region)
        ac, _ = metrics.rmse_psnr(a, c, region)
        assert ac <= ab + bc + 1e-12

    with pytest.raises(EmptyRegionError):
        metrics.rmse_psnr(Volume3(ref), Volume3(ref), BinaryMask3.empty_like(region))


def test_roi_statistics() -> None:
    """Test the vessel proportion and the ROI means."""
    roi = np.zeros((4, 4, 4), dtype=bool)
    vessel = np.zeros((4, 4, 4), dtype=bool)
    chi = np.zeros((4, 4, 4))
    roi[0, 0, :] = True
    vessel[0, 0, 3] = vessel[3, 3, 3] = True
    chi[0, 0, :] = (0.1, 0.2, 0.3, 1.0)

    assert metrics.vessel_proportion(BinaryMask3(roi), BinaryMask3(vessel)) == 25.0
    with_vessels = metrics.masked_mean_susceptibility(
        Volume3(chi),
        BinaryMask3(roi),
        BinaryMask3(vessel),
        exclude_vessels=False,
    )
    without_vessels = metrics.masked_mean_susceptibility(
        Volume3(chi),
        BinaryMask3(roi),
        BinaryMask3(vessel),
        exclude_vessels=True,
    )
    assert with_vessels == pytest.approx(0.4)
    assert without_vessels == pytest.approx(0.2)

    with pytest.raises(EmptyRegionError):
        metrics.vessel_proportion(BinaryMask3(vessel & ~vessel), BinaryMask3(vessel))
    with pytest.raises(EmptyRegionError):
        metrics.masked_mean_susceptibility(
            Volume3(chi),
            BinaryMask3(roi),
            BinaryMask3(roi),
            exclude_vessels=True,
        )


def test_condition_regions() -> None:
    """Test that the vessel conditions split the brain."""
    brain = BinaryMask3(rng.random((8, 8, 8)) < 0.7)
    vessel = BinaryMask3(rng.random((8, 8, 8)) < 0.2)

    everything = metrics.condition_region(brain, vessel, "without_mask")
    outside = metrics.condition_region(brain, vessel, "with_mask")
    inside = metrics.condition_region(brain, vessel, "within_mask")
    assert np.array_equal(everything.data, brain.data)
    assert np.array_equal(outside.data | inside.data, brain.data)
    assert not (outside.data & inside.data).any()
    assert not (inside.data & ~vessel.data).any()

    with pytest.raises(InvalidParameterError):
        metrics.condition_region(brain, vessel, "near_mask")


def test_metrics_report() -> None:
    """Test the JSON layout and the validation of the report."""
    child = metrics.MetricsReport({"rmse": 0.5, "psnr": 12.0}, "with_mask")
    report = metrics.MetricsReport(
        {"dsc": 0.9},
        provenance={"pred": "pred.nii.gz"},
        children=[child],
    )
    assert report.to_dict() == {
        "dsc": 0.9,
        "provenance": {"pred": "pred.nii.gz"},
        "conditions": [{"rmse": 0.5, "psnr": 12.0, "condition": "with_mask"}],
    }
    assert metrics.MetricsReport().to_dict() == {}

    with pytest.raises(InvalidParameterError):
        metrics.MetricsReport({"dsc": 1.5})
    with pytest.raises(InvalidParameterError):
        metrics.MetricsReport(condition="everywhere")
