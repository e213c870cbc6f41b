"""Testing the quality control images."""

from pathlib import Path

import numpy as np
import pytest
from PySide6 import QtGui

from chivessel.cli import overlays
from chivessel.exceptions import GeometryMismatchError
from chivessel.storage import OutputWriter
from chivessel.volume import BinaryMask3, Volume3

rng = np.random.default_rng(99)


def test_contour() -> None:
    """Test that only the rim of a square is outlined."""
    mask = np.zeros((7, 7), dtype=bool)
    mask[1:6, 1:6] = True
    rim = overlays.contour(mask)
    assert rim.sum() == 16
    assert not rim[2:5, 2:5].any()

    single = np.zeros((3, 3), dtype=bool)
    single[1, 1] = True
    assert np.array_equal(overlays.contour(single), single)


def test_to_gray() -> None:
    """Test the percentile window."""
    ramp = np.arange(100.0).reshape(10, 10)
    gray = overlays.to_gray(ramp)
    assert gray.dtype == np.uint8
    assert gray.min() == 0
    assert gray.max() == 255
    assert np.all(np.diff(gray.ravel().astype(int)) >= 0)

    assert not overlays.to_gray(np.full((4, 4), 3.0)).any()


def test_overlay_orientation() -> None:
    """Test that the first slice axis runs left to right from the bottom."""
    image = np.zeros((4, 3))
    mask = np.zeros((4, 3), dtype=bool)
    mask[0, 0] = True

    rgb = overlays.overlay_slice(image, mask)
    assert rgb.shape == (3, 4, 3)
    assert tuple(rgb[2, 0]) == overlays.CONTOUR_COLOR
    assert rgb[rgb != 0].size == 3

    qimage = overlays.to_qimage(rgb)
    assert (qimage.width(), qimage.height()) == (4, 3)
    color = qimage.pixelColor(0, 2)
    assert (color.red(), color.green(), color.blue()) == overlays.CONTOUR_COLOR
    assert qimage.pixelColor(1, 2).red() == 0


def test_render_overlays(tmp_path: Path) -> None:
    """Test the three PNG files of a map."""
    chi = Volume3(rng.normal(size=(8, 6, 4)))
    mask = BinaryMask3(rng.random((8, 6, 4)) < 0.2)

    writer = OutputWriter(tmp_path)
    overlays.render_overlays(writer, "para", chi, mask)
    writer.commit()

    sizes = {
        "sagittal": (6, 4),
        "coronal": (8, 4),
        "axial": (8, 6),
    }
    for plane, size in sizes.items():
        path = tmp_path / f"overlay_para_{plane}.png"
        image = QtGui.QImage(str(path))
        assert not image.isNull()
        assert (image.width(), image.height()) == size

    with pytest.raises(GeometryMismatchError):
        overlays.render_overlays(writer, "dia", chi, BinaryMask3(mask.data[:7]))
