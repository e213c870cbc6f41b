"""Quality control images: mid slices of a map with the vessel mask contour."""

import numpy as np
from PySide6 import QtGui
from scipy import ndimage

from chivessel.exceptions import VolumeWriteError
from chivessel.storage import OutputWriter
from chivessel.volume import BinaryMask3, Volume3, check_same_geometry

# Plane name to the axis the slice is taken across.
PLANES = {"sagittal": 0, "coronal": 1, "axial": 2}

CONTOUR_COLOR = (255, 40, 40)


def contour(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbor."""
    return mask & ~ndimage.binary_erosion(mask, border_value=0)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Window a slice to its 1st and 99th percentiles as 8-bit gray."""
    low, high = np.percentile(image, [1, 99])
    if high <= low:
        return np.zeros(image.shape, dtype=np.uint8)
    scaled = (np.clip(image, low, high) - low) / (high - low)
    return np.round(scaled * 255).astype(np.uint8)


def overlay_slice(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """RGB rendering of a 2D slice with the mask outline on top."""
    gray = to_gray(image)
    rgb = np.repeat(gray[..., None], 3, axis=-1)
    rgb[contour(mask)] = CONTOUR_COLOR
    # First array axis runs left to right, second bottom to top.
    return np.ascontiguousarray(np.flipud(np.transpose(rgb, (1, 0, 2))))


def to_qimage(rgb: np.ndarray) -> QtGui.QImage:
    """Copy an (rows, columns, 3) uint8 array into a QImage."""
    rows, columns, _ = rgb.shape
    image = QtGui.QImage(
        rgb.tobytes(),
        columns,
        rows,
        3 * columns,
        QtGui.QImage.Format.Format_RGB888,
    )
    # The QImage only borrows the buffer until it's copied.
    return image.copy()


def render_overlays(
    writer: OutputWriter,
    name: str,
    chi: Volume3,
    mask: BinaryMask3,
) -> None:
    """Stage one PNG per plane, named overlay_<name>_<plane>.png."""
    check_same_geometry((name, chi), ("vessel mask", mask))
    for plane, axis in PLANES.items():
        index = chi.dims[axis] // 2
        image = np.take(chi.data, index, axis=axis)
        outline = np.take(mask.data, index, axis=axis)
        path = writer.stage_path(f"overlay_{name}_{plane}.png")
        if not to_qimage(overlay_slice(image, outline)).save(str(path), "PNG"):
            raise VolumeWriteError(path, "Qt could not encode the PNG image")
