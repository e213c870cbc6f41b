"""Synthetic vessel scenes with known ground truth."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from .config import read_yaml_mapping
from .exceptions import ConfigError, InvalidParameterError
from .volume import BinaryMask3, Volume3

logger = logging.getLogger(__name__)

MAPS = ("r2star", "chi_para", "chi_dia")

# Blobs are rasterized out to this many radii from their center.
REACH = 3.0


@dataclass(frozen=True)
class TubeSpec:
    """A tube along a polyline, in millimeters."""

    path: tuple[tuple[float, float, float], ...]
    radius: float
    intensity: float = 1.0
    gains: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class BlobSpec:
    """A sphere, in millimeters; it never shows on the chi_dia map."""

    center: tuple[float, float, float]
    radius: float
    intensity: float = 1.0
    gains: tuple[float, float] = (1.0, 1.0)


@dataclass(frozen=True)
class PhantomSpec:
    """Grid, primitives and noise of a scene."""

    shape: tuple[int, int, int] = (128, 128, 128)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tubes: tuple[TubeSpec, ...] = ()
    blobs: tuple[BlobSpec, ...] = ()
    noise: float = 0.02
    brain_fraction: float = 0.45
    seed: int = 0

    def to_dict(self) -> dict[str, object]:
        """Plain data for YAML."""
        return {
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "noise": self.noise,
            "brain_fraction": self.brain_fraction,
            "seed": self.seed,
            "tubes": [
                {
                    "path": [list(point) for point in tube.path],
                    "radius": tube.radius,
                    "intensity": tube.intensity,
                    "gains": dict(zip(MAPS, tube.gains)),
                }
                for tube in self.tubes
            ],
            "blobs": [
                {
                    "center": list(blob.center),
                    "radius": blob.radius,
                    "intensity": blob.intensity,
                    "gains": dict(zip(MAPS[:2], blob.gains)),
                }
                for blob in self.blobs
            ],
        }

    def to_yaml(self) -> str:
        """Render the scene in its YAML file format."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


@dataclass(frozen=True)
class PhantomScene:
    """Contrast maps, brain mask and ground truth of a synthetic scene."""

    r2star_like: Volume3
    chi_para_like: Volume3
    chi_dia_like: Volume3
    brain: BinaryMask3
    gt_vessels: BinaryMask3
    gt_blobs: BinaryMask3
    rng_seed: int
    spec: PhantomSpec = field(repr=False)


def default_scene_spec() -> PhantomSpec:
    """A 128 cube with tubes of radius 3, 2 and 1 and two large blobs."""
    return PhantomSpec(
        tubes=(
            TubeSpec(((64.0, 30.0, 30.0), (64.0, 64.0, 64.0), (64.0, 98.0, 90.0)), 3.0),
            TubeSpec(((30.0, 40.0, 64.0), (98.0, 50.0, 64.0)), 2.0),
            TubeSpec(((40.0, 90.0, 40.0), (90.0, 100.0, 90.0)), 1.0),
        ),
        blobs=(
            BlobSpec((40.0, 64.0, 96.0), 6.0),
            BlobSpec((90.0, 40.0, 40.0), 10.0),
        ),
    )


def _tube_profile(
    distance: np.ndarray,
    radius: float,
    intensity: float,
) -> np.ndarray:
    """
    Flat core out to half the radius, then a Gaussian falloff of width radius / 2.

    The falloff ends at the radius, down to exp(-1/2) of the core intensity,
    and nothing is drawn beyond it.
    """
    width = radius / 2.0
    falloff = np.exp(-((distance - width) ** 2) / (2.0 * width**2))
    inside = np.where(distance <= width, 1.0, falloff)
    return intensity * np.where(distance <= radius, inside, 0.0)


def _blob_profile(distance: np.ndarray, radius: float, intensity: float) -> np.ndarray:
    """Flat core inside the radius with a Gaussian rim of width radius / 2."""
    width = radius / 2.0
    rim = np.exp(-((distance - radius) ** 2) / (2.0 * width**2))
    return intensity * np.where(distance <= radius, 1.0, rim)


def _check_inside(points: np.ndarray, volume: Volume3, name: str) -> None:
    extent = (np.asarray(volume.dims) - 1) * np.asarray(volume.spacing)
    if np.any(points < 0) or np.any(points > extent):
        raise InvalidParameterError(
            name,
            points.tolist(),
            f"inside the grid extent {extent.tolist()} mm",
        )


def _box(
    low: np.ndarray,
    high: np.ndarray,
    volume: Volume3,
) -> tuple[tuple[slice, ...], np.ndarray]:
    """Slices of the voxels within [low, high] mm and their coordinates in mm."""
    spacing = np.asarray(volume.spacing)
    first = np.maximum(np.floor(low / spacing).astype(int), 0)
    last = np.minimum(np.ceil(high / spacing).astype(int), np.asarray(volume.dims) - 1)
    box = tuple(slice(a, b + 1) for a, b in zip(first, last))
    axes = [np.arange(a, b + 1) * s for a, b, s in zip(first, last, spacing)]
    return box, np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _distance_to_segment(
    points: np.ndarray,
    start: np.ndarray,
    end: np.ndarray,
) -> np.ndarray:
    direction = end - start
    t = np.clip(((points - start) @ direction) / (direction @ direction), 0.0, 1.0)
    return np.linalg.norm(points - start - t[..., None] * direction, axis=-1)


def generate_tube(
    path: Sequence[Sequence[float]],
    radius: float,
    intensity: float,
    into: Volume3,
) -> tuple[Volume3, BinaryMask3]:
    """Draw a tube along a polyline, masking voxels within `radius` of it."""
    if not radius > 0:
        raise InvalidParameterError("radius", radius, "a positive length")
    if not (np.isfinite(intensity) and intensity >= 0):
        raise InvalidParameterError("intensity", intensity, "a non-negative value")
    points = np.asarray(path, dtype=np.float64).reshape(-1, 3)
    _check_inside(points, into, "path")

    segments = [(a, b) for a, b in zip(points, points[1:]) if np.any(a != b)]
    if not segments:
        return into, BinaryMask3.empty_like(into)

    box, coords = _box(points.min(axis=0) - radius, points.max(axis=0) + radius, into)
    distance = np.min([_distance_to_segment(coords, a, b) for a, b in segments], axis=0)

    data = into.data.copy()
    data[box] = np.maximum(data[box], _tube_profile(distance, radius, intensity))
    mask = np.zeros(into.dims, dtype=bool)
    mask[box] = distance <= radius
    return into.with_data(data), BinaryMask3.empty_like(into).with_data(mask)


def generate_blob(
    center: Sequence[float],
    radius: float,
    intensity: float,
    into: Volume3,
) -> tuple[Volume3, BinaryMask3]:
    """Add a Gaussian rimmed sphere; overlapping blobs add up."""
    if not radius > 0:
        raise InvalidParameterError("radius", radius, "a positive length")
    center = np.asarray(center, dtype=np.float64)
    _check_inside(center, into, "center")

    reach = REACH * radius
    box, coords = _box(center - reach, center + reach, into)
    distance = np.linalg.norm(coords - center, axis=-1)

    data = into.data.copy()
    data[box] += _blob_profile(distance, radius, intensity)
    mask = np.zeros(into.dims, dtype=bool)
    mask[box] = distance <= radius
    return into.with_data(data), BinaryMask3.empty_like(into).with_data(mask)


def _brain_ellipsoid(spec: PhantomSpec) -> np.ndarray:
    spacing = np.asarray(spec.spacing)
    center = (np.asarray(spec.shape) - 1) * spacing / 2.0
    semi_axes = spec.brain_fraction * np.asarray(spec.shape) * spacing
    axes = [
        ((np.arange(n) * s - c) / a) ** 2
        for n, s, c, a in zip(spec.shape, spacing, center, semi_axes)
    ]
    inside = axes[0][:, None, None] + axes[1][None, :, None] + axes[2][None, None, :]
    return inside <= 1.0


def generate_scene(spec: PhantomSpec, rng_seed: Optional[int] = None) -> PhantomScene:
    """Rasterize every primitive into the three maps and add seeded noise."""
    seed = spec.seed if rng_seed is None else rng_seed
    empty = Volume3(np.zeros(spec.shape), spec.spacing)
    brain = BinaryMask3(_brain_ellipsoid(spec), spec.spacing)

    maps = {name: empty for name in MAPS}
    vessels = np.zeros(spec.shape, dtype=bool)
    blobs = np.zeros(spec.shape, dtype=bool)

    for n, tube in enumerate(spec.tubes):
        mask = None
        for name, gain in zip(MAPS, tube.gains):
            maps[name], mask = generate_tube(
                tube.path, tube.radius, tube.intensity * gain, maps[name]
            )
        if np.any(mask.data & ~brain.data):
            raise ConfigError(
                "the tube leaves the brain ellipsoid",
                field=f"tubes[{n}]",
            )
        vessels |= mask.data

    for n, blob in enumerate(spec.blobs):
        mask = None
        for name, gain in zip(MAPS[:2], blob.gains):
            maps[name], mask = generate_blob(
                blob.center, blob.radius, blob.intensity * gain, maps[name]
            )
        if np.any(mask.data & ~brain.data):
            raise ConfigError(
                "the blob leaves the brain ellipsoid",
                field=f"blobs[{n}]",
            )
        blobs |= mask.data

    if np.any(vessels & blobs):
        raise ConfigError("vessel and blob ground truths overlap", field="blobs")

    peak = max((tube.intensity for tube in spec.tubes), default=1.0)
    rng = np.random.default_rng(seed)
    noisy = {
        name: maps[name].with_data(
            maps[name].data + rng.normal(0.0, spec.noise * peak, spec.shape)
        )
        for name in MAPS
    }

    logger.info(
        "Phantom: %d tubes (%d voxels), %d blobs (%d voxels), seed %d.",
        len(spec.tubes),
        int(vessels.sum()),
        len(spec.blobs),
        int(blobs.sum()),
        seed,
    )
    return PhantomScene(
        noisy["r2star"],
        noisy["chi_para"],
        noisy["chi_dia"],
        brain,
        brain.with_data(vessels),
        brain.with_data(blobs),
        seed,
        spec,
    )


def _triple(
    value: object,
    name: str,
    line: Optional[int],
) -> tuple[float, float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 3):
        raise ConfigError("expected three numbers", field=name, line=line)
    return tuple(_number(v, name, line) for v in value)


def _number(value: object, name: str, line: Optional[int]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=name, line=line)
    return float(value)


def _gains(
    value: object,
    names: tuple[str, ...],
    field_name: str,
    line: Optional[int],
) -> tuple[float, ...]:
    if value is None:
        return (1.0,) * len(names)
    if not isinstance(value, Mapping) or set(value) - set(names):
        raise ConfigError(
            f"expected a mapping with keys among {list(names)}",
            field=field_name,
            line=line,
        )
    return tuple(
        _number(value.get(name, 1.0), f"{field_name}.{name}", line) for name in names
    )


def _fields(
    item: object,
    allowed: set[str],
    name: str,
    line: Optional[int],
) -> Mapping[str, object]:
    if not isinstance(item, Mapping):
        raise ConfigError("expected a mapping", field=name, line=line)
    unknown = set(item) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=name, line=line)
    return item


def spec_from_dict(
    data: Mapping[str, object],
    lines: Optional[Mapping[str, int]] = None,
) -> PhantomSpec:
    """Validate plain data into a scene spec."""
    lines = lines or {}
    known = {"shape", "spacing", "tubes", "blobs", "noise", "brain_fraction", "seed"}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", field=key, line=lines.get(key))

    defaults = PhantomSpec()
    shape = data.get("shape", list(defaults.shape))
    if not (
        isinstance(shape, (list, tuple))
        and len(shape) == 3
        and all(isinstance(n, int) and not isinstance(n, bool) and n > 0 for n in shape)
    ):
        raise ConfigError(
            "expected three positive integers",
            field="shape",
            line=lines.get("shape"),
        )

    tubes = []
    for n, item in enumerate(data.get("tubes") or []):
        name, line = f"tubes[{n}]", lines.get("tubes")
        item = _fields(item, {"path", "radius", "intensity", "gains"}, name, line)
        path = item.get("path")
        if not isinstance(path, (list, tuple)) or not path:
            raise ConfigError(
                "expected a list of points",
                field=f"{name}.path",
                line=line,
            )
        tubes.append(
            TubeSpec(
                tuple(_triple(point, f"{name}.path", line) for point in path),
                _number(item.get("radius"), f"{name}.radius", line),
                _number(item.get("intensity", 1.0), f"{name}.intensity", line),
                _gains(item.get("gains"), MAPS, f"{name}.gains", line),
            ),
        )

    blobs = []
    for n, item in enumerate(data.get("blobs") or []):
        name, line = f"blobs[{n}]", lines.get("blobs")
        item = _fields(item, {"center", "radius", "intensity", "gains"}, name, line)
        blobs.append(
            BlobSpec(
                _triple(item.get("center"), f"{name}.center", line),
                _number(item.get("radius"), f"{name}.radius", line),
                _number(item.get("intensity", 1.0), f"{name}.intensity", line),
                _gains(item.get("gains"), MAPS[:2], f"{name}.gains", line),
            ),
        )

    seed = data.get("seed", defaults.seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(
            "expected a non-negative integer",
            field="seed",
            line=lines.get("seed"),
        )
    noise = _number(data.get("noise", defaults.noise), "noise", lines.get("noise"))
    if noise < 0:
        raise ConfigError(
            "expected a non-negative level",
            field="noise",
            line=lines.get("noise"),
        )
    fraction = _number(
        data.get("brain_fraction", defaults.brain_fraction),
        "brain_fraction",
        lines.get("brain_fraction"),
    )
    if not 0 < fraction <= 0.5:
        raise ConfigError(
            "expected a value in (0, 0.5]",
            field="brain_fraction",
            line=lines.get("brain_fraction"),
        )

    spacing = _triple(
        data.get("spacing", list(defaults.spacing)),
        "spacing",
        lines.get("spacing"),
    )
    if not all(s > 0 for s in spacing):
        raise ConfigError(
            "expected positive lengths",
            field="spacing",
            line=lines.get("spacing"),
        )

    return PhantomSpec(
        tuple(shape),
        spacing,
        tuple(tubes),
        tuple(blobs),
        noise,
        fraction,
        seed,
    )


def load_phantom_spec(path: Union[str, Path]) -> PhantomSpec:
    """Read a scene spec file."""
    data, lines = read_yaml_mapping(path)
    return spec_from_dict(data, lines)
