"""Load, validate and echo the pipeline configuration."""

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .conversions import NotSupportedUnitError, unit_factor
from .exceptions import ConfigError, InvalidParameterError
from .filters import InverseHammingSpec
from .refine import RefineConfig
from .region_grow import GrowConfig
from .seeds import SeedConfig
from .storage import sha256_text
from .vesselness import MfatConfig

logger = logging.getLogger(__name__)

INPUT_KEYS = ("r2star", "chi_para", "chi_dia", "brain_mask")

# Flat key set of the config file with its defaults.
DEFAULTS: dict[str, object] = {
    "r2star": None,
    "chi_para": None,
    "chi_dia": None,
    "brain_mask": None,
    "out": None,
    "chi_units": "ppm",
    "k_large": 2.0,
    "k_small": 1.0,
    "slab_mm": 16.0,
    "mip_axis": 2,
    "stats_domain": "brain",
    "hamming_size": [80.0, 80.0, 80.0],
    "inpaint_max_iters": 400,
    "inpaint_tol": 1.0e-4,
    "sigmas": [0.25, 0.5, 0.75, 1.0],
    "tau_rho": 0.02,
    "tau_nu": 0.35,
    "delta": 0.3,
    "eigen_domain": "volume",
    "gamma1": 0.5,
    "gamma2": 0.5,
    "connectivity": 26,
    "restrict_to_brain": True,
    "use_intensity_similarity": True,
    "use_anisotropy": True,
    "use_intensity_limits": True,
    "aniso_thresh_para": 1.2e-3,
    "aniso_thresh_dia": 1.2e-3,
    "skip_refine": False,
    "write_union": True,
    "dump_intermediates": False,
    "emit_overlays": False,
    "threads": 1,
}

_PATH_KEYS = (*INPUT_KEYS, "out")
_STR_KEYS = ("chi_units", "stats_domain", "eigen_domain")
_INT_KEYS = ("mip_axis", "inpaint_max_iters", "connectivity", "threads")
_BOOL_KEYS = (
    "restrict_to_brain",
    "use_intensity_similarity",
    "use_anisotropy",
    "use_intensity_limits",
    "skip_refine",
    "write_union",
    "dump_intermediates",
    "emit_overlays",
)
_LIST_KEYS = ("hamming_size", "sigmas")


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_type(key: str, value: object, line: Optional[int]) -> object:
    """Return the value normalized to the type of its key."""
    if key in _PATH_KEYS:
        if value is None or isinstance(value, (str, Path)):
            return None if value is None else str(value)
        err = "expected a path"
    elif key in _STR_KEYS:
        if isinstance(value, str):
            return value
        err = "expected a string"
    elif key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        err = "expected true or false"
    elif key in _INT_KEYS:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        err = "expected an integer"
    elif key in _LIST_KEYS:
        numbers = isinstance(value, (list, tuple)) and all(map(_is_number, value))
        if numbers and value:
            return [float(v) for v in value]
        err = "expected a non-empty list of numbers"
    else:
        if _is_number(value):
            return float(value)
        err = "expected a number"
    raise ConfigError(f"{err}, got {value!r}", field=key, line=line)


@dataclass(frozen=True)
class InputPaths:
    """The four input maps of a segmentation run."""

    r2star: Optional[Path] = None
    chi_para: Optional[Path] = None
    chi_dia: Optional[Path] = None
    brain_mask: Optional[Path] = None

    def missing(self) -> list[str]:
        """Names of the inputs that weren't given."""
        return [name for name in INPUT_KEYS if getattr(self, name) is None]


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a segmentation run depends on."""

    inputs: InputPaths = field(default_factory=InputPaths)
    out: Optional[Path] = None
    chi_units: str = "ppm"
    seeds: SeedConfig = field(default_factory=SeedConfig)
    grow: GrowConfig = field(default_factory=GrowConfig)
    refine_para: RefineConfig = field(default_factory=RefineConfig)
    refine_dia: RefineConfig = field(default_factory=RefineConfig)
    skip_refine: bool = False
    write_union: bool = True
    dump_intermediates: bool = False
    emit_overlays: bool = False
    threads: int = 1

    @classmethod
    def from_flat(
        cls,
        flat: Mapping[str, object],
        lines: Optional[Mapping[str, int]] = None,
    ) -> "PipelineConfig":
        """Build a config from flat keys, defaults filling the gaps."""
        lines = lines or {}
        values = dict(DEFAULTS)
        for key, value in flat.items():
            if key not in DEFAULTS:
                raise ConfigError("unknown key", field=key, line=lines.get(key))
            values[key] = _check_type(key, value, lines.get(key))

        def fail(key: str, error: Exception) -> ConfigError:
            return ConfigError(str(error), field=key, line=lines.get(key))

        try:
            unit_factor(values["chi_units"])
        except NotSupportedUnitError as error:
            raise fail("chi_units", error) from error
        if values["threads"] < 1:
            error = InvalidParameterError("threads", values["threads"], "at least 1")
            raise fail("threads", error)

        key = ""
        try:
            key = "hamming_size"
            hamming = InverseHammingSpec(tuple(values["hamming_size"]))
            key = "sigmas"
            mfat = MfatConfig(
                tuple(values["sigmas"]),
                values["tau_rho"],
                values["tau_nu"],
                values["delta"],
            )
            key = "k_large"
            seeds = SeedConfig(
                k_large=values["k_large"],
                k_small=values["k_small"],
                slab_mm=values["slab_mm"],
                mip_axis=values["mip_axis"],
                stats_domain=values["stats_domain"],
                eigen_domain=values["eigen_domain"],
                inpaint_max_iters=values["inpaint_max_iters"],
                inpaint_tol=values["inpaint_tol"],
                hamming=hamming,
                mfat=mfat,
            )
            key = "gamma2"
            grow = GrowConfig(
                values["gamma1"],
                values["gamma2"],
                values["connectivity"],
                values["restrict_to_brain"],
                values["use_intensity_similarity"],
                values["use_anisotropy"],
                values["use_intensity_limits"],
            )
            key = "aniso_thresh_para"
            refine_para = RefineConfig(
                values["aniso_thresh_para"], values["connectivity"]
            )
            key = "aniso_thresh_dia"
            refine_dia = RefineConfig(
                values["aniso_thresh_dia"], values["connectivity"]
            )
        except InvalidParameterError as error:
            # Most parameter names of the component configs are file keys.
            name = error.name if error.name in DEFAULTS else key
            raise fail(name, error) from error

        def as_path(name: str) -> Optional[Path]:
            return None if values[name] is None else Path(values[name])

        return cls(
            inputs=InputPaths(*(as_path(name) for name in INPUT_KEYS)),
            out=as_path("out"),
            chi_units=values["chi_units"],
            seeds=seeds,
            grow=grow,
            refine_para=refine_para,
            refine_dia=refine_dia,
            skip_refine=values["skip_refine"],
            write_union=values["write_union"],
            dump_intermediates=values["dump_intermediates"],
            emit_overlays=values["emit_overlays"],
            threads=values["threads"],
        )

    def to_flat(self) -> dict[str, object]:
        """Inverse of `from_flat`."""

        def as_str(path: Optional[Path]) -> Optional[str]:
            return None if path is None else str(path)

        return {
            **{name: as_str(getattr(self.inputs, name)) for name in INPUT_KEYS},
            "out": as_str(self.out),
            "chi_units": self.chi_units,
            "k_large": self.seeds.k_large,
            "k_small": self.seeds.k_small,
            "slab_mm": self.seeds.slab_mm,
            "mip_axis": self.seeds.mip_axis,
            "stats_domain": self.seeds.stats_domain,
            "hamming_size": list(self.seeds.hamming.size),
            "inpaint_max_iters": self.seeds.inpaint_max_iters,
            "inpaint_tol": self.seeds.inpaint_tol,
            "sigmas": list(self.seeds.mfat.sigmas),
            "tau_rho": self.seeds.mfat.tau_rho,
            "tau_nu": self.seeds.mfat.tau_nu,
            "delta": self.seeds.mfat.delta,
            "eigen_domain": self.seeds.eigen_domain,
            "gamma1": self.grow.gamma1,
            "gamma2": self.grow.gamma2,
            "connectivity": self.grow.connectivity,
            "restrict_to_brain": self.grow.restrict_to_brain,
            "use_intensity_similarity": self.grow.use_intensity_similarity,
            "use_anisotropy": self.grow.use_anisotropy,
            "use_intensity_limits": self.grow.use_intensity_limits,
            "aniso_thresh_para": self.refine_para.aniso_thresh,
            "aniso_thresh_dia": self.refine_dia.aniso_thresh,
            "skip_refine": self.skip_refine,
            "write_union": self.write_union,
            "dump_intermediates": self.dump_intermediates,
            "emit_overlays": self.emit_overlays,
            "threads": self.threads,
        }

    def with_overrides(self, **overrides: object) -> "PipelineConfig":
        """Return a copy with some flat keys replaced; `None` values are ignored."""
        flat = self.to_flat()
        flat.update(
            {key: value for key, value in overrides.items() if value is not None}
        )
        return PipelineConfig.from_flat(flat)

    def echo(self) -> dict[str, object]:
        """Keys that determine the outputs, as echoed in the manifest and hashed."""
        flat = self.to_flat()
        # Where the files live and how many threads ran don't change the results.
        for key in (*_PATH_KEYS, "threads", "emit_overlays", "dump_intermediates"):
            flat.pop(key)
        return flat

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of `echo`."""
        text = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return sha256_text(text)


def read_yaml_mapping(
    path: Union[str, Path],
) -> tuple[dict[str, object], dict[str, int]]:
    """
    Parse a YAML mapping file.

    Returns the mapping and the 1-based line of every top-level key.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"can't read `{path}`: {error.strerror or error}") from error

    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        problem = getattr(error, "problem", None) or str(error)
        raise ConfigError(f"`{path}` isn't valid YAML: {problem}", line=line) from error

    if data is None:
        return {}, {}
    if not isinstance(data, dict) or not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"`{path}` must hold a mapping of keys to values", line=1)

    lines = {key_node.value: key_node.start_mark.line + 1 for key_node, _ in node.value}
    for key in data:
        if not isinstance(key, str):
            err_msg = f"keys must be strings, got {key!r}"
            raise ConfigError(err_msg, line=lines.get(str(key)))
    return data, lines


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """
    Read a pipeline config file.

    Relative paths are taken from the directory of the file.
    """
    path = Path(path)
    data, lines = read_yaml_mapping(path)
    for key in _PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(path.parent.joinpath(value))

    config = PipelineConfig.from_flat(data, lines)
    logger.debug("Loaded the config from %s.", path)
    return config
