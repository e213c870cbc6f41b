"""Some common unit conversions for susceptibility maps."""

import numpy as np

# Factor that turns a value in the given unit into ppm.
susceptibility_units = {
    "ppm": 1.0,
    "ppb": 1e-3,
}


class NotSupportedUnitError(ValueError):
    """Error to be raised when an unknown susceptibility unit is passed."""

    exit_code = 2

    def __init__(self, unit: str) -> None:
        """Error initialization function."""
        super().__init__(
            f"`{unit}` isn't a supported susceptibility unit,"
            f" use one of {sorted(susceptibility_units)}.",
        )


def unit_factor(unit: str) -> float:
    """Return the factor that converts `unit` to ppm."""
    try:
        return susceptibility_units[unit]
    except KeyError:
        raise NotSupportedUnitError(unit) from None


def to_ppm(values: np.ndarray, unit: str) -> np.ndarray:
    """Convert susceptibility values given in `unit` to ppm."""
    factor = unit_factor(unit)
    if factor == 1.0:
        return values
    return values * factor


def scale_anisotropy_threshold(threshold: float, from_unit: str, to_unit: str) -> float:
    """
    Express an anisotropy threshold in other susceptibility units.

    The anisotropy |l2 * l3| is a product of two second derivatives,
    so it scales with the square of the intensity unit.
    """
    ratio = unit_factor(from_unit) / unit_factor(to_unit)
    return threshold * ratio**2
