"""Testing the susceptibility unit conversions."""

import numpy as np
import pytest

from chivessel import conversions


def test_to_ppm() -> None:
    """Test the conversion of ppm and ppb maps."""
    values = np.array([0.0, 25.0, -120.0])
    assert conversions.to_ppm(values, "ppm") is values
    assert np.allclose(conversions.to_ppm(values, "ppb"), [0.0, 0.025, -0.12])


def test_anisotropy_threshold_scaling() -> None:
    """Test that thresholds scale with the square of the unit ratio."""
    assert conversions.scale_anisotropy_threshold(
        1.2e-3,
        "ppm",
        "ppb",
    ) == pytest.approx(1.2e3)
    assert conversions.scale_anisotropy_threshold(
        1.2e3,
        "ppb",
        "ppm",
    ) == pytest.approx(1.2e-3)
    assert conversions.scale_anisotropy_threshold(0.5, "ppm", "ppm") == 0.5


def test_not_supported_units() -> None:
    """Test the error on unknown units."""
    with pytest.raises(conversions.NotSupportedUnitError, match="ppt"):
        conversions.unit_factor("ppt")
    with pytest.raises(conversions.NotSupportedUnitError):
        conversions.to_ppm(np.zeros(3), "ppt")
    with pytest.raises(conversions.NotSupportedUnitError):
        conversions.scale_anisotropy_threshold(1.0, "ppm", "")
