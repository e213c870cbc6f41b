"""Some information about the package."""

APP_ID = "io.github.chivessel"
APP_NAME = "chivessel"

PROJECT_HOME_PAGE_URL = "https://github.com/chivessel/chivessel"
BUG_REPORT_URL = "https://github.com/chivessel/chivessel/issues/new/choose"

APP_VERSION = "0.1.0"
__author__ = "chivessel developers"
__maintainer__ = __author__
__license__ = "GPL-3.0"
__description__ = (
    "Vessel segmentation for chi-separation susceptibility maps:"
    " seed generation, vessel-geometry guided region growing and"
    " anisotropy based refinement, with a phantom generator and metrics."
)
