"""Setup file for the library."""

from pathlib import Path

from setuptools import find_packages, setup

from chivessel.__about__ import (
    APP_VERSION,
    __author__,
    __description__,
    __license__,
    __maintainer__,
)

HERE = Path(__file__).parent

README = (HERE / "README.md").read_text()

URL = "https://github.com/chivessel/chivessel"
ISSUES = "https://github.com/chivessel/chivessel/issues"
CHANGELOG = "https://github.com/chivessel/chivessel/blob/main/CHANGELOG.md"

setup(
    name="chivessel",
    version=APP_VERSION,
    author=__author__,
    maintainer=__maintainer__,
    license=__license__,
    description=__description__,
    long_description_content_type="text/markdown",
    long_description=README,
    url=URL,
    project_urls={
        "Issues": ISSUES,
        "Changelog": CHANGELOG,
    },
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.9",
    entry_points={"console_scripts": ["chivessel = chivessel.__main__:main"]},
    keywords=[
        "vessel-segmentation",
        "chi-separation",
        "qsm",
        "susceptibility",
        "mri",
        "vesselness",
        "region-growing",
        "nifti",
    ],
    classifiers=[
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Healthcare Industry",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
    ],
)
