"""For pytest to detect the project's root directory, and the slow test switch."""

import pytest


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add the `--run-slow` option."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run the full size phantom tests",
    )


def pytest_collection_modifyitems(
    config: pytest.Config,
    items: list[pytest.Item],
) -> None:
    """Skip the tests marked as slow unless `--run-slow` is given."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
