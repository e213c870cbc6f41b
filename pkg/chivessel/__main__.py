"""A launcher for the command line interface."""

from sys import argv

from .cli.main import main_cli


def main() -> int:
    """Entry point for the application."""
    return main_cli(argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
