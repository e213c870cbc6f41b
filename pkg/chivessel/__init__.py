"""Init file for chivessel module."""
