"""The command line part of the application."""
