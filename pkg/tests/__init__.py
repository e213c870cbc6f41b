"""Tests of the chivessel package."""
