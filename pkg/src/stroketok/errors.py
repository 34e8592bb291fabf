"""Shared exception base so the CLI can map domain failures to exit code 1."""


class StroketokError(Exception):
    """Base class for all domain errors raised by this package."""
