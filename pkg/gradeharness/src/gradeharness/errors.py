"""Tagged error hierarchy; tags are stable identifiers for tests and the CLI."""

from __future__ import annotations


class HarnessError(Exception):
    def __init__(self, message: str, tag: str):
        super().__init__(message)
        self.tag = tag

    def __str__(self) -> str:
        return f"{self.tag}: {self.args[0]}"


class ConfigError(HarnessError):
    """Bad configuration or unknown option; CLI exit code 2."""


class DataError(HarnessError):
    """Unreadable/ill-formed cubes or manifests; CLI exit code 3."""


class TrainingError(HarnessError):
    """Split or optimization states training cannot proceed from; exit code 4."""
