"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in ``mclab.cli``; library code raises
these and never calls ``sys.exit``.
"""

from __future__ import annotations


class McLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(McLabError):
    """Invalid configuration value or combination (CLI exit code 3)."""


class ValidationError(McLabError):
    """A data invariant was violated (CLI exit code 3)."""


class ManifestParseError(ValidationError):
    """Malformed corpus manifest; carries the offending 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"manifest line {line_number}: {message}")
        self.line_number = line_number


class IntegrityError(ValidationError):
    """A manifest references data that is missing or inconsistent on disk."""

    def __init__(self, image_id: str, message: str):
        super().__init__(f"image {image_id!r}: {message}")
        self.image_id = image_id


class DataError(McLabError):
    """A dataset is unusable for the requested protocol (CLI exit code 3)."""


class DimensionError(McLabError):
    """Array shape mismatch; names expected and actual shapes."""

    def __init__(self, expected, actual, what: str = "input"):
        super().__init__(f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)


class DegenerateBatchError(McLabError):
    """A batch cannot feed any loss term, or a contrastive batch has N < 2."""


class NumericError(McLabError):
    """Non-finite values where finite ones are required (CLI exit code 4)."""


class UndefinedMetricError(McLabError):
    """A metric is undefined for the given labels (e.g. single-class AUROC)."""
